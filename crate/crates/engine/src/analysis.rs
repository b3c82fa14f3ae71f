//! Lag analysis between a driving signal and a response.

/// Pearson correlation of `x[t - lag]` with `y[t]`.
pub fn lagged_correlation(x: &[f64], y: &[f64], lag: usize) -> f64 {
    let n = x.len().min(y.len());
    if lag >= n {
        return 0.0;
    }
    let a = &x[..n - lag];
    let b = &y[lag..n];
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        sab += (u - ma) * (v - mb);
        saa += (u - ma).powi(2);
        sbb += (v - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Correlation profile over lags `0..=max_lag`, averaged across series pairs.
pub fn mean_correlation_profile(pairs: &[(Vec<f64>, Vec<f64>)], max_lag: usize) -> Vec<f64> {
    let mut prof = vec![0.0; max_lag + 1];
    for (x, y) in pairs {
        for (lag, p) in prof.iter_mut().enumerate() {
            *p += lagged_correlation(x, y, lag);
        }
    }
    let n = pairs.len().max(1) as f64;
    prof.iter_mut().for_each(|p| *p /= n);
    prof
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_shift() {
        let x: Vec<f64> = (0..500).map(|k| ((k * 7919) % 101) as f64).collect();
        let y: Vec<f64> = (0..500)
            .map(|k| if k >= 37 { 2.0 * x[k - 37] + 1.0 } else { 0.0 })
            .collect();
        let prof = mean_correlation_profile(&[(x, y)], 80);
        assert_eq!(argmax(&prof), 37);
        assert!((prof[37] - 1.0).abs() < 1e-9);
    }
}
