use wake_core::Real;
use wake_engine::OBS_DIM;

/// Appends the snapshots `stream[t - lag]` for every lag, most recent first,
/// to `out`. Snapshots before the start of the stream are zero.
pub fn build_history_input<T: Real>(
    stream: &[[T; OBS_DIM]],
    t: usize,
    lags: &[usize],
    out: &mut Vec<T>,
) {
    for &lag in lags {
        match t.checked_sub(lag) {
            Some(i) => out.extend_from_slice(&stream[i]),
            None => out.extend(std::iter::repeat_n(T::zero(), OBS_DIM)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_before_start() {
        let stream: Vec<[f64; OBS_DIM]> = (0..3).map(|i| [i as f64 + 1.0; OBS_DIM]).collect();
        let mut out = Vec::new();
        build_history_input(&stream, 0, &[0, 1, 2, 3, 4], &mut out);
        assert_eq!(out.len(), 5 * OBS_DIM);
        assert!(out[..OBS_DIM].iter().all(|&v| v == 1.0));
        assert!(out[OBS_DIM..].iter().all(|&v| v == 0.0));
        out.clear();
        build_history_input(&stream, 2, &[0, 2], &mut out);
        assert_eq!(out[0], 3.0);
        assert_eq!(out[OBS_DIM], 1.0);
    }
}
