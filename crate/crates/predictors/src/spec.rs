use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Upper bound on trainable parameters for every model.
pub const PARAM_BUDGET: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AgileMlp,
    HistoryMlp,
    DelayEmbedding,
    Gru,
    Esn,
    CrossAttention,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::AgileMlp,
        ModelKind::HistoryMlp,
        ModelKind::DelayEmbedding,
        ModelKind::Gru,
        ModelKind::Esn,
        ModelKind::CrossAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AgileMlp => "agile_mlp",
            ModelKind::HistoryMlp => "history_mlp",
            ModelKind::DelayEmbedding => "delay_embedding",
            ModelKind::Gru => "gru",
            ModelKind::Esn => "esn",
            ModelKind::CrossAttention => "cross_attention",
        }
    }

    /// Models that see more than the current observation.
    pub fn has_memory(self) -> bool {
        self != ModelKind::AgileMlp
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// `snapshots` observations spaced evenly over `window` seconds, the most
/// recent one `gap` seconds before the prediction time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub snapshots: usize,
    pub window: f64,
    pub gap: f64,
}

impl HistoryWindow {
    /// Lag of every snapshot in whole samples at `rate` Hz, most recent first.
    pub fn lag_steps(&self, rate: f64) -> Vec<usize> {
        let k = self.snapshots;
        (0..k)
            .map(|i| {
                let spacing = if k > 1 {
                    self.window / (k - 1) as f64
                } else {
                    0.0
                };
                ((self.gap + i as f64 * spacing) * rate).round() as usize
            })
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        if self.snapshots == 0 {
            return Err("history needs at least one snapshot".into());
        }
        if !(self.window >= 0.0 && self.gap >= 0.0) || !(self.window + self.gap).is_finite() {
            return Err("history window and gap must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgileSpec {
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistorySpec {
    pub history: HistoryWindow,
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub history: HistoryWindow,
    /// Most recent snapshots excluded from the delay kernel.
    pub mask: usize,
    /// Initial kernel centre and width [s].
    pub mu0: f64,
    pub sigma0: f64,
    pub selector_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    /// Also feed the current observation to the head.
    #[serde(default = "yes")]
    pub head_sees_current: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruSpec {
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsnSpec {
    pub reservoir: usize,
    pub density: f64,
    pub spectral_radius: f64,
    pub leak: f64,
    pub ridge: f64,
    /// Leading steps of every episode dropped from the readout fit.
    pub washout: usize,
    pub input_scale: f64,
    /// Keep every n-th post-washout state when fitting the readout.
    pub fit_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionSpec {
    pub history: HistoryWindow,
    pub embed: usize,
    pub heads: usize,
    pub head_hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    AgileMlp(AgileSpec),
    HistoryMlp(HistorySpec),
    DelayEmbedding(DelaySpec),
    Gru(GruSpec),
    Esn(EsnSpec),
    CrossAttention(AttentionSpec),
}

impl PredictorSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        let window = |snapshots, gap| HistoryWindow {
            snapshots,
            window: 0.8,
            gap,
        };
        match kind {
            ModelKind::AgileMlp => PredictorSpec::AgileMlp(AgileSpec {
                hidden: vec![64, 64, 64],
            }),
            ModelKind::HistoryMlp => PredictorSpec::HistoryMlp(HistorySpec {
                history: window(20, 0.0),
                hidden: vec![64, 64],
            }),
            ModelKind::DelayEmbedding => PredictorSpec::DelayEmbedding(DelaySpec {
                history: window(40, 0.0),
                mask: 5,
                mu0: 0.2,
                sigma0: 0.05,
                selector_hidden: vec![32, 32],
                head_hidden: vec![64, 64],
                head_sees_current: true,
            }),
            ModelKind::Gru => PredictorSpec::Gru(GruSpec { hidden: 48 }),
            ModelKind::Esn => PredictorSpec::Esn(EsnSpec {
                reservoir: 1000,
                density: 0.02,
                spectral_radius: 0.9,
                leak: 0.3,
                ridge: 1e-4,
                washout: 50,
                input_scale: 0.5,
                fit_stride: 1,
            }),
            ModelKind::CrossAttention => PredictorSpec::CrossAttention(AttentionSpec {
                history: window(40, 0.0),
                embed: 32,
                heads: 4,
                head_hidden: 64,
            }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            PredictorSpec::AgileMlp(_) => ModelKind::AgileMlp,
            PredictorSpec::HistoryMlp(_) => ModelKind::HistoryMlp,
            PredictorSpec::DelayEmbedding(_) => ModelKind::DelayEmbedding,
            PredictorSpec::Gru(_) => ModelKind::Gru,
            PredictorSpec::Esn(_) => ModelKind::Esn,
            PredictorSpec::CrossAttention(_) => ModelKind::CrossAttention,
        }
    }

    /// Window of past observations a window model reads, if any.
    pub fn history(&self) -> Option<HistoryWindow> {
        match self {
            PredictorSpec::AgileMlp(_) => Some(HistoryWindow {
                snapshots: 1,
                window: 0.0,
                gap: 0.0,
            }),
            PredictorSpec::HistoryMlp(s) => Some(s.history),
            PredictorSpec::DelayEmbedding(s) => Some(s.history),
            PredictorSpec::CrossAttention(s) => Some(s.history),
            PredictorSpec::Gru(_) | PredictorSpec::Esn(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let widths = |w: &[usize]| {
            if w.contains(&0) {
                Err("hidden widths must be positive".to_string())
            } else {
                Ok(())
            }
        };
        match self {
            PredictorSpec::AgileMlp(s) => widths(&s.hidden),
            PredictorSpec::HistoryMlp(s) => {
                s.history.validate()?;
                widths(&s.hidden)
            }
            PredictorSpec::DelayEmbedding(s) => {
                s.history.validate()?;
                if s.mask >= s.history.snapshots {
                    return Err(format!(
                        "mask {} leaves no snapshots out of {}",
                        s.mask, s.history.snapshots
                    ));
                }
                if !(s.mu0 > 0.0 && s.sigma0 > 0.0) {
                    return Err("mu0 and sigma0 must be positive".into());
                }
                widths(&s.selector_hidden)?;
                widths(&s.head_hidden)
            }
            PredictorSpec::Gru(s) => widths(&[s.hidden]),
            PredictorSpec::Esn(s) => {
                if s.reservoir == 0 || s.fit_stride == 0 {
                    return Err("reservoir size and fit stride must be positive".into());
                }
                if !(s.density > 0.0 && s.density <= 1.0) {
                    return Err(format!("density must lie in (0, 1], got {}", s.density));
                }
                if !(s.leak > 0.0 && s.leak <= 1.0) {
                    return Err(format!("leak must lie in (0, 1], got {}", s.leak));
                }
                if !(s.spectral_radius > 0.0 && s.ridge >= 0.0 && s.input_scale > 0.0) {
                    return Err(
                        "spectral radius and input scale must be positive, ridge non-negative"
                            .into(),
                    );
                }
                Ok(())
            }
            PredictorSpec::CrossAttention(s) => {
                s.history.validate()?;
                if s.heads == 0 || s.embed % s.heads != 0 {
                    return Err(format!(
                        "embed {} must split evenly into {} heads",
                        s.embed, s.heads
                    ));
                }
                widths(&[s.embed, s.head_hidden])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lags_are_evenly_spaced() {
        let w = HistoryWindow {
            snapshots: 5,
            window: 0.4,
            gap: 0.05,
        };
        assert_eq!(w.lag_steps(100.0), vec![5, 15, 25, 35, 45]);
        let single = HistoryWindow {
            snapshots: 1,
            window: 0.8,
            gap: 0.0,
        };
        assert_eq!(single.lag_steps(100.0), vec![0]);
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let spec = PredictorSpec::default_for(k);
            assert_eq!(spec.kind(), k);
            spec.validate().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<PredictorSpec>(&json).unwrap(), spec);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
