//! Pipeline configuration: one JSON file with a section per stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wake_engine::ScenarioConfig;
use wake_predictors::{ModelKind, PredictorSpec, TrainConfig};

use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub models: Vec<ModelKind>,
    /// Worker threads per stage; 0 uses every core.
    pub jobs: usize,
    /// Exit with the acceptance code when a checked property fails.
    pub gate: bool,
    pub generate: GenerateConfig,
    pub train: TrainStage,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub introspect: IntrospectConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub scenario: ScenarioConfig,
    /// Nominal episodes in total, split into train, validation and test.
    pub episodes: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Episode `i` of the nominal corpus uses seed `seed + i`.
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainStage {
    pub settings: TrainConfig,
    /// Replaces `settings` for the listed kinds.
    pub per_model: BTreeMap<ModelKind, TrainConfig>,
    /// Replaces the default architecture for the listed kinds.
    pub specs: BTreeMap<ModelKind, PredictorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub closed_loop_episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    /// Physics perturbation fractions, one test corpus each.
    pub tiers: Vec<f64>,
    /// Test episodes per tier; defaults to the nominal test split size.
    pub episodes: Option<usize>,
    pub closed_loop_episodes: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrospectConfig {
    /// Vertical separations [m] at which a delay model is retrained.
    pub separations: Vec<f64>,
    pub train_episodes: usize,
    pub val_episodes: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seeds: vec![0, 1, 2],
            models: ModelKind::ALL.to_vec(),
            jobs: 0,
            gate: true,
            generate: GenerateConfig::default(),
            train: TrainStage::default(),
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
            introspect: IntrospectConfig::default(),
        }
    }
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            episodes: 60,
            val_fraction: 1.0 / 6.0,
            test_fraction: 1.0 / 6.0,
            seed: 1000,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            closed_loop_episodes: 5,
            seed: 50_000,
        }
    }
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            tiers: vec![0.1, 0.5, 0.75],
            episodes: None,
            closed_loop_episodes: 3,
            seed: 60_000,
        }
    }
}

impl Default for IntrospectConfig {
    fn default() -> Self {
        Self {
            separations: vec![1.5, 1.9, 2.3, 2.7, 3.1],
            train_episodes: 20,
            val_episodes: 5,
            seed: 70_000,
        }
    }
}

/// Episode counts of the nominal corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl GenerateConfig {
    pub fn split(&self) -> Split {
        let n = self.episodes;
        let val = (n as f64 * self.val_fraction).floor() as usize;
        let test = (n as f64 * self.test_fraction).floor() as usize;
        Split {
            train: n - val - test,
            val,
            test,
        }
    }
}

/// Command-line values that override keys of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub models: Option<Vec<ModelKind>>,
    pub jobs: Option<usize>,
    pub episodes: Option<usize>,
    pub length: Option<f64>,
}

impl BenchConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, BenchError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    BenchError::Config(format!("{}: line {}: {e}", p.display(), e.line()))
                })?
            }
            None => BenchConfig::default(),
        };
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(v) = &ov.out {
            self.out = v.clone();
        }
        if let Some(v) = &ov.seeds {
            self.seeds = v.clone();
        }
        if let Some(v) = &ov.models {
            self.models = v.clone();
        }
        if let Some(v) = ov.jobs {
            self.jobs = v;
        }
        if let Some(v) = ov.episodes {
            self.generate.episodes = v;
        }
        if let Some(v) = ov.length {
            self.generate.scenario.episode_length = v;
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return bad("models listed more than once".into());
        }
        let g = &self.generate;
        if g.episodes == 0 {
            return bad("generate.episodes must be positive".into());
        }
        let fractions_ok = (0.0..1.0).contains(&g.val_fraction)
            && (0.0..1.0).contains(&g.test_fraction)
            && g.val_fraction + g.test_fraction < 1.0;
        if !fractions_ok {
            return bad("validation and test fractions must be in [0, 1) and sum below 1".into());
        }
        g.scenario
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        self.train.settings.validate().map_err(BenchError::Config)?;
        for (kind, t) in &self.train.per_model {
            t.validate()
                .map_err(|e| BenchError::Config(format!("train.per_model.{kind}: {e}")))?;
        }
        for (kind, spec) in &self.train.specs {
            if spec.kind() != *kind {
                return bad(format!("train.specs.{kind} describes a {}", spec.kind()));
            }
            spec.validate()
                .map_err(|e| BenchError::Config(format!("train.specs.{kind}: {e}")))?;
        }
        for &kind in &self.models {
            self.check_window(kind, g.scenario.dz_sep)?;
        }
        if let Some(t) = self.ablate.tiers.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return bad(format!("perturbation tier {t} outside [0, 1)"));
        }
        if let Some(d) = self.introspect.separations.iter().find(|d| !(**d > 0.0)) {
            return bad(format!("separation {d} must be positive"));
        }
        if self.introspect.train_episodes == 0 || self.introspect.val_episodes == 0 {
            return bad("introspect needs training and validation episodes".into());
        }
        Ok(())
    }

    pub fn spec(&self, kind: ModelKind) -> PredictorSpec {
        self.train
            .specs
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| PredictorSpec::default_for(kind))
    }

    pub fn train_settings(&self, kind: ModelKind) -> &TrainConfig {
        self.train
            .per_model
            .get(&kind)
            .unwrap_or(&self.train.settings)
    }

    /// Window models must see at least as far back as the transport delay.
    pub fn check_window(&self, kind: ModelKind, dz_sep: f64) -> Result<(), BenchError> {
        let delay = dz_sep / self.generate.scenario.fluid.w_a;
        if let Some(h) = self.spec(kind).history() {
            if kind != ModelKind::AgileMlp && h.gap + h.window < delay {
                return Err(BenchError::Config(format!(
                    "{kind} history covers {:.3} s, less than the {delay:.3} s transport delay at dz_sep = {dz_sep} m",
                    h.gap + h.window
                )));
            }
        }
        Ok(())
    }
}
