use wake_engine::{generate_episodes, write_dataset, ScenarioConfig};

use crate::layout::{tier_label, Layout, TEST_SPLIT, TRAIN_SPLIT, VAL_SPLIT};
use crate::{BenchConfig, BenchError};

/// Seed offset between the per-tier test corpora.
const TIER_SEED_STRIDE: u64 = 10_000;

/// Writes the nominal train/val/test corpus and one test corpus per
/// perturbation tier.
pub fn run(cfg: &BenchConfig, layout: &Layout) -> Result<(), BenchError> {
    let g = &cfg.generate;
    let split = g.split();
    let nominal = generate_episodes(&g.scenario.with_seed(g.seed), g.episodes)?;
    let (train, rest) = nominal.split_at(split.train);
    let (val, test) = rest.split_at(split.val);
    for (name, eps) in [(TRAIN_SPLIT, train), (VAL_SPLIT, val), (TEST_SPLIT, test)] {
        write_dataset(eps, &layout.nominal(name))?;
    }
    eprintln!(
        "generate: {} nominal episodes of {} s ({} train, {} val, {} test)",
        g.episodes, g.scenario.episode_length, split.train, split.val, split.test
    );
    let per_tier = cfg.ablate.episodes.unwrap_or(split.test);
    for (k, &p) in cfg.ablate.tiers.iter().enumerate() {
        let sc = ScenarioConfig {
            perturbation: p,
            seed: g.seed + TIER_SEED_STRIDE * (k as u64 + 1),
            ..g.scenario.clone()
        };
        let eps = generate_episodes(&sc, per_tier)?;
        write_dataset(&eps, &layout.tier(p))?;
        eprintln!("generate: {} with {per_tier} episodes", tier_label(p));
    }
    Ok(())
}
