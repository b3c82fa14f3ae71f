use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wake_bench::{run, BenchConfig, Overrides, Stage};
use wake_predictors::ModelKind;

/// Wake-force prediction pipeline.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// JSON config with one section per stage; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated model kinds, e.g. agile_mlp,gru.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Nominal episodes to generate.
    #[arg(long)]
    episodes: Option<usize>,
    /// Episode length in seconds.
    #[arg(long)]
    length: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        out: cli.out,
        seeds: cli.seeds,
        models: cli.models,
        jobs: cli.jobs,
        episodes: cli.episodes,
        length: cli.length,
    };
    let result = BenchConfig::load(cli.config.as_deref(), &ov).and_then(|cfg| run(cli.stage, &cfg));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wake-bench {}: {e}", cli.stage.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
