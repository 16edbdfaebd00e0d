use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use egolog::harness::config::EgologConfig;
use egolog::harness::pipeline::{self, Suite, TrainTarget, Workspace};

/// Synthetic audio-IMU daily-log pipeline.
#[derive(Parser)]
#[command(name = "egolog", version)]
struct Cli {
    /// Workspace root; every input and output path is relative to it.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config; defaults to <workspace>/egolog.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus and write corpus/manifest.json.
    Generate,
    /// Train one model family from the corpus.
    Train {
        #[arg(value_enum)]
        target: Target,
    },
    /// Evaluate the trained models; writes reports/metrics.csv.
    Eval,
    /// Run an ablation suite; writes reports/ablation-<suite>.csv and .svg.
    Ablate {
        #[arg(value_enum)]
        suite: SuiteArg,
    },
    /// Build the daily-log report for a synthetic day.
    DailyLog,
    /// One confidence-gated LLM round over the drift pool.
    CollabRun,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Temporal,
    Spatial,
    Har,
    Scenario,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Activity,
    Scenario,
}

fn load_config(cli: &Cli) -> egolog::Result<EgologConfig> {
    let default_path = cli.workspace.join("egolog.toml");
    let mut cfg = match &cli.config {
        Some(p) => EgologConfig::load(&cli.workspace.join(p))?,
        None if default_path.exists() => EgologConfig::load(&default_path)?,
        None => EgologConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> egolog::Result<()> {
    let cfg = load_config(cli)?;
    let ws = Workspace::new(&cli.workspace);
    match cli.command {
        Command::Generate => {
            let m = pipeline::generate(&ws, &cfg)?;
            println!("wrote {} windows", m.len());
        }
        Command::Train { target } => {
            let target = match target {
                Target::Temporal => TrainTarget::Temporal,
                Target::Spatial => TrainTarget::Spatial,
                Target::Har => TrainTarget::Har,
                Target::Scenario => TrainTarget::Scenario,
            };
            for p in pipeline::train(&ws, &cfg, target)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval => print!("{}", pipeline::eval(&ws, &cfg)?.to_csv()?),
        Command::Ablate { suite } => {
            let suite = match suite {
                SuiteArg::Activity => Suite::Activity,
                SuiteArg::Scenario => Suite::Scenario,
            };
            print!("{}", pipeline::ablate(&ws, &cfg, suite)?.to_csv()?);
        }
        Command::DailyLog => {
            let r = pipeline::daily_log(&ws, &cfg)?;
            println!(
                "{} windows, {} scenario buckets; wrote {}",
                r.windows,
                r.scenario_row.len(),
                ws.report("daily_log.svg").display()
            );
        }
        Command::CollabRun => {
            let r = pipeline::collab(&ws, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
