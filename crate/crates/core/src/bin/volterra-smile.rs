use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use volterra_smile::experiments::{run, Experiment, ExperimentConfig};
use volterra_smile::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Smile,
    Md,
    Skew,
    Diag,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Smile => Experiment::Smile,
            Command::Md => Experiment::Md,
            Command::Skew => Experiment::Skew,
            Command::Diag => Experiment::Diag,
        }
    }
}

/// Rough-volatility smile experiments: Monte Carlo smiles against their
/// short-time asymptotics, moderate-deviation expansions, skews and kernel
/// diagnostics.
#[derive(Debug, Parser)]
#[command(name = "volterra-smile", version)]
struct Cli {
    #[arg(value_enum)]
    experiment: Command,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// 10^6 paths and 500 time steps; explicit --paths/--steps still win.
    #[arg(long)]
    paper_scale: bool,
    /// Also write the first 100 simulated paths.
    #[arg(long)]
    dump_paths: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Error::Config(format!("{}: {e}", cli.config.display())))?;
    let mut cfg: ExperimentConfig = text.parse()?;
    let wanted = Experiment::from(cli.experiment);
    if cfg.experiment != wanted {
        return Err(Error::Config(format!(
            "config is for `{}` but `{wanted}` was requested",
            cfg.experiment
        )));
    }
    if cli.paper_scale {
        cfg.paper_scale();
    }
    if let Some(dir) = &cli.out {
        cfg.out_dir = dir.clone();
    }
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    if let Some(p) = cli.paths {
        cfg.mc.paths = p;
    }
    if let Some(n) = cli.steps {
        cfg.mc.steps = n;
    }
    cfg.dump_paths |= cli.dump_paths;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cfg) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for f in &summary.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}
