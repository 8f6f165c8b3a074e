mod commands;
mod config;
mod report;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use clauseopt::search::Strategy;

use commands::EvalSet;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "clauseopt", version, about = "Prompt optimization for unfair-clause detection")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Mcts,
    Greedy,
    Beam,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Mcts => Strategy::Mcts,
            StrategyArg::Greedy => Strategy::Greedy,
            StrategyArg::Beam => Strategy::Beam,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Global seed; overrides every per-stage seed in the file.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.apply_seed(seed);
        } else if let Some(seed) = config.seed {
            config.apply_seed(seed);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Search for a better classification prompt.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to <output_dir>/<timestamp>-optimize-s<seed>.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
    },
    /// Record per-(prompt, clause) correctness for proxy training.
    BuildDataset {
        #[command(flatten)]
        common: Common,
        /// Overrides dataset.dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the correctness classifier on a built dataset.
    TrainProxy {
        #[command(flatten)]
        common: Common,
    },
    /// Score one prompt and print its metric report as JSON.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prompt: String,
        #[arg(long, value_enum, default_value = "score")]
        set: EvalSet,
        /// Score with the trained proxy instead of the backend.
        #[arg(long)]
        proxy: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render result tables for one or more run directories.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::Optimize {
            common,
            run_dir,
            strategy,
        } => {
            let mut config = common.load()?;
            if let Some(s) = strategy {
                config.strategy = s.into();
            }
            let dir = run_dir.unwrap_or_else(|| commands::default_run_dir(&config, "optimize"));
            commands::optimize(&config, &dir)
        }
        Command::BuildDataset { common, out } => {
            let mut config = common.load()?;
            if let Some(out) = out {
                config.dataset.dir = out;
            }
            let dir = config.dataset.dir.clone();
            commands::build_dataset(&config, &dir)
        }
        Command::TrainProxy { common } => commands::train(&common.load()?),
        Command::Evaluate {
            common,
            prompt,
            set,
            proxy,
            out,
        } => {
            let config = common.load()?;
            let report = commands::evaluate(&config, &prompt, set, proxy)?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            if let Some(out) = out {
                std::fs::write(out, &json)?;
            }
            Ok(json)
        }
        Command::Report { run_dirs } => commands::report(&run_dirs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = if e.downcast_ref::<ConfigError>().is_some() {
                ("config", 2)
            } else {
                ("runtime", 1)
            };
            let body = serde_json::json!({
                "error": {
                    "kind": kind,
                    "message": e.to_string(),
                    "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
                }
            });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
