use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rydcorr::config::{Config, Scenario};
use rydcorr::error::{CliError, CliResult};
use rydcorr::presets::ALL;
use rydcorr::run::{execute, validation_report};

#[derive(Parser)]
#[command(name = "rydcorr", version, about = "Photon correlations of interacting Rydberg ladder atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a scenario and write CSVs and a manifest.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory (overrides output.dir).
        #[arg(long, env = "RYDCORR_OUT_DIR")]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "RYDCORR_WORKERS")]
        workers: Option<usize>,
        /// Also write an SVG chart per table.
        #[arg(long)]
        svg: bool,
    },
    /// Resolve a scenario and print it without computing.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// List the presets.
    Presets,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Preset name (overrides `preset` in the config file).
    #[arg(long)]
    preset: Option<String>,
    /// Config or manifest file in `key = value` form.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override, e.g. `--set system.omega_p=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ScenarioArgs {
    fn config(&self) -> CliResult<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(p) = &self.preset {
            cfg.set_preset(p);
        }
        for s in &self.set {
            cfg.set(s)?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Presets => {
            for p in ALL {
                println!("{:<8} {}", p.name(), p.description());
            }
        }
        Command::Validate { scenario } => {
            let s = scenario.config()?.resolve()?;
            print!("{}", validation_report(&s));
        }
        Command::Run { scenario, out, workers, svg } => {
            let mut cfg = scenario.config()?;
            if let Some(dir) = out {
                cfg.set(&format!("output.dir={}", dir.display()))?;
                cfg.overrides.pop();
            }
            if svg {
                cfg.set("output.svg=true")?;
                cfg.overrides.pop();
            }
            let s: Scenario = cfg.resolve()?;
            if let Some(n) = workers {
                if n == 0 {
                    return Err(CliError::InvalidValue { key: "workers".into(), message: "must be at least 1".into() });
                }
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            for path in execute(&s)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
