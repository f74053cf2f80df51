use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slowlight_cli::config::Config;
use slowlight_cli::error::CliError;
use slowlight_cli::{runner, scenarios};

/// Slow-light frequency shifter simulations.
#[derive(Parser)]
#[command(name = "slowlight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its result bundle.
    Run(Target),
    /// List the built-in scenarios.
    ListScenarios,
    /// Print the source of a built-in scenario.
    ShowScenario { name: String },
    /// Build the ensemble only and write its profiles.
    Prepare(Target),
    /// Write the static transfer function for each voltage of a scenario.
    Oracle(Target),
}

#[derive(Args)]
struct Target {
    /// Scenario file (TOML).
    #[arg(required_unless_present = "scenario", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario name instead of a file.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

impl Target {
    fn load(&self) -> Result<(Config, PathBuf), CliError> {
        match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let cfg = Config::parse(&text, &path.display().to_string())?;
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok((cfg, base))
            }
            (None, Some(name)) => Ok((scenarios::load(name)?, PathBuf::from("."))),
            (None, None) => Err(CliError::Config("no scenario given".into())),
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SLOWLIGHT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("SLOWLIGHT_THREADS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::ListScenarios => {
            for (name, _) in scenarios::BUILTIN {
                let c = scenarios::load(name)?;
                println!("{name}\t{}", c.description);
            }
            Ok(())
        }
        Command::ShowScenario { name } => {
            let text = scenarios::source(&name)
                .ok_or_else(|| CliError::Config(format!("unknown scenario '{name}'")))?;
            print!("{text}");
            Ok(())
        }
        Command::Run(t) => {
            let (cfg, base) = t.load()?;
            let out = runner::run(&cfg, &base)?;
            runner::write_bundle(&out, &t.out)?;
            print!("{}", out.summary_text());
            Ok(())
        }
        Command::Prepare(t) => {
            let (cfg, base) = t.load()?;
            let out = runner::prepare(&cfg, &base)?;
            runner::write_bundle(&out, &t.out)?;
            print!("{}", out.summary_text());
            Ok(())
        }
        Command::Oracle(t) => {
            let (cfg, base) = t.load()?;
            let out = runner::readout(&cfg, &base)?;
            runner::write_bundle(&out, &t.out)?;
            print!("{}", out.summary_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
