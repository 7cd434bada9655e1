use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fblin_cli::{execute, validate_report, CliError, Command, Overrides, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "fblin",
    version,
    about = "Feedback-linearised single-track vehicle experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment selected in the config (open-loop steps by default).
    Simulate(Common),
    /// Stability map over (v_bar, dl).
    Sweep(Common),
    /// Hopf threshold in dl per speed.
    Hopf(Common),
    /// Circle tracking with the proportional outer loop.
    Track(Common),
    /// Check a config file and print its resolved form and hash.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario seed, overriding `seed` (drives stochastic dropout).
    #[arg(long)]
    seed: Option<u64>,
    /// Controller period [s].
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time [s].
    #[arg(long)]
    horizon: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            dt: self.dt,
            horizon: self.horizon,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Hopf(c) => (Command::Hopf, c),
        Cmd::Track(c) => (Command::Track, c),
        Cmd::ValidateConfig(c) => {
            if c.config.is_none() {
                return Err(CliError::config(
                    "--config",
                    "validate-config needs a config file",
                ));
            }
            return validate_report(&c.load()?);
        }
    };
    let manifest = execute(command, &common.load()?)?;
    Ok(serde_json::to_value(manifest).expect("manifest serializes"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            // a closed pipe (`| head`) is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&e.report()).expect("report serializes")
            );
            ExitCode::from(e.exit_code())
        }
    }
}
