use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use gridres::scenario::{self, OutputFormat, Scenario, ScenarioError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gridres", version, about = "Run grid resilience scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write timeline, solver trace, transactions and report.
    Run {
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Overrides the mode in the scenario file.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Compare every market solve against the centralized LP optimum.
    OracleCheck {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Largest relative gap accepted before exiting with an error.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Resilient,
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<Scenario, ScenarioError> {
    let mut s = scenario::load_scenario(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn execute(command: Command) -> Result<serde_json::Value, serde_json::Value> {
    let rec = |e: ScenarioError| e.record();
    match command {
        Command::Run {
            scenario,
            seed,
            out_dir,
            format,
            mode,
        } => {
            let mut s = load(&scenario, seed).map_err(rec)?;
            if let Some(mode) = mode {
                s.mode = match mode {
                    Mode::Baseline => scenario::Mode::Baseline,
                    Mode::Resilient => scenario::Mode::Resilient,
                };
            }
            let result = scenario::run_scenario(&s).map_err(rec)?;
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            let files = scenario::write_outputs(&result, &out_dir, format).map_err(|e| {
                json!({ "error": "io", "message": e.to_string(), "path": out_dir.display().to_string() })
            })?;
            Ok(json!({
                "scenario": result.scenario,
                "seed": result.seed,
                "p_min": result.report.p_min,
                "loss_area": result.report.loss_area,
                "monetary_loss": result.report.monetary_loss,
                "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            }))
        }
        Command::Validate { scenario } => {
            let s = load(&scenario, None).map_err(rec)?;
            Ok(json!({
                "scenario": s.name,
                "valid": true,
                "regions": s.topology.len(),
                "demand_agents": s.demand.len(),
                "storage_agents": s.storage.len(),
                "horizon": s.horizon,
                "hazard": s.hazard.is_some(),
            }))
        }
        Command::OracleCheck {
            scenario,
            seed,
            tolerance,
        } => {
            let s = load(&scenario, seed).map_err(rec)?;
            let report = scenario::oracle_check(&s).map_err(rec)?;
            let value = json!({
                "scenario": report.scenario,
                "solves": report.entries.len(),
                "max_gap": report.max_gap,
                "tolerance": tolerance,
            });
            if report.max_gap > tolerance {
                let mut err = value;
                err["error"] = json!("gap_exceeded");
                err["message"] = json!(format!("max relative gap {} exceeds {}", report.max_gap, tolerance));
                return Err(err);
            }
            Ok(value)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(record) => {
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
