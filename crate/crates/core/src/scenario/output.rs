use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::RunResult;
use crate::agents::OfferStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct TimelineRow {
    t: u32,
    #[serde(rename = "served_kW")]
    served: f64,
    #[serde(rename = "demanded_kW")]
    demanded: f64,
    index: f64,
}

#[derive(Serialize)]
struct SolverRow {
    slot: u32,
    island: usize,
    m: u32,
    residual: f64,
    max_violation: f64,
}

#[derive(Serialize)]
struct TransactionRow {
    slot: u32,
    island: usize,
    offer_id: u64,
    dsa: u32,
    dra: u32,
    #[serde(rename = "kWh")]
    kwh: f64,
    incentive: f64,
    status: OfferStatus,
}

fn rows(result: &RunResult) -> (Vec<TimelineRow>, Vec<SolverRow>, Vec<TransactionRow>) {
    let timeline = result
        .timeline
        .iter()
        .map(|s| TimelineRow {
            t: s.t,
            served: s.served,
            demanded: s.demanded,
            index: s.index,
        })
        .collect();
    let mut solver = Vec::new();
    let mut transactions = Vec::new();
    for solve in &result.solves {
        solver.extend(solve.equilibrium.diagnostics.iter().map(|d| SolverRow {
            slot: solve.slot,
            island: solve.island,
            m: d.m,
            residual: d.residual,
            max_violation: d.max_violation,
        }));
        transactions.extend(solve.log.final_offers().into_iter().map(|o| TransactionRow {
            slot: solve.slot,
            island: solve.island,
            offer_id: o.id,
            dsa: o.from_dsa.0,
            dra: o.to_dra.0,
            kwh: o.quantity,
            incentive: o.incentive,
            status: o.status,
        }));
    }
    (timeline, solver, transactions)
}

fn to_io(e: impl std::error::Error + Send + Sync + 'static) -> io::Error {
    io::Error::other(e)
}

fn write_csv<R: Serialize>(path: &Path, records: &[R], header: &[&str]) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(to_io)?;
    w.write_record(header).map_err(to_io)?;
    for r in records {
        w.serialize(r).map_err(to_io)?;
    }
    w.flush()
}

fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(to_io)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// Writes the timeline, solver trace, transactions and the summary report
/// into `dir` and returns the paths written.
pub fn write_outputs(result: &RunResult, dir: &Path, format: OutputFormat) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (timeline, solver, transactions) = rows(result);
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => {
            let path = dir.join("timeline.csv");
            write_csv(&path, &timeline, &["t", "served_kW", "demanded_kW", "index"])?;
            written.push(path);
            let path = dir.join("solver.csv");
            write_csv(&path, &solver, &["slot", "island", "m", "residual", "max_violation"])?;
            written.push(path);
            let path = dir.join("transactions.csv");
            let header = ["slot", "island", "offer_id", "dsa", "dra", "kWh", "incentive", "status"];
            write_csv(&path, &transactions, &header)?;
            written.push(path);
        }
        OutputFormat::Json => {
            for (name, value) in [
                ("timeline.json", serde_json::to_value(&timeline)),
                ("solver.json", serde_json::to_value(&solver)),
                ("transactions.json", serde_json::to_value(&transactions)),
            ] {
                let path = dir.join(name);
                write_json(&path, &value.map_err(to_io)?)?;
                written.push(path);
            }
        }
    }
    let path = dir.join("report.json");
    write_json(
        &path,
        &json!({
            "scenario": result.scenario,
            "seed": result.seed,
            "mode": result.mode,
            "report": result.report,
            "curve": result.curve,
            "market_solves": result.solves.len(),
            "unconverged_solves": result.solves.iter().filter(|s| !s.equilibrium.converged).count(),
        }),
    )?;
    written.push(path);
    Ok(written)
}
