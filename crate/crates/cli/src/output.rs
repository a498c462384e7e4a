//! CSV files: comma separated, `.` decimals, one header row, LF endings.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use needle_core::control::{RunRecord, StepLog};
use needle_core::experiments::CellResult;
use needle_core::linalg::Vec3;
use serde::Deserialize;

use crate::error::CliError;

pub const SIMULATE_HEADER: [&str; 9] = [
    "step",
    "x_base",
    "y_base",
    "y_template",
    "x_tip",
    "y_tip",
    "k_tip",
    "n_contacts",
    "newton_iters",
];

pub const RUN_HEADER: [&str; 17] = [
    "step",
    "kind",
    "x_base",
    "y_base",
    "y_template",
    "x_tip",
    "y_tip",
    "k_tip",
    "x_ref",
    "y_ref",
    "k_ref",
    "err",
    "condition",
    "damped",
    "thresholded",
    "n_contacts",
    "newton_iters",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "target",
    "task",
    "strategy",
    "scale",
    "P_base",
    "P_template",
    "err",
    "steps",
    "status",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// One row of an open-loop trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateRow {
    pub step: usize,
    pub inputs: Vec3,
    pub outputs: Vec3,
    pub contacts: usize,
    pub newton_iterations: usize,
}

pub fn write_simulate<W: Write>(w: W, rows: &[SimulateRow]) -> Result<(), CliError> {
    let mut w = writer(w);
    w.write_record(SIMULATE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(r.inputs.iter().chain(&r.outputs).map(|v| v.to_string()));
        rec.push(r.contacts.to_string());
        rec.push(r.newton_iterations.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn run_record(s: &StepLog) -> Vec<String> {
    let mut rec = vec![s.step.to_string(), s.kind.as_str().to_string()];
    rec.extend(
        s.inputs
            .iter()
            .chain(&s.outputs)
            .chain(&s.reference)
            .chain([&s.err, &s.condition])
            .map(|v| v.to_string()),
    );
    rec.push(u8::from(s.damped).to_string());
    rec.push(u8::from(s.thresholded).to_string());
    rec.push(s.contacts.to_string());
    rec.push(s.newton_iterations.to_string());
    rec
}

pub fn write_run<W: Write>(w: W, record: &RunRecord) -> Result<(), CliError> {
    let mut w = writer(w);
    w.write_record(RUN_HEADER)?;
    for s in &record.steps {
        w.write_record(run_record(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_file(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    write_run(create(path)?, record)
}

/// Study result of one cell at full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub target: u8,
    pub depth: f64,
    pub task: &'static str,
    pub strategy: &'static str,
    /// Model μ multiplier; 1 for the data-driven strategy.
    pub scale: f64,
    pub p_base: f64,
    pub p_template: f64,
    pub err: f64,
    pub steps: usize,
    pub status: &'static str,
}

impl SummaryRow {
    pub fn from_result(r: &CellResult) -> Self {
        let (p_base, p_template, steps) = match &r.metrics {
            Some(m) => (m.p_base, m.p_template, m.steps),
            None => (f64::NAN, f64::NAN, r.record.control_steps()),
        };
        Self {
            target: r.cell.target.number,
            depth: r.cell.target.depth,
            task: r.cell.task.label(),
            strategy: r.cell.strategy.label(),
            scale: r.cell.strategy.scale(),
            p_base,
            p_template,
            err: r.record.final_err().unwrap_or(f64::NAN),
            steps,
            status: r.record.status.as_str(),
        }
    }

    pub fn converged(&self) -> bool {
        self.status == "converged"
    }

    fn record(&self) -> [String; 9] {
        [
            self.target.to_string(),
            self.task.to_string(),
            self.strategy.to_string(),
            format!("{:.2}", self.scale),
            format!("{:.4}", self.p_base),
            format!("{:.4}", self.p_template),
            format!("{:.6}", self.err),
            self.steps.to_string(),
            self.status.to_string(),
        ]
    }
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = writer(w);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    write_summary(create(path)?, rows)
}

/// A `summary.csv` row as read back from disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRecord {
    pub target: u8,
    pub task: String,
    pub strategy: String,
    pub scale: f64,
    #[serde(rename = "P_base")]
    pub p_base: f64,
    #[serde(rename = "P_template")]
    pub p_template: f64,
    pub err: f64,
    pub steps: usize,
    pub status: String,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// A trajectory row as read back from a `traj_<cell>.csv` file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub kind: String,
    pub x_base: f64,
    pub y_base: f64,
    pub y_template: f64,
    pub x_tip: f64,
    pub y_tip: f64,
    pub k_tip: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub k_ref: f64,
    pub err: f64,
    pub condition: f64,
    pub damped: u8,
    pub thresholded: u8,
    pub n_contacts: usize,
    pub newton_iters: usize,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
