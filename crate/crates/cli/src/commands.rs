use std::io::Write;
use std::path::{Path, PathBuf};

use needle_core::control::{RunStatus, Strategy};
use needle_core::experiments::{CellResult, Task};
use needle_core::sim::SimState;

use crate::config::RunConfiguration;
use crate::error::CliError;
use crate::output::{write_run_file, write_simulate, SimulateRow};
use crate::study::{run_single, run_study, study_checks, Check, Verdict};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Straight open-loop insertion; returns one row per applied step.
pub fn simulate(
    config: &RunConfiguration,
    depth: f64,
    entry_offset: f64,
) -> Result<(SimState, Vec<SimulateRow>), CliError> {
    let sim_config = config.sim_config()?;
    let total = sim_config.stack.total_thickness();
    if !(0.0..=total).contains(&depth) {
        return Err(CliError::Usage(format!(
            "depth must lie in [0, {total}] mm, got {depth}"
        )));
    }
    if !entry_offset.is_finite() {
        return Err(CliError::Usage("entry offset must be finite".into()));
    }
    let step = sim_config.insertion_step;
    let solver = |e: needle_core::Error| CliError::Solver(e.to_string());
    let mut sim = SimState::new(sim_config, entry_offset).map_err(solver)?;
    let mut rows = Vec::new();
    while depth - sim.tip_x() > 1e-9 {
        sim.apply_inputs([(depth - sim.tip_x()).min(step), 0.0, 0.0])
            .map_err(solver)?;
        rows.push(SimulateRow {
            step: rows.len() + 1,
            inputs: sim.inputs(),
            outputs: sim.observe().to_array(),
            contacts: sim.contacts().len(),
            newton_iterations: sim.newton_iterations(),
        });
    }
    Ok((sim, rows))
}

pub fn cmd_simulate(
    config: &RunConfiguration,
    depth: f64,
    entry_offset: f64,
    out: &Path,
) -> Result<PathBuf, CliError> {
    let (sim, rows) = simulate(config, depth, entry_offset)?;
    create_dir(out)?;
    let path = out.join("open_loop.csv");
    let file = std::fs::File::create(&path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_simulate(file, &rows)?;
    let o = sim.observe();
    println!("x_tip={} y_tip={} k_tip={}", o.x_tip, o.y_tip, o.k_tip);
    Ok(path)
}

/// Machine-readable one-line result of a control run.
pub fn metrics_line(r: &CellResult) -> String {
    let mut line = format!("cell={} status={}", r.cell.id(), r.record.status.as_str());
    if let Some(e) = r.record.final_err() {
        line += &format!(" err={e:.6}");
    }
    line += &format!(" steps={}", r.record.control_steps());
    if let Some(m) = &r.metrics {
        line += &format!(" P_base={:.4} P_template={:.4}", m.p_base, m.p_template);
    }
    line
}

pub fn cmd_run(
    config: &RunConfiguration,
    target: u8,
    task: Task,
    strategy: Strategy,
    out: &Path,
) -> Result<CellResult, CliError> {
    let result = run_single(config, target, task, strategy)?;
    create_dir(out)?;
    write_run_file(
        &out.join(format!("traj_{}.csv", result.cell.id())),
        &result.record,
    )?;
    println!("{}", metrics_line(&result));
    match &result.record.status {
        RunStatus::Converged => Ok(result),
        RunStatus::MaxSteps => Err(CliError::NotConverged(format!(
            "{} stopped after {} steps",
            result.cell.id(),
            result.record.control_steps()
        ))),
        RunStatus::PlantFault(m) | RunStatus::ModelFault(m) => {
            Err(CliError::Solver(format!("{}: {m}", result.cell.id())))
        }
        RunStatus::IsolationViolated => Err(CliError::Solver(format!(
            "{}: model fork changed the plant state",
            result.cell.id()
        ))),
    }
}

pub fn cmd_study(config: &RunConfiguration, out: &Path) -> Result<Vec<Check>, CliError> {
    let study = run_study(config, Some(out))?;
    let checks = study_checks(&study, config.controller.stop_tolerance);
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "wrote {} cells to {}", study.rows.len(), out.display())?;
    for c in &checks {
        writeln!(w, "{c}")?;
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c.verdict == Verdict::Fail)
        .map(|c| c.id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::NotConverged(format!(
            "study checks failed: {}",
            failed.join(", ")
        )))
    }
}
