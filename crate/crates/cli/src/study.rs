//! Study sweeps and the checks run on their summary.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use needle_core::control::Strategy;
use needle_core::experiments::{
    generate_path, run_cell, spearman, study_matrix, target, Cell, CellResult, PathSpec, Target,
    Task,
};
use rayon::prelude::*;

use crate::config::RunConfiguration;
use crate::error::CliError;
use crate::output::{write_run_file, write_summary_file, SummaryRow};

/// Worker-count override for `study`; unset or 0 uses one worker per core.
pub const WORKERS_ENV: &str = "NEEDLE_STEER_WORKERS";

/// Runtime budget of a full study.
pub const STUDY_BUDGET: Duration = Duration::from_secs(600);

pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            CliError::Config(format!("{WORKERS_ENV} must be a worker count, got {v:?}"))
        })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn lookup_target(number: u8) -> Result<Target, CliError> {
    target(number).ok_or_else(|| CliError::Usage(format!("no target {number}; expected 1-12")))
}

pub fn feasible_path(config: &RunConfiguration, t: &Target) -> Result<PathSpec, CliError> {
    let sim = config.sim_config()?;
    generate_path(t, &sim).map_err(|e| CliError::Solver(e.to_string()))
}

/// Runs one study cell on its own freshly generated path.
pub fn run_single(
    config: &RunConfiguration,
    target_number: u8,
    task: Task,
    strategy: Strategy,
) -> Result<CellResult, CliError> {
    let t = lookup_target(target_number)?;
    let sim = config.sim_config()?;
    let ctrl = config.controller_config()?;
    let path = feasible_path(config, &t)?;
    let cell = Cell {
        target: t,
        task,
        strategy,
    };
    run_cell(&sim, &ctrl, &cell, &path).map_err(|e| CliError::Solver(e.to_string()))
}

pub struct Study {
    /// In matrix order: targets, then tasks, then data-driven before each scale.
    pub results: Vec<CellResult>,
    pub rows: Vec<SummaryRow>,
    pub elapsed: Duration,
}

/// Runs the configured matrix; with `out`, writes `traj_<cell>.csv` per cell
/// and a final `summary.csv`.
pub fn run_study(config: &RunConfiguration, out: Option<&Path>) -> Result<Study, CliError> {
    let start = Instant::now();
    let sim = config.sim_config()?;
    let ctrl = config.controller_config()?;
    let exp = &config.experiment;
    let targets = exp
        .targets
        .iter()
        .map(|&n| lookup_target(n))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<Task> = exp.tasks.iter().map(|&t| t.into()).collect();
    let cells = study_matrix(&targets, &tasks, &exp.scales);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }

    let pool = thread_pool()?;
    let results = pool.install(|| -> Result<Vec<CellResult>, CliError> {
        let paths: BTreeMap<u8, PathSpec> = targets
            .par_iter()
            .map(|t| {
                generate_path(t, &sim)
                    .map(|p| (t.number, p))
                    .map_err(|e| CliError::Solver(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        cells
            .par_iter()
            .map(|cell| {
                let result = run_cell(&sim, &ctrl, cell, &paths[&cell.target.number])
                    .map_err(|e| CliError::Solver(format!("{}: {e}", cell.id())))?;
                if let Some(dir) = out {
                    write_run_file(&dir.join(format!("traj_{}.csv", cell.id())), &result.record)?;
                }
                Ok(result)
            })
            .collect()
    })?;

    let rows: Vec<SummaryRow> = results.iter().map(SummaryRow::from_result).collect();
    if let Some(dir) = out {
        write_summary_file(&dir.join("summary.csv"), &rows)?;
    }
    Ok(Study {
        results,
        rows,
        elapsed: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Outside the target band but within tolerance.
    Warn,
    Fail,
    /// The matrix lacks the cells the check needs.
    Skip,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {}: {}",
            self.verdict.as_str(),
            self.id,
            self.name,
            self.detail
        )
    }
}

fn check(id: u8, name: &'static str, verdict: Verdict, detail: String) -> Check {
    Check {
        id,
        name,
        verdict,
        detail,
    }
}

/// Strategy column plus scale, e.g. `data` or `mech x1.50`.
fn strategy_key(r: &SummaryRow) -> String {
    match r.strategy {
        "data" => "data".to_string(),
        s => format!("{s} x{:.2}", r.scale),
    }
}

/// Largest path-following effort below which the effort bound passes, and
/// the tolerated ceiling above which it fails.
pub const EFFORT_BOUND: (f64, f64) = (5.0, 8.0);

pub fn targeting_success(rows: &[SummaryRow], elapsed: Duration, tolerance: f64) -> Check {
    let name = "targeting success";
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !(r.converged() && r.err <= tolerance))
        .map(|r| {
            format!(
                "t{:02} {} {} ({})",
                r.target,
                r.task,
                strategy_key(r),
                r.status
            )
        })
        .collect();
    let within_budget = elapsed < STUDY_BUDGET;
    let verdict = if failed.is_empty() && within_budget && !rows.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut detail = format!(
        "{}/{} cells reached err <= {tolerance} mm in {:.1} s",
        rows.len() - failed.len(),
        rows.len(),
        elapsed.as_secs_f64()
    );
    if !failed.is_empty() {
        detail += &format!("; failed: {}", failed.join(", "));
    }
    check(1, name, verdict, detail)
}

pub fn path_effort_bound(rows: &[SummaryRow]) -> Check {
    let name = "path-following effort bound";
    let path: Vec<&SummaryRow> = rows.iter().filter(|r| r.task == "path").collect();
    if path.is_empty() {
        return check(3, name, Verdict::Skip, "no path-following cells".into());
    }
    let worst = path
        .iter()
        .max_by(|a, b| {
            a.p_base
                .max(a.p_template)
                .total_cmp(&b.p_base.max(b.p_template))
        })
        .unwrap();
    let peak = worst.p_base.max(worst.p_template);
    let verdict = if !peak.is_finite() || peak > EFFORT_BOUND.1 {
        Verdict::Fail
    } else if peak >= EFFORT_BOUND.0 {
        Verdict::Warn
    } else {
        Verdict::Pass
    };
    let detail = format!(
        "max P = {peak:.2}% (t{:02} {}) over {} cells",
        worst.target,
        strategy_key(worst),
        path.len()
    );
    check(3, name, verdict, detail)
}

fn by_cell<'a>(rows: &'a [SummaryRow], task: &str) -> BTreeMap<(u8, String), &'a SummaryRow> {
    rows.iter()
        .filter(|r| r.task == task)
        .map(|r| ((r.target, strategy_key(r)), r))
        .collect()
}

pub fn task_effort_ordering(rows: &[SummaryRow]) -> Check {
    let name = "task-effort ordering";
    let path = by_cell(rows, "path");
    let point = by_cell(rows, "point");
    let mut pairs = 0;
    let mut bad = Vec::new();
    for (key, p) in &point {
        if let Some(f) = path.get(key) {
            pairs += 1;
            if !(p.p_template > f.p_template) {
                bad.push(format!(
                    "t{:02} {} ({:.2} <= {:.2})",
                    key.0, key.1, p.p_template, f.p_template
                ));
            }
        }
    }
    if pairs == 0 {
        return check(4, name, Verdict::Skip, "no path/point pairs".into());
    }
    let verdict = if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut detail = format!(
        "point P_template > path P_template in {}/{pairs} pairs",
        pairs - bad.len()
    );
    if !bad.is_empty() {
        detail += &format!("; violated: {}", bad.join(", "));
    }
    check(4, name, verdict, detail)
}

pub fn depth_trend(rows: &[SummaryRow]) -> Check {
    let name = "depth trend";
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.task == "point") {
        let g = groups.entry(strategy_key(r)).or_default();
        g.0.push(r.depth);
        g.1.push(r.p_base);
    }
    groups.retain(|_, (d, _)| d.len() >= 3);
    if groups.is_empty() {
        return check(
            5,
            name,
            Verdict::Skip,
            "fewer than 3 point-stabilization targets".into(),
        );
    }
    let rhos: Vec<(String, f64)> = groups
        .iter()
        .map(|(k, (d, p))| (k.clone(), spearman(d, p)))
        .collect();
    let verdict = if rhos.iter().all(|(_, r)| *r > 0.5) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let detail = rhos
        .iter()
        .map(|(k, r)| format!("{k} rho = {r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(5, name, verdict, detail)
}

pub fn stiffness_ordering(rows: &[SummaryRow]) -> Check {
    let name = "stiffness-perception ordering";
    let mech: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| r.task == "path" && r.strategy == "mech")
        .collect();
    let hi = mech
        .iter()
        .map(|r| r.scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = mech.iter().map(|r| r.scale).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return check(6, name, Verdict::Skip, "needs two mechanics scales".into());
    }
    let at = |t: u8, s: f64| mech.iter().find(|r| r.target == t && r.scale == s);
    let mut targets: Vec<u8> = mech.iter().map(|r| r.target).collect();
    targets.dedup();
    let mut compared = 0;
    let mut bad = Vec::new();
    for t in targets {
        if let (Some(a), Some(b)) = (at(t, hi), at(t, lo)) {
            compared += 1;
            if !(a.p_template > b.p_template) {
                bad.push(format!(
                    "t{t:02} ({:.3} <= {:.3})",
                    a.p_template, b.p_template
                ));
            }
        }
    }
    let verdict = if bad.is_empty() && compared > 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut detail = format!(
        "path P_template at x{hi:.2} > x{lo:.2} for {}/{compared} targets",
        compared - bad.len()
    );
    if !bad.is_empty() {
        detail += &format!("; violated: {}", bad.join(", "));
    }
    check(6, name, verdict, detail)
}

/// Checks that can be judged from a study summary alone.
pub fn study_checks(study: &Study, tolerance: f64) -> Vec<Check> {
    vec![
        targeting_success(&study.rows, study.elapsed, tolerance),
        path_effort_bound(&study.rows),
        task_effort_ordering(&study.rows),
        depth_trend(&study.rows),
        stiffness_ordering(&study.rows),
    ]
}
