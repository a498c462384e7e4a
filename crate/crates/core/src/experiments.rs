//! Simulated 12-core biopsy study: targets, feasible paths, study cells and
//! effort metrics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::control::{run_control_loop, ControlTask, ControllerConfig, Reference, Strategy};
pub use crate::control::{RunRecord, RunStatus, StepKind, StepLog};
use crate::error::{invalid, Error, Result};
use crate::linalg::Vec3;
use crate::sim::{SimConfig, SimState};

/// Largest tolerated miss of an open-loop replay, mm.
pub const PATH_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub number: u8,
    /// Goal insertion depth, mm.
    pub depth: f64,
    /// Goal lateral tip position, mm.
    pub deflection: f64,
    /// Goal tip slope in percent.
    pub slope_percent: f64,
}

impl Target {
    /// `[x_goal, y_goal, k_goal]`
    pub fn goal(&self) -> Vec3 {
        [self.depth, self.deflection, self.slope_percent / 100.0]
    }
}

const TARGETS: [(u8, f64, f64, f64); 12] = [
    (1, 30.62, -1.00, -2.00),
    (2, 33.02, -1.21, -2.00),
    (3, 35.42, -1.38, -3.00),
    (4, 40.22, -1.80, -3.00),
    (12, 40.22, -1.80, -3.00),
    (11, 45.02, -2.23, -4.00),
    (5, 54.62, -3.08, -5.00),
    (6, 54.62, -3.08, -5.00),
    (10, 61.82, -3.78, -6.00),
    (7, 64.22, -4.07, -6.00),
    (8, 66.62, -4.28, -6.00),
    (9, 69.02, -4.55, -6.00),
];

/// The twelve biopsy targets in ascending depth order.
pub fn builtin_targets() -> Vec<Target> {
    TARGETS
        .iter()
        .map(|&(number, depth, deflection, slope_percent)| Target {
            number,
            depth,
            deflection,
            slope_percent,
        })
        .collect()
}

pub fn target(number: u8) -> Option<Target> {
    builtin_targets().into_iter().find(|t| t.number == number)
}

/// Desired tip poses sampled once per insertion step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    /// Lateral offset of base and template at entry, mm.
    pub entry_offset: f64,
    /// `[x_tip, y_tip, k_tip]`, strictly increasing in `x_tip`.
    pub waypoints: Vec<Vec3>,
}

impl PathSpec {
    /// Waypoint at depth `x`, linearly interpolated and clamped to the ends.
    pub fn sample(&self, x: f64) -> Vec3 {
        let w = &self.waypoints;
        if x <= w[0][0] {
            return w[0];
        }
        let last = w[w.len() - 1];
        if x >= last[0] {
            return last;
        }
        let i = w.partition_point(|p| p[0] <= x);
        let (a, b) = (w[i - 1], w[i]);
        let t = (x - a[0]) / (b[0] - a[0]);
        [x, a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
    }

    pub fn last(&self) -> Vec3 {
        *self.waypoints.last().unwrap()
    }
}

/// Straight insertion to `depth` in whole steps plus one final partial step;
/// returns the plant and the tip pose after every step (entry included).
pub fn open_loop_insertion(
    config: &SimConfig,
    depth: f64,
    entry_offset: f64,
) -> Result<(SimState, Vec<Vec3>)> {
    if !(depth >= 0.0) {
        return Err(invalid("depth must be non-negative"));
    }
    let mut sim = SimState::new(config.clone(), entry_offset)?;
    let mut poses = vec![sim.observe().to_array()];
    let step = config.insertion_step;
    loop {
        let remaining = depth - sim.tip_x();
        if remaining <= 1e-9 {
            break;
        }
        sim.apply_inputs([remaining.min(step), 0.0, 0.0])?;
        poses.push(sim.observe().to_array());
    }
    Ok((sim, poses))
}

/// Feasible path to `target` under nominal parameters.
///
/// A first insertion from zero offset measures the open-loop deflection `d`
/// at the target depth; the entry is then shifted by `y_goal - d` and the
/// insertion replayed, its tip trajectory becoming the path.
pub fn generate_path(target: &Target, config: &SimConfig) -> Result<PathSpec> {
    if config.parameter_scale.iter().any(|&s| s != 1.0) {
        return Err(invalid("paths are generated with nominal parameters"));
    }
    let (first, _) = open_loop_insertion(config, target.depth, 0.0)?;
    let d = first.observe().y_tip;
    let entry_offset = target.deflection - d;
    let (_, waypoints) = open_loop_insertion(config, target.depth, entry_offset)?;
    let end = *waypoints.last().unwrap();
    let miss = (end[1] - target.deflection).abs();
    if miss > PATH_TOLERANCE {
        return Err(Error::PathGeneration(format!(
            "target {} replay ends {miss:.3} mm from the goal",
            target.number
        )));
    }
    Ok(PathSpec {
        entry_offset,
        waypoints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    PathFollowing,
    PointStabilization,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::PathFollowing => "path",
            Task::PointStabilization => "point",
        }
    }
}

/// One entry of the study matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub target: Target,
    pub task: Task,
    pub strategy: Strategy,
}

impl Cell {
    /// File-name safe identifier, e.g. `t09_point_mech_x1.50`.
    pub fn id(&self) -> String {
        let strat = match &self.strategy {
            Strategy::DataDriven => "data".to_string(),
            s => format!("mech_x{:.2}", s.scale()),
        };
        format!("t{:02}_{}_{}", self.target.number, self.task.label(), strat)
    }
}

/// Targets × tasks × {data-driven, mechanics at each scale}.
pub fn study_matrix(targets: &[Target], tasks: &[Task], scales: &[f64]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for t in targets {
        for &task in tasks {
            let strategies = core::iter::once(Strategy::DataDriven)
                .chain(scales.iter().map(|&s| Strategy::mechanics(s)));
            for strategy in strategies {
                cells.push(Cell {
                    target: *t,
                    task,
                    strategy,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Peak base displacement as a percentage of target depth.
    pub p_base: f64,
    /// Peak template displacement as a percentage of target depth.
    pub p_template: f64,
    pub final_err: f64,
    pub steps: usize,
}

/// Effort metrics of a finished run: `P = 100 max|y(t) - y(0)| / x_target`.
pub fn compute_metrics(record: &RunRecord, target: &Target) -> Result<Metrics> {
    let first = record.steps.first().ok_or(Error::EmptyRecord)?;
    if !(target.depth > 0.0) {
        return Err(invalid("target depth must be positive"));
    }
    let peak = |k: usize| {
        record
            .steps
            .iter()
            .map(|s| (s.inputs[k] - first.inputs[k]).abs())
            .fold(0.0, f64::max)
    };
    Ok(Metrics {
        p_base: 100.0 * peak(1) / target.depth,
        p_template: 100.0 * peak(2) / target.depth,
        final_err: record.steps.last().unwrap().err,
        steps: record.control_steps(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub record: RunRecord,
    pub metrics: Option<Metrics>,
}

impl CellResult {
    pub fn converged(&self) -> bool {
        self.record.status.is_success()
    }
}

/// Runs one study cell on a nominal plant that starts at the path's entry.
pub fn run_cell(
    sim: &SimConfig,
    controller: &ControllerConfig,
    cell: &Cell,
    path: &PathSpec,
) -> Result<CellResult> {
    let mut plant = SimState::new(sim.clone(), path.entry_offset)?;
    let reference = match cell.task {
        Task::PathFollowing => Reference::Path(path.clone()),
        Task::PointStabilization => Reference::Point,
    };
    let task = ControlTask {
        goal: cell.target.goal(),
        reference,
    };
    let record = run_control_loop(&mut plant, &cell.strategy, &task, controller);
    let metrics = compute_metrics(&record, &cell.target).ok();
    Ok(CellResult {
        cell: cell.clone(),
        record,
        metrics,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / libm::sqrt(va * vb)
}
