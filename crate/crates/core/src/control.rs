//! Resolved-rate shape manipulation.
//!
//! Every step applies `Δx = -J⁻¹ Kp (y - y_d)`. The Jacobian either comes
//! from Broyden rank-one updates driven by plant feedback (data-driven) or
//! from central differences on a forked, possibly mis-parameterized copy of
//! the plant (mechanics-based).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::experiments::PathSpec;
use crate::linalg::{dot, norm, scale, sub, Mat3, Vec3};
use crate::sim::SimState;

/// Jacobians with a larger 1-norm condition number are inverted with damping.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Input increments shorter than this do not update a Broyden estimate.
pub const MIN_BROYDEN_STEP: f64 = 1e-12;

/// Maps input rates `[x_base, y_base, y_template]` to output rates
/// `[x_tip, y_tip, k_tip]`.
pub type JacobianEstimate = Mat3;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Diagonal of Kp.
    pub gains: Vec3,
    /// Stop once the tip is this close to the goal, mm.
    pub stop_tolerance: f64,
    pub max_steps: usize,
    /// Central-difference step ε, mm.
    pub probe_epsilon: f64,
    /// Largest lateral input per step after thresholding, mm.
    pub threshold: f64,
    pub threshold_data_driven: bool,
    pub threshold_mechanics: bool,
    /// Size of the three initial Broyden probe moves, mm.
    pub broyden_probe: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: [0.5, 1.0, 0.1],
            stop_tolerance: 0.25,
            max_steps: 400,
            probe_epsilon: 0.01,
            threshold: 0.5,
            threshold_data_driven: true,
            threshold_mechanics: false,
            broyden_probe: 0.1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gains.iter().any(|g| !(*g > 0.0)) {
            return Err(invalid("gains must be positive"));
        }
        if !(self.stop_tolerance > 0.0) {
            return Err(invalid("stop tolerance must be positive"));
        }
        if !(self.probe_epsilon > 0.0) {
            return Err(invalid("probe epsilon must be positive"));
        }
        if !(self.threshold > 0.0) {
            return Err(invalid("threshold must be positive"));
        }
        if !(self.broyden_probe > 0.0) {
            return Err(invalid("broyden probe size must be positive"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Broyden updates from plant feedback only.
    DataDriven,
    /// Central differences on a model fork whose μ values are scaled.
    MechanicsBased { scale: Vec<f64> },
}

impl Strategy {
    pub fn mechanics(scale: f64) -> Self {
        Strategy::MechanicsBased { scale: vec![scale] }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Strategy::DataDriven => "data",
            Strategy::MechanicsBased { .. } => "mech",
        }
    }

    /// Uniform model scale, 1 for the data-driven strategy.
    pub fn scale(&self) -> f64 {
        match self {
            Strategy::DataDriven => 1.0,
            Strategy::MechanicsBased { scale } => scale.first().copied().unwrap_or(1.0),
        }
    }
}

/// Anything that can be driven by input increments and observed.
pub trait Plant {
    fn outputs(&self) -> Vec3;
    fn actuate(&mut self, dx: Vec3) -> Result<()>;
}

/// A static input-to-output map that can be probed without side effects.
pub trait InputOutputModel {
    fn inputs(&self) -> Vec3;
    fn evaluate(&self, x: Vec3) -> Result<Vec3>;
}

impl Plant for SimState {
    fn outputs(&self) -> Vec3 {
        self.observe().to_array()
    }

    fn actuate(&mut self, dx: Vec3) -> Result<()> {
        self.apply_inputs(dx).map(|_| ())
    }
}

impl InputOutputModel for SimState {
    fn inputs(&self) -> Vec3 {
        SimState::inputs(self)
    }

    fn evaluate(&self, x: Vec3) -> Result<Vec3> {
        SimState::evaluate(self, x).map(|o| o.to_array())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub dx: Vec3,
    pub condition: f64,
    /// The damped pseudo-inverse replaced the plain inverse.
    pub damped: bool,
}

/// `Δx = -J⁻¹ Kp (y - y_d)`, falling back to a damped least-squares inverse
/// when `J` is ill-conditioned.
pub fn control_step(j: &JacobianEstimate, y: Vec3, y_d: Vec3, gains: Vec3) -> ControlOutput {
    let e = sub(y, y_d);
    let rhs = [-gains[0] * e[0], -gains[1] * e[1], -gains[2] * e[2]];
    let condition = j.condition();
    if condition < CONDITION_LIMIT {
        if let Some(dx) = j.solve(rhs) {
            return ControlOutput {
                dx,
                condition,
                damped: false,
            };
        }
    }
    let lambda = 1e-6 * j.frobenius();
    let jt = j.transpose();
    let normal = jt * *j + Mat3::identity().scaled(lambda * lambda);
    let dx = normal
        .solve(jt.mul_vec(rhs))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .unwrap_or([0.0; 3]);
    ControlOutput {
        dx,
        condition,
        damped: true,
    }
}

/// Broyden rank-one update; returns the estimate and whether the update was
/// skipped because `Δx` was too short.
pub fn broyden_update(j_prev: &JacobianEstimate, dx: Vec3, dy: Vec3) -> (JacobianEstimate, bool) {
    let n2 = dot(dx, dx);
    if norm(dx) < MIN_BROYDEN_STEP || !n2.is_finite() {
        return (*j_prev, true);
    }
    let miss = sub(dy, j_prev.mul_vec(dx));
    (*j_prev + Mat3::outer(scale(miss, 1.0 / n2), dx), false)
}

/// Initial Jacobian from three real probe moves of `probe` mm, one per input.
pub fn broyden_initialize<P: Plant + ?Sized>(
    plant: &mut P,
    probe: f64,
) -> Result<JacobianEstimate> {
    broyden_initialize_with(plant, probe, |_, _| {})
}

/// [`broyden_initialize`] that reports every probe move and the plant after it.
pub fn broyden_initialize_with<P: Plant + ?Sized>(
    plant: &mut P,
    probe: f64,
    mut on_probe: impl FnMut(&P, Vec3),
) -> Result<JacobianEstimate> {
    if !(probe > 0.0 && probe.is_finite()) {
        return Err(invalid("probe size must be positive"));
    }
    let mut cols = [[0.0; 3]; 3];
    for (j, col) in cols.iter_mut().enumerate() {
        let mut dx = [0.0; 3];
        dx[j] = probe;
        let before = plant.outputs();
        plant
            .actuate(dx)
            .map_err(|e| Error::PlantFault(format!("broyden probe {j}: {e}")))?;
        *col = scale(sub(plant.outputs(), before), 1.0 / probe);
        on_probe(plant, dx);
    }
    Ok(Mat3::from_columns(cols))
}

/// Central-difference Jacobian of `model` around its current inputs.
pub fn finite_difference_jacobian<M: InputOutputModel + ?Sized>(
    model: &M,
    epsilon: f64,
) -> Result<JacobianEstimate> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon must be positive"));
    }
    let x = model.inputs();
    let mut cols = [[0.0; 3]; 3];
    for (j, col) in cols.iter_mut().enumerate() {
        let mut plus = x;
        let mut minus = x;
        plus[j] += epsilon;
        minus[j] -= epsilon;
        let fp = model
            .evaluate(plus)
            .map_err(|e| Error::JacobianFailure(format!("+ε probe on input {j}: {e}")))?;
        let fm = model
            .evaluate(minus)
            .map_err(|e| Error::JacobianFailure(format!("-ε probe on input {j}: {e}")))?;
        *col = scale(sub(fp, fm), 0.5 / epsilon);
    }
    Ok(Mat3::from_columns(cols))
}

/// Uniformly shrinks `dx` so neither lateral input exceeds `max_lateral`.
pub fn threshold_scale(dx: Vec3, max_lateral: f64) -> (Vec3, bool) {
    let peak = dx[1].abs().max(dx[2].abs());
    if peak > max_lateral {
        (scale(dx, max_lateral / peak), true)
    } else {
        (dx, false)
    }
}

/// `√((x_tip - x_goal)² + (y_tip - y_goal)²)`
pub fn error_mag(y: Vec3, goal: Vec3) -> f64 {
    libm::hypot(y[0] - goal[0], y[1] - goal[1])
}

/// What the controller is asked to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Track waypoints, one insertion step ahead of the tip.
    Path(PathSpec),
    /// Regulate straight to the goal pose.
    Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlTask {
    /// `[x_goal, y_goal, k_goal]`
    pub goal: Vec3,
    pub reference: Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Initial,
    Probe,
    Control,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::Probe => "probe",
            StepKind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub kind: StepKind,
    /// Plant inputs after the step.
    pub inputs: Vec3,
    /// Plant outputs after the step.
    pub outputs: Vec3,
    /// Desired outputs the step aimed for.
    pub reference: Vec3,
    /// Tip error after the step.
    pub err: f64,
    /// Condition number of the Jacobian used (NaN for non-control rows).
    pub condition: f64,
    pub damped: bool,
    pub thresholded: bool,
    pub contacts: usize,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxSteps,
    PlantFault(String),
    ModelFault(String),
    /// The plant state changed while the model fork was probed.
    IsolationViolated,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxSteps => "max_steps",
            RunStatus::PlantFault(_) => "plant_fault",
            RunStatus::ModelFault(_) => "model_fault",
            RunStatus::IsolationViolated => "isolation_violated",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, RunStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub goal: Vec3,
    pub steps: Vec<StepLog>,
    pub status: RunStatus,
}

impl RunRecord {
    /// Number of control steps taken (probes excluded).
    pub fn control_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.kind == StepKind::Control)
            .count()
    }

    pub fn final_err(&self) -> Option<f64> {
        self.steps.last().map(|s| s.err)
    }
}

fn log_row(plant: &SimState, step: usize, kind: StepKind, goal: Vec3, reference: Vec3) -> StepLog {
    let outputs = plant.observe().to_array();
    StepLog {
        step,
        kind,
        inputs: plant.inputs(),
        outputs,
        reference,
        err: error_mag(outputs, goal),
        condition: f64::NAN,
        damped: false,
        thresholded: false,
        contacts: plant.contacts().len(),
        newton_iterations: plant.newton_iterations(),
    }
}

/// Runs the feedback loop until the tip is within tolerance of the goal or
/// the step budget is spent.
///
/// The reference leads the tip by one insertion step along x (capped at the
/// goal depth), so the insertion advance enters `Δx_base` through the x row of
/// the control law. Insertion is never reversed and never carried past the
/// goal depth.
pub fn run_control_loop(
    plant: &mut SimState,
    strategy: &Strategy,
    task: &ControlTask,
    config: &ControllerConfig,
) -> RunRecord {
    let goal = task.goal;
    let mut record = RunRecord {
        goal,
        steps: vec![log_row(
            plant,
            0,
            StepKind::Initial,
            goal,
            plant.observe().to_array(),
        )],
        status: RunStatus::MaxSteps,
    };
    if let Err(e) = config.validate() {
        record.status = RunStatus::PlantFault(e.to_string());
        return record;
    }
    let step_len = plant.config().insertion_step;

    let mut jacobian = Mat3::identity();
    let mut model = None;
    match strategy {
        Strategy::DataDriven => {
            if error_mag(plant.observe().to_array(), goal) > config.stop_tolerance {
                let mut probes = Vec::new();
                let res = broyden_initialize_with(plant, config.broyden_probe, |p, _| {
                    probes.push(log_row(p, 0, StepKind::Probe, goal, p.observe().to_array()));
                });
                for (i, mut row) in probes.into_iter().enumerate() {
                    row.step = i + 1;
                    record.steps.push(row);
                }
                match res {
                    Ok(j) => jacobian = j,
                    Err(e) => {
                        record.status = RunStatus::PlantFault(e.to_string());
                        return record;
                    }
                }
            }
        }
        Strategy::MechanicsBased { scale } => match plant.fork_model(scale) {
            Ok(fork) => model = Some(fork),
            Err(e) => {
                record.status = RunStatus::ModelFault(e.to_string());
                return record;
            }
        },
    }

    let mut control_steps = 0;
    loop {
        let y = plant.observe().to_array();
        if error_mag(y, goal) <= config.stop_tolerance {
            record.status = RunStatus::Converged;
            break;
        }
        if control_steps >= config.max_steps {
            record.status = RunStatus::MaxSteps;
            break;
        }

        let remaining = (goal[0] - y[0]).max(0.0);
        let advance = remaining.min(step_len);
        let reference = match &task.reference {
            Reference::Path(path) => path.sample(y[0] + advance),
            Reference::Point => [y[0] + advance, goal[1], goal[2]],
        };

        if let Some(fork) = &model {
            let before = plant.state_hash();
            let fd = finite_difference_jacobian(fork, config.probe_epsilon);
            if plant.state_hash() != before {
                record.status = RunStatus::IsolationViolated;
                break;
            }
            match fd {
                Ok(j) => jacobian = j,
                Err(e) => {
                    record.status = RunStatus::ModelFault(e.to_string());
                    break;
                }
            }
        }

        let out = control_step(&jacobian, y, reference, config.gains);
        let use_threshold = match strategy {
            Strategy::DataDriven => config.threshold_data_driven,
            Strategy::MechanicsBased { .. } => config.threshold_mechanics,
        };
        let (mut dx, thresholded) = if use_threshold {
            threshold_scale(out.dx, config.threshold)
        } else {
            (out.dx, false)
        };
        dx[0] = dx[0].clamp(0.0, remaining);

        if let Err(e) = plant.apply_inputs(dx) {
            record.status = RunStatus::PlantFault(e.to_string());
            break;
        }
        if let Some(fork) = model.as_mut() {
            if let Err(e) = fork.apply_inputs(dx) {
                record.status = RunStatus::ModelFault(e.to_string());
                break;
            }
        }
        control_steps += 1;

        let y_new = plant.observe().to_array();
        if matches!(strategy, Strategy::DataDriven) {
            jacobian = broyden_update(&jacobian, dx, sub(y_new, y)).0;
        }
        let mut row = log_row(
            plant,
            record.steps.len(),
            StepKind::Control,
            goal,
            reference,
        );
        row.condition = out.condition;
        row.damped = out.damped;
        row.thresholded = thresholded;
        record.steps.push(row);
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::add;

    #[test]
    fn control_step_examples() {
        let kp = [0.5, 1.0, 0.1];
        let j = Mat3::identity();
        assert_eq!(
            control_step(&j, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], kp).dx,
            [0.0; 3]
        );
        let out = control_step(&j, [1.0, 1.0, 1.0], [0.0; 3], kp);
        assert_eq!(out.dx, [-0.5, -1.0, -0.1]);
        assert!(!out.damped);
        let out = control_step(&Mat3::diag([2.0, 4.0, 10.0]), [1.0, 1.0, 1.0], [0.0; 3], kp);
        for (a, b) in out.dx.iter().zip([-0.25, -0.25, -0.01]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_jacobian_uses_damped_inverse() {
        let j = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]]);
        let out = control_step(&j, [1.0, 1.0, 0.0], [0.0; 3], [1.0; 3]);
        assert!(out.damped);
        assert!(out.dx.iter().all(|v| v.is_finite()));
        // least-squares direction: split evenly over the two dependent inputs
        assert!((out.dx[0] + 1.0).abs() < 1e-9);
        assert!((out.dx[1] - out.dx[2]).abs() < 1e-9);
    }

    #[test]
    fn broyden_examples() {
        let (j, skipped) = broyden_update(&Mat3::identity(), [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]);
        assert!(!skipped);
        assert_eq!(j, Mat3::diag([2.0, 1.0, 1.0]));

        let prev = Mat3([[1.0, 2.0, 0.5], [0.0, 3.0, -1.0], [4.0, 0.0, 1.0]]);
        let dx = [0.3, -0.2, 0.7];
        let (same, _) = broyden_update(&prev, dx, prev.mul_vec(dx));
        assert_eq!(same, prev);

        let (kept, skipped) = broyden_update(&prev, [0.0; 3], [1.0, 1.0, 1.0]);
        assert!(skipped);
        assert_eq!(kept, prev);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(
            threshold_scale([1.0, 0.2, 0.3], 0.5),
            ([1.0, 0.2, 0.3], false)
        );
        assert_eq!(
            threshold_scale([1.0, 2.0, 1.0], 0.5),
            ([0.25, 0.5, 0.25], true)
        );
        assert_eq!(
            threshold_scale([0.0, -4.0, -2.0], 0.5),
            ([0.0, -0.5, -0.25], true)
        );
    }

    #[test]
    fn error_magnitude_ignores_slope() {
        assert_eq!(error_mag([3.0, 4.0, 9.0], [0.0, 0.0, -9.0]), 5.0);
    }

    struct Linear {
        a: Mat3,
        x: Vec3,
    }

    impl Plant for Linear {
        fn outputs(&self) -> Vec3 {
            self.a.mul_vec(self.x)
        }
        fn actuate(&mut self, dx: Vec3) -> Result<()> {
            self.x = add(self.x, dx);
            Ok(())
        }
    }

    #[test]
    fn probing_a_linear_plant_recovers_its_matrix() {
        let a = Mat3([[1.0, 0.0, 0.0], [0.2, -0.5, 1.5], [0.01, 0.03, 0.07]]);
        let mut p = Linear { a, x: [0.0; 3] };
        let j = broyden_initialize(&mut p, 0.1).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert!((j.0[i][k] - a.0[i][k]).abs() < 1e-12);
            }
        }
        assert!(broyden_initialize(&mut p, 0.0).is_err());
    }
}
