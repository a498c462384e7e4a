use needle_core::fem::*;
use needle_core::tissue::LayerStack;
use needle_core::Result;

const EI: f64 = 2.55e4;
const NO_CONTACTS: &[ContactPoint] = &[];

fn cantilever_tip(length: f64, h: f64, load: f64) -> f64 {
    let nodes = uniform_nodes(0.0, length, h);
    let n = nodes.len();
    let bcs = [BoundaryCondition::clamp(0, 0.0, 0.0)];
    let loads = [(2 * (n - 1), load)];
    let p = BeamProblem {
        flexural_rigidity: EI,
        supports: &bcs,
        contacts: NO_CONTACTS,
        law: &LinearSprings(0.0),
        loads: &loads,
    };
    let sol = solve_static(
        &p,
        BeamState::straight(nodes, 0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    tip_outputs(&sol.state)[1]
}

#[test]
fn cantilever_matches_closed_form() {
    let (l, p) = (170.0, 0.01);
    let exact = p * l * l * l / (3.0 * EI);
    let v = cantilever_tip(l, 1.0, p);
    assert!(((v - exact) / exact).abs() < 1e-3, "{v} vs {exact}");
}

#[test]
fn cantilever_converged_under_mesh_halving() {
    let coarse = cantilever_tip(170.0, 1.0, 0.01);
    let fine = cantilever_tip(170.0, 0.5, 0.01);
    assert!(((fine - coarse) / coarse).abs() < 5e-4);
}

#[test]
fn clamp_roller_follows_cubic() {
    let (l, delta) = (22.0, 0.7);
    let nodes = uniform_nodes(0.0, l, 1.0);
    let last = nodes.len() - 1;
    let bcs = [
        BoundaryCondition::clamp(0, 0.0, 0.0),
        BoundaryCondition::roller(last, delta),
    ];
    let p = BeamProblem {
        flexural_rigidity: EI,
        supports: &bcs,
        contacts: NO_CONTACTS,
        law: &LinearSprings(0.0),
        loads: &[],
    };
    let sol = solve_static(
        &p,
        BeamState::straight(nodes, 0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    for i in 0..=44 {
        let x = i as f64 * 0.5;
        let exact = delta * (1.5 * x * x / (l * l) - 0.5 * x * x * x / (l * l * l));
        let (v, _) = sol.state.sample(x);
        assert!((v - exact).abs() < 1e-9, "x = {x}: {v} vs {exact}");
    }
}

#[test]
fn end_spring_cantilever() {
    let (l, k, load) = (50.0, 2.0, 0.3);
    let nodes = uniform_nodes(0.0, l, 1.0);
    let n = nodes.len();
    let bcs = [BoundaryCondition::clamp(0, 0.0, 0.0)];
    let contacts = [ContactPoint {
        station: l,
        rest: 0.0,
        layer: 0,
    }];
    let loads = [(2 * (n - 1), load)];
    let p = BeamProblem {
        flexural_rigidity: EI,
        supports: &bcs,
        contacts: &contacts,
        law: &LinearSprings(k),
        loads: &loads,
    };
    let sol = solve_static(
        &p,
        BeamState::straight(nodes, 0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    let exact = load / (k + 3.0 * EI / (l * l * l));
    let v = tip_outputs(&sol.state)[1];
    assert!(((v - exact) / exact).abs() < 1e-9, "{v} vs {exact}");
}

/// Nodal springs carrying `k h`, halved at the two free ends.
struct Tributary {
    k: f64,
    h: f64,
    end: f64,
}

impl ContactLaw for Tributary {
    fn response(&self, c: &ContactPoint, compression: f64) -> Result<(f64, f64)> {
        let w = if c.station == 0.0 || c.station == self.end {
            0.5 * self.h
        } else {
            self.h
        };
        Ok((self.k * w * compression, self.k * w))
    }
}

#[test]
fn semi_infinite_winkler_beam() {
    let (l, h, k, load) = (400.0, 1.0, 1.0, 1.0);
    let nodes = uniform_nodes(0.0, l, h);
    let contacts: Vec<ContactPoint> = nodes
        .iter()
        .map(|&x| ContactPoint {
            station: x,
            rest: 0.0,
            layer: 0,
        })
        .collect();
    let law = Tributary { k, h, end: l };
    let loads = [(0, load)];
    let p = BeamProblem {
        flexural_rigidity: EI,
        supports: &[],
        contacts: &contacts,
        law: &law,
        loads: &loads,
    };
    let sol = solve_static(
        &p,
        BeamState::straight(nodes, 0.0),
        &SolveOptions::default(),
    )
    .unwrap();
    let beta = (k / (4.0 * EI)).powf(0.25);
    let exact = 2.0 * load * beta / k;
    let v = sol.state.deflection[0];
    assert!(((v - exact) / exact).abs() < 0.01, "{v} vs {exact}");
}

fn tissue_problem_state() -> (LayerStack, Vec<ContactPoint>, BeamState) {
    let stack = LayerStack::phantom();
    let contacts: Vec<ContactPoint> = (1..=30)
        .map(|i| {
            let x = i as f64;
            ContactPoint {
                station: x,
                rest: -0.02 * x,
                layer: stack.index_at(x).unwrap(),
            }
        })
        .collect();
    let nodes = uniform_nodes(-140.0, 30.0, 1.0);
    (stack, contacts, BeamState::straight(nodes, 0.0))
}

#[test]
fn tangent_matches_residual_derivative_and_solve_is_deterministic() {
    let (stack, contacts, state) = tissue_problem_state();
    let law = TissueFoundation {
        stack: &stack,
        contact_width: 3e-6,
        tributary: 1.0,
    };
    let bcs = [
        BoundaryCondition::clamp(0, 0.0, 0.0),
        BoundaryCondition::roller(118, 0.0),
    ];
    let p = BeamProblem {
        flexural_rigidity: EI,
        supports: &bcs,
        contacts: &contacts,
        law: &law,
        loads: &[],
    };
    let a = solve_static(&p, state.clone(), &SolveOptions::default()).unwrap();
    let b = solve_static(&p, state, &SolveOptions::default()).unwrap();
    assert_eq!(a, b);
    assert!(a.residual <= 1e-8);

    let asm = p.assemble(&a.state).unwrap();
    let tip = a.state.node_count() - 1;
    let dof = 2 * tip;
    let eps = 1e-6;
    let mut plus = a.state.clone();
    plus.deflection[tip] += eps;
    let mut minus = a.state.clone();
    minus.deflection[tip] -= eps;
    let rp = p.assemble(&plus).unwrap().residual;
    let rm = p.assemble(&minus).unwrap().residual;
    for row in dof.saturating_sub(3)..2 * a.state.node_count() {
        let fd = (rp[row] - rm[row]) / (2.0 * eps);
        let an = asm.tangent.get(row, dof);
        assert!(
            (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
            "row {row}: {fd} vs {an}"
        );
        assert_eq!(an, asm.tangent.get(dof, row));
    }
}

#[test]
fn foundation_tangent_at_rest_is_three_mu_width() {
    let stack = LayerStack::phantom();
    let law = TissueFoundation {
        stack: &stack,
        contact_width: 0.5,
        tributary: 1.0,
    };
    for (i, layer) in stack.layers().iter().enumerate() {
        let c = ContactPoint {
            station: 0.0,
            rest: 0.0,
            layer: i,
        };
        let (f, df) = law.response(&c, 0.0).unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(df, 3.0 * layer.shear_modulus * 0.5);
    }
}
