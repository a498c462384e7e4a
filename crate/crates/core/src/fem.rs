//! Static Euler-Bernoulli beam on nonlinear point springs.
//!
//! Two-node Hermite cubic elements carry a lateral deflection `v` and a
//! rotation `θ` per node (DOF order `v0, θ0, v1, θ1, ...`). Contact springs
//! may sit anywhere inside an element; their force and tangent are spread to
//! the element DOFs through the Hermite shape functions. Essential boundary
//! conditions are eliminated from the Newton system, which stays banded and
//! symmetric positive definite.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::SymBand;
use crate::tissue::{foundation_force, foundation_force_slope, LayerStack};

/// Half-bandwidth of the assembled system: one element spans four DOFs.
const BANDWIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NeedleProperties {
    /// mm
    pub length: f64,
    /// EI, N·mm²
    pub flexural_rigidity: f64,
    /// Target element size, mm.
    pub element_length: f64,
    /// Outer diameter, mm. Not used by the mechanics.
    pub diameter: f64,
}

impl Default for NeedleProperties {
    /// 18 gauge solid stainless needle, 170 mm long, 1 mm elements.
    fn default() -> Self {
        Self {
            length: 170.0,
            flexural_rigidity: 2.55e4,
            element_length: 1.0,
            diameter: 1.27,
        }
    }
}

impl NeedleProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.flexural_rigidity > 0.0 && self.flexural_rigidity.is_finite()) {
            return Err(invalid("flexural rigidity must be positive"));
        }
        if !(self.element_length > 0.0 && self.length > 0.0) {
            return Err(invalid("needle and element lengths must be positive"));
        }
        let n = self.length / self.element_length;
        if (n - libm::round(n)).abs() > 1e-9 * n.max(1.0) {
            return Err(invalid("needle length must be a whole number of elements"));
        }
        Ok(())
    }
}

/// Bending stiffness of one element, DOFs `[v_i, θ_i, v_j, θ_j]`.
pub fn element_matrix(ei: f64, h: f64) -> [[f64; 4]; 4] {
    let c = ei / (h * h * h);
    let (h2, hh) = (h * h, h);
    [
        [12.0 * c, 6.0 * hh * c, -12.0 * c, 6.0 * hh * c],
        [6.0 * hh * c, 4.0 * h2 * c, -6.0 * hh * c, 2.0 * h2 * c],
        [-12.0 * c, -6.0 * hh * c, 12.0 * c, -6.0 * hh * c],
        [6.0 * hh * c, 2.0 * h2 * c, -6.0 * hh * c, 4.0 * h2 * c],
    ]
}

/// Hermite shape functions at local coordinate `xi ∈ [0, 1]`.
pub fn hermite(xi: f64, h: f64) -> [f64; 4] {
    let (x2, x3) = (xi * xi, xi * xi * xi);
    [
        1.0 - 3.0 * x2 + 2.0 * x3,
        h * (xi - 2.0 * x2 + x3),
        3.0 * x2 - 2.0 * x3,
        h * (x3 - x2),
    ]
}

/// Axial derivatives of [`hermite`].
pub fn hermite_slope(xi: f64, h: f64) -> [f64; 4] {
    let x2 = xi * xi;
    [
        (-6.0 * xi + 6.0 * x2) / h,
        1.0 - 4.0 * xi + 3.0 * x2,
        (6.0 * xi - 6.0 * x2) / h,
        3.0 * x2 - 2.0 * xi,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// Prescribes deflection and rotation.
    Clamp { deflection: f64, rotation: f64 },
    /// Prescribes deflection only.
    Roller { deflection: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub node: usize,
    pub support: Support,
}

impl BoundaryCondition {
    pub fn clamp(node: usize, deflection: f64, rotation: f64) -> Self {
        Self {
            node,
            support: Support::Clamp {
                deflection,
                rotation,
            },
        }
    }

    pub fn roller(node: usize, deflection: f64) -> Self {
        Self {
            node,
            support: Support::Roller { deflection },
        }
    }

    fn prescribed(&self) -> impl Iterator<Item = (usize, f64)> {
        let (v, t) = match self.support {
            Support::Clamp {
                deflection,
                rotation,
            } => (deflection, Some(rotation)),
            Support::Roller { deflection } => (deflection, None),
        };
        let n = self.node;
        core::iter::once((2 * n, v)).chain(t.map(|t| (2 * n + 1, t)))
    }
}

/// Spring anchor left behind by the cutting tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    /// Axial position in the tissue frame, mm.
    pub station: f64,
    /// Lateral rest position of the spring, mm.
    pub rest: f64,
    /// Index into the layer stack.
    pub layer: usize,
}

/// Force law of the contact springs.
pub trait ContactLaw {
    /// Force magnitude and its derivative for a non-negative compression.
    fn response(&self, contact: &ContactPoint, compression: f64) -> Result<(f64, f64)>;
}

/// Strain-hardening tissue reaction integrated over a tributary length.
#[derive(Debug, Clone, Copy)]
pub struct TissueFoundation<'a> {
    pub stack: &'a LayerStack,
    /// Effective contact width, mm.
    pub contact_width: f64,
    /// Axial length of tissue represented by one contact, mm.
    pub tributary: f64,
}

impl ContactLaw for TissueFoundation<'_> {
    fn response(&self, contact: &ContactPoint, compression: f64) -> Result<(f64, f64)> {
        let layer = self
            .stack
            .layers()
            .get(contact.layer)
            .ok_or_else(|| invalid("contact references a missing layer"))?;
        let f = foundation_force(layer, compression, self.contact_width)?;
        let df = foundation_force_slope(layer, compression, self.contact_width)?;
        Ok((f * self.tributary, df * self.tributary))
    }
}

/// Linear springs of fixed stiffness (N/mm); used to check the solver
/// against closed forms.
#[derive(Debug, Clone, Copy)]
pub struct LinearSprings(pub f64);

impl ContactLaw for LinearSprings {
    fn response(&self, _: &ContactPoint, compression: f64) -> Result<(f64, f64)> {
        Ok((self.0 * compression, self.0))
    }
}

/// Nodal deflections and rotations on a (possibly non-uniform) mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    /// Node axial positions, strictly increasing, mm.
    pub nodes: Vec<f64>,
    pub deflection: Vec<f64>,
    pub rotation: Vec<f64>,
}

impl BeamState {
    pub fn straight(nodes: Vec<f64>, deflection: f64) -> Self {
        let n = nodes.len();
        Self {
            nodes,
            deflection: vec![deflection; n],
            rotation: vec![0.0; n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Element containing `x` and the local coordinate inside it.
    fn locate(&self, x: f64) -> (usize, f64) {
        let ne = self.element_count();
        let e = self.nodes.partition_point(|&n| n <= x).clamp(1, ne) - 1;
        let h = self.nodes[e + 1] - self.nodes[e];
        (e, (x - self.nodes[e]) / h)
    }

    fn element_dofs(&self, e: usize) -> [f64; 4] {
        [
            self.deflection[e],
            self.rotation[e],
            self.deflection[e + 1],
            self.rotation[e + 1],
        ]
    }

    /// Deflection and slope at `x`; linear extrapolation outside the mesh.
    pub fn sample(&self, x: f64) -> (f64, f64) {
        let last = self.nodes.len() - 1;
        if x <= self.nodes[0] {
            let t = self.rotation[0];
            return (self.deflection[0] + t * (x - self.nodes[0]), t);
        }
        if x >= self.nodes[last] {
            let t = self.rotation[last];
            return (self.deflection[last] + t * (x - self.nodes[last]), t);
        }
        let (e, xi) = self.locate(x);
        let h = self.nodes[e + 1] - self.nodes[e];
        let d = self.element_dofs(e);
        let n = hermite(xi, h);
        let dn = hermite_slope(xi, h);
        (
            (0..4).map(|k| n[k] * d[k]).sum(),
            (0..4).map(|k| dn[k] * d[k]).sum(),
        )
    }

    /// Interpolates this state onto a new mesh (warm start).
    pub fn remesh(&self, nodes: Vec<f64>) -> BeamState {
        let (deflection, rotation) = nodes.iter().map(|&x| self.sample(x)).unzip();
        BeamState {
            nodes,
            deflection,
            rotation,
        }
    }

    /// `(x_tip, y_tip, k_tip)` of the last node.
    pub fn tip(&self) -> [f64; 3] {
        let last = self.nodes.len() - 1;
        [self.nodes[last], self.deflection[last], self.rotation[last]]
    }

    fn dof(&self, i: usize) -> f64 {
        if i.is_multiple_of(2) {
            self.deflection[i / 2]
        } else {
            self.rotation[i / 2]
        }
    }

    fn dof_mut(&mut self, i: usize) -> &mut f64 {
        if i.is_multiple_of(2) {
            &mut self.deflection[i / 2]
        } else {
            &mut self.rotation[i / 2]
        }
    }
}

/// Evenly spaced nodes from `start` to `end` with spacing at most `max_h`.
pub fn uniform_nodes(start: f64, end: f64, max_h: f64) -> Vec<f64> {
    let len = end - start;
    let n = (libm::ceil(len / max_h - 1e-9) as usize).max(1);
    let h = len / n as f64;
    (0..=n)
        .map(|i| if i == n { end } else { start + h * i as f64 })
        .collect()
}

/// Needle mesh from `x_base` to `x_base + length` with a node exactly at
/// `station`; returns the nodes and the index of the station node.
pub fn needle_nodes(x_base: f64, length: f64, station: f64, max_h: f64) -> (Vec<f64>, usize) {
    let end = x_base + length;
    if station <= x_base || station >= end {
        return (uniform_nodes(x_base, end, max_h), usize::MAX);
    }
    let mut nodes = uniform_nodes(x_base, station, max_h);
    let idx = nodes.len() - 1;
    nodes.extend(uniform_nodes(station, end, max_h).into_iter().skip(1));
    (nodes, idx)
}

/// Everything the static solve needs besides the unknown state.
#[derive(Clone, Copy)]
pub struct BeamProblem<'a> {
    pub flexural_rigidity: f64,
    pub supports: &'a [BoundaryCondition],
    pub contacts: &'a [ContactPoint],
    pub law: &'a dyn ContactLaw,
    /// External nodal loads as `(dof, force)`.
    pub loads: &'a [(usize, f64)],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    /// Tangent with prescribed rows and columns eliminated.
    pub tangent: SymBand,
    /// Internal minus external force; zero on prescribed DOFs.
    pub residual: Vec<f64>,
}

impl BeamProblem<'_> {
    fn prescribed(&self, nodes: usize) -> Result<Vec<(usize, f64)>> {
        let mut seen = vec![false; nodes];
        let mut clamps = 0;
        let mut rollers = 0;
        let mut out = Vec::new();
        for bc in self.supports {
            if bc.node >= nodes {
                return Err(Error::InvalidBoundary(alloc::format!(
                    "node {} of {nodes}",
                    bc.node
                )));
            }
            if core::mem::replace(&mut seen[bc.node], true) {
                return Err(Error::InvalidBoundary(alloc::format!(
                    "two conditions on node {}",
                    bc.node
                )));
            }
            match bc.support {
                Support::Clamp { .. } => clamps += 1,
                Support::Roller { .. } => rollers += 1,
            }
            out.extend(bc.prescribed());
        }
        if self.contacts.is_empty() && clamps == 0 && rollers < 2 {
            return Err(Error::InvalidBoundary(
                "supports leave a rigid-body mode".into(),
            ));
        }
        Ok(out)
    }

    /// Residual and tangent at `state`.
    pub fn assemble(&self, state: &BeamState) -> Result<Assembly> {
        let prescribed = self.prescribed(state.node_count())?;
        self.assemble_with(state, &prescribed)
    }

    fn assemble_with(&self, state: &BeamState, prescribed: &[(usize, f64)]) -> Result<Assembly> {
        let ndof = 2 * state.node_count();
        let mut tangent = SymBand::zeros(ndof, BANDWIDTH);
        let mut residual = vec![0.0; ndof];

        for e in 0..state.element_count() {
            let h = state.nodes[e + 1] - state.nodes[e];
            let ke = element_matrix(self.flexural_rigidity, h);
            let d = state.element_dofs(e);
            for a in 0..4 {
                residual[2 * e + a] += (0..4).map(|b| ke[a][b] * d[b]).sum::<f64>();
                for b in a..4 {
                    tangent.add(2 * e + a, 2 * e + b, ke[a][b]);
                }
            }
        }

        let (start, end) = (state.start(), state.end());
        let tol = 1e-9 * (end - start).abs().max(1.0);
        for c in self.contacts {
            if c.station < start - tol || c.station > end + tol {
                return Err(Error::ContactOutsideBeam {
                    station: c.station,
                    start,
                    end,
                });
            }
            let (e, xi) = state.locate(c.station.clamp(start, end));
            let h = state.nodes[e + 1] - state.nodes[e];
            let n = hermite(xi.clamp(0.0, 1.0), h);
            let d = state.element_dofs(e);
            let w: f64 = (0..4).map(|k| n[k] * d[k]).sum();
            let gap = w - c.rest;
            let (f, df) = self.law.response(c, gap.abs())?;
            let f = libm::copysign(f, gap);
            for a in 0..4 {
                residual[2 * e + a] += n[a] * f;
                for b in a..4 {
                    tangent.add(2 * e + a, 2 * e + b, df * n[a] * n[b]);
                }
            }
        }

        for &(dof, p) in self.loads {
            if dof >= ndof {
                return Err(invalid("load on a missing DOF"));
            }
            residual[dof] -= p;
        }
        for &(dof, _) in prescribed {
            residual[dof] = 0.0;
            tangent.eliminate(dof);
        }
        Ok(Assembly { tangent, residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Residual ∞-norm at convergence, N.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: BeamState,
    pub iterations: usize,
    pub residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton-Raphson equilibrium solve, warm-started from `initial`.
///
/// Updates that increase the residual are halved (up to 30 times).
pub fn solve_static(
    problem: &BeamProblem<'_>,
    initial: BeamState,
    options: &SolveOptions,
) -> Result<Solution> {
    let mut state = initial;
    if state.node_count() < 2 {
        return Err(invalid("beam needs at least one element"));
    }
    let prescribed = problem.prescribed(state.node_count())?;
    for &(dof, value) in &prescribed {
        *state.dof_mut(dof) = value;
    }

    let mut asm = problem.assemble_with(&state, &prescribed)?;
    let mut r = inf_norm(&asm.residual);
    let mut trace = vec![r];
    for it in 0..=options.max_iterations {
        if r <= options.tolerance {
            return Ok(Solution {
                state,
                iterations: it,
                residual: r,
            });
        }
        if it == options.max_iterations {
            break;
        }
        let rhs: Vec<f64> = asm.residual.iter().map(|x| -x).collect();
        let delta = asm.tangent.solve(&rhs)?;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let mut trial = state.clone();
            for (i, d) in delta.iter().enumerate() {
                *trial.dof_mut(i) += step * d;
            }
            let trial_asm = problem.assemble_with(&trial, &prescribed)?;
            let tr = inf_norm(&trial_asm.residual);
            if tr.is_finite() && tr < r {
                accepted = Some((trial, trial_asm, tr));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((s, a, tr)) => {
                state = s;
                asm = a;
                r = tr;
                trace.push(r);
            }
            None => {
                // no descent left: the residual sits at roundoff level
                let scale = delta.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
                let size = (0..2 * state.node_count())
                    .map(|i| state.dof(i).abs())
                    .fold(1.0, f64::max);
                if scale <= 1e-12 * size && r <= 1e3 * options.tolerance {
                    return Ok(Solution {
                        state,
                        iterations: it + 1,
                        residual: r,
                    });
                }
                break;
            }
        }
    }
    Err(Error::SolverDiverged {
        iterations: trace.len() - 1,
        residuals: trace,
    })
}

/// `(x_tip, y_tip, k_tip)` of a converged needle state.
pub fn tip_outputs(state: &BeamState) -> [f64; 3] {
    state.tip()
}
