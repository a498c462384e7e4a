//! Time-stepped insertion plant.
//!
//! The needle is clamped (zero slope) at its base and passes through a
//! template roller 22 mm proximal of the skin. Each control step moves those
//! supports; whenever the tip reaches a new carving station inside tissue, a
//! contact spring is left behind whose rest position is the tip deflection
//! at that moment plus the bevel offset. The beam is then re-solved for
//! static equilibrium.
//!
//! The static problem has no memory beyond the contact list, so the mesh is
//! rebuilt in the tissue frame at every solve: nodes run from the base to
//! the tip with one node pinned to the template station.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::fem::{
    needle_nodes, solve_static, BeamProblem, BeamState, BoundaryCondition, ContactPoint,
    NeedleProperties, Solution, SolveOptions, TissueFoundation,
};
use crate::linalg::Vec3;
use crate::tissue::LayerStack;

/// Deepest step bisection tried before a solve is reported as a plant fault.
const MAX_BISECTIONS: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub needle: NeedleProperties,
    pub stack: LayerStack,
    /// Lateral offset of each new contact relative to the cut, mm.
    pub bevel_offset: f64,
    /// Distance from the template to the skin, mm.
    pub template_offset: f64,
    /// Nominal insertion per control step, mm.
    pub insertion_step: f64,
    /// Converts the layer moduli to a line stiffness, mm.
    pub contact_width: f64,
    /// Multipliers on each layer's μ (one entry scales all layers).
    pub parameter_scale: Vec<f64>,
    pub solver: SolveOptions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            needle: NeedleProperties::default(),
            stack: LayerStack::phantom(),
            bevel_offset: -0.99,
            template_offset: 22.0,
            insertion_step: 1.0,
            contact_width: 3e-6,
            parameter_scale: vec![1.0],
            solver: SolveOptions::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.needle.validate()?;
        let ratio = self.insertion_step / self.needle.element_length;
        if !(self.insertion_step > 0.0) || (ratio - libm::round(ratio)).abs() > 1e-9 {
            return Err(invalid(
                "insertion step must be a positive multiple of the element length",
            ));
        }
        if !(self.template_offset > 0.0) || self.template_offset >= self.needle.length {
            return Err(invalid("template must sit between the base and the skin"));
        }
        if !(self.contact_width > 0.0) {
            return Err(invalid("contact width must be positive"));
        }
        if !self.bevel_offset.is_finite() {
            return Err(invalid("bevel offset must be finite"));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(invalid(
                "solver tolerance and iteration cap must be positive",
            ));
        }
        self.stack.scaled(&self.parameter_scale)?;
        Ok(())
    }

    /// Axial position of the template in the tissue frame.
    pub fn template_station(&self) -> f64 {
        -self.template_offset
    }
}

/// Needle tip position and slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputVector {
    pub x_tip: f64,
    pub y_tip: f64,
    pub k_tip: f64,
}

impl OutputVector {
    pub fn to_array(self) -> Vec3 {
        [self.x_tip, self.y_tip, self.k_tip]
    }
}

impl From<Vec3> for OutputVector {
    fn from(v: Vec3) -> Self {
        Self {
            x_tip: v[0],
            y_tip: v[1],
            k_tip: v[2],
        }
    }
}

impl From<OutputVector> for Vec3 {
    fn from(o: OutputVector) -> Self {
        o.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub contacts_added: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    config: SimConfig,
    /// Layer stack with `parameter_scale` applied.
    stack: LayerStack,
    /// `[x_base, y_base, y_template]`
    inputs: Vec3,
    contacts: Vec<ContactPoint>,
    beam: BeamState,
    /// `(station, tip deflection)` at each carving event.
    cut_path: Vec<(f64, f64)>,
    newton_iterations: usize,
}

impl SimState {
    /// Needle poised with its tip on the skin, both supports at
    /// `entry_offset`.
    pub fn new(config: SimConfig, entry_offset: f64) -> Result<Self> {
        config.validate()?;
        if !entry_offset.is_finite() {
            return Err(invalid("entry offset must be finite"));
        }
        let stack = config.stack.scaled(&config.parameter_scale)?;
        let inputs = [-config.needle.length, entry_offset, entry_offset];
        let (nodes, _) = needle_nodes(
            inputs[0],
            config.needle.length,
            config.template_station(),
            config.needle.element_length,
        );
        let mut sim = Self {
            config,
            stack,
            inputs,
            contacts: Vec::new(),
            beam: BeamState::straight(nodes, entry_offset),
            cut_path: Vec::new(),
            newton_iterations: 0,
        };
        let sol = sim.solve(inputs, &[], sim.inputs, &sim.beam)?;
        sim.newton_iterations = sol.iterations;
        sim.beam = sol.state;
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    pub fn inputs(&self) -> Vec3 {
        self.inputs
    }

    pub fn contacts(&self) -> &[ContactPoint] {
        &self.contacts
    }

    pub fn beam(&self) -> &BeamState {
        &self.beam
    }

    pub fn cut_path(&self) -> &[(f64, f64)] {
        &self.cut_path
    }

    /// Newton iterations spent by the most recent step.
    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn tip_x(&self) -> f64 {
        self.inputs[0] + self.config.needle.length
    }

    /// Insertion depth of the tip below the skin (zero while outside).
    pub fn depth(&self) -> f64 {
        self.tip_x().max(0.0)
    }

    pub fn observe(&self) -> OutputVector {
        self.beam.tip().into()
    }

    fn station(&self, k: usize) -> f64 {
        k as f64 * self.config.needle.element_length
    }

    /// One static solve at `inputs`, reached from `from` by bisection if the
    /// direct Newton solve fails.
    fn solve(
        &self,
        inputs: Vec3,
        contacts: &[ContactPoint],
        from: Vec3,
        warm: &BeamState,
    ) -> Result<Solution> {
        self.solve_bisect(inputs, contacts, from, warm, 0)
    }

    fn solve_bisect(
        &self,
        inputs: Vec3,
        contacts: &[ContactPoint],
        from: Vec3,
        warm: &BeamState,
        depth: u32,
    ) -> Result<Solution> {
        match self.solve_direct(inputs, contacts, warm) {
            Ok(sol) => Ok(sol),
            Err(e) if depth >= MAX_BISECTIONS => Err(Error::PlantFault(format!(
                "static solve failed after {depth} bisections: {e}"
            ))),
            Err(_) => {
                let mid = [
                    0.5 * (from[0] + inputs[0]),
                    0.5 * (from[1] + inputs[1]),
                    0.5 * (from[2] + inputs[2]),
                ];
                let half = self.solve_bisect(mid, contacts, from, warm, depth + 1)?;
                let rest = self.solve_bisect(inputs, contacts, mid, &half.state, depth + 1)?;
                Ok(Solution {
                    iterations: half.iterations + rest.iterations,
                    ..rest
                })
            }
        }
    }

    fn solve_direct(
        &self,
        inputs: Vec3,
        contacts: &[ContactPoint],
        warm: &BeamState,
    ) -> Result<Solution> {
        let cfg = &self.config;
        let (nodes, template) = needle_nodes(
            inputs[0],
            cfg.needle.length,
            cfg.template_station(),
            cfg.needle.element_length,
        );
        let mut supports = vec![BoundaryCondition::clamp(0, inputs[1], 0.0)];
        if template != usize::MAX {
            supports.push(BoundaryCondition::roller(template, inputs[2]));
        }
        let law = TissueFoundation {
            stack: &self.stack,
            contact_width: cfg.contact_width,
            tributary: cfg.needle.element_length,
        };
        let problem = BeamProblem {
            flexural_rigidity: cfg.needle.flexural_rigidity,
            supports: &supports,
            contacts,
            law: &law,
            loads: &[],
        };
        solve_static(&problem, warm.remesh(nodes), &cfg.solver)
    }

    /// Advances the plant by the input increment `dx`.
    ///
    /// The state is left untouched when an error is returned.
    pub fn apply_inputs(&mut self, dx: Vec3) -> Result<StepReport> {
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(invalid("input increment must be finite"));
        }
        if dx[0] < 0.0 {
            return Err(Error::Retraction(dx[0]));
        }
        let from = self.inputs;
        let to = [from[0] + dx[0], from[1] + dx[1], from[2] + dx[2]];
        let old_tip = self.tip_x();
        let new_tip = to[0] + self.config.needle.length;
        let total = self.stack.total_thickness();

        let mut contacts = self.contacts.clone();
        let mut cut_path = self.cut_path.clone();
        let mut beam = self.beam.clone();
        let mut last = from;
        let mut report = StepReport::default();

        loop {
            let s = self.station(contacts.len() + 1);
            if s > new_tip + 1e-9 || s > total || dx[0] == 0.0 {
                break;
            }
            let tau = ((s - old_tip) / dx[0]).clamp(0.0, 1.0);
            let at = [
                from[0] + tau * dx[0],
                from[1] + tau * dx[1],
                from[2] + tau * dx[2],
            ];
            let sol = self.solve(at, &contacts, last, &beam)?;
            report.newton_iterations += sol.iterations;
            let y_cut = sol.state.tip()[1];
            contacts.push(ContactPoint {
                station: s,
                rest: y_cut + self.config.bevel_offset,
                layer: self.stack.index_at(s)?,
            });
            cut_path.push((s, y_cut));
            report.contacts_added += 1;
            beam = sol.state;
            last = at;
        }

        let sol = self.solve(to, &contacts, last, &beam)?;
        report.newton_iterations += sol.iterations;

        self.inputs = to;
        self.contacts = contacts;
        self.cut_path = cut_path;
        self.beam = sol.state;
        self.newton_iterations = report.newton_iterations;
        Ok(report)
    }

    /// Static input-output map at the current contact set, without carving.
    ///
    /// Contacts ahead of a (probe-)retracted tip act at the tip.
    pub fn evaluate(&self, inputs: Vec3) -> Result<OutputVector> {
        let tip = inputs[0] + self.config.needle.length;
        let contacts: Vec<ContactPoint> = self
            .contacts
            .iter()
            .map(|c| ContactPoint {
                station: c.station.min(tip),
                ..*c
            })
            .collect();
        let sol = self.solve(inputs, &contacts, self.inputs, &self.beam)?;
        Ok(sol.state.tip().into())
    }

    /// Independent copy whose layer moduli are additionally scaled.
    pub fn fork_model(&self, scale: &[f64]) -> Result<SimState> {
        let stack = self.stack.scaled(scale)?;
        let mut config = self.config.clone();
        let layers = config.stack.layers().len();
        config.parameter_scale = (0..layers)
            .map(|i| {
                let old = pick(&config.parameter_scale, i);
                old * pick(scale, i)
            })
            .collect();
        Ok(SimState {
            config,
            stack,
            ..self.clone()
        })
    }

    /// FNV-1a digest of every quantity that defines the plant state.
    pub fn state_hash(&self) -> u64 {
        let mut h = Fnv::new();
        self.inputs.iter().for_each(|v| h.f64(*v));
        for c in &self.contacts {
            h.f64(c.station);
            h.f64(c.rest);
            h.u64(c.layer as u64);
        }
        for (s, y) in &self.cut_path {
            h.f64(*s);
            h.f64(*y);
        }
        self.beam.nodes.iter().for_each(|v| h.f64(*v));
        self.beam.deflection.iter().for_each(|v| h.f64(*v));
        self.beam.rotation.iter().for_each(|v| h.f64(*v));
        for l in self.stack.layers() {
            h.f64(l.shear_modulus);
            h.f64(l.alpha);
            h.f64(l.thickness);
        }
        h.0
    }
}

fn pick(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
}
