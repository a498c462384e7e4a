//! TOML run configuration.
//!
//! Three sections, every field optional:
//!
//! ```toml
//! [simulator]
//! flexural_rigidity = 25500.0
//! bevel_offset = -0.99
//! contact_width = 3e-6
//!
//! [[simulator.layers]]
//! name = "skin"
//! shear_modulus = 200.0
//! alpha = 1.0
//! thickness = 2.0
//!
//! [controller]
//! strategy = "mech"
//! scale = 1.5
//!
//! [experiment]
//! targets = [1, 9]
//! tasks = ["path"]
//! ```
//!
//! Giving `simulator.layers` replaces the whole default stack.

use std::path::{Path, PathBuf};

use needle_core::control::{ControllerConfig, Strategy};
use needle_core::experiments::Task;
use needle_core::fem::{NeedleProperties, SolveOptions};
use needle_core::sim::SimConfig;
use needle_core::tissue::{LayerStack, TissueLayer};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfiguration {
    pub simulator: SimulatorSection,
    pub controller: ControllerSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSection {
    /// mm
    pub needle_length: f64,
    /// N·mm²
    pub flexural_rigidity: f64,
    /// mm
    pub needle_diameter: f64,
    /// mm
    pub element_length: f64,
    /// mm
    pub template_offset: f64,
    /// mm
    pub insertion_step: f64,
    /// Bevel offset b, mm.
    pub bevel_offset: f64,
    /// Effective contact width w_eff, mm.
    pub contact_width: f64,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    /// μ, MPa
    pub shear_modulus: f64,
    pub alpha: f64,
    /// mm
    pub thickness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    #[serde(alias = "data-driven")]
    Data,
    #[serde(alias = "mechanics")]
    Mech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Path,
    Point,
}

impl From<TaskKind> for Task {
    fn from(t: TaskKind) -> Self {
        match t {
            TaskKind::Path => Task::PathFollowing,
            TaskKind::Point => Task::PointStabilization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub strategy: StrategyKind,
    /// Model μ multiplier for the mechanics strategy.
    pub scale: f64,
    /// Diagonal of Kp.
    pub gains: [f64; 3],
    /// mm
    pub stop_tolerance: f64,
    pub max_steps: usize,
    /// Central-difference ε, mm.
    pub probe_epsilon: f64,
    /// Broyden start-up probe size, mm.
    pub broyden_probe: f64,
    /// δ_max, mm.
    pub threshold: f64,
    pub threshold_data_driven: bool,
    pub threshold_mechanics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub targets: Vec<u8>,
    pub tasks: Vec<TaskKind>,
    /// Model scales run by the mechanics strategy next to the data-driven one.
    pub scales: Vec<f64>,
    pub output_dir: PathBuf,
}

impl Default for SimulatorSection {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            needle_length: sim.needle.length,
            flexural_rigidity: sim.needle.flexural_rigidity,
            needle_diameter: sim.needle.diameter,
            element_length: sim.needle.element_length,
            template_offset: sim.template_offset,
            insertion_step: sim.insertion_step,
            bevel_offset: sim.bevel_offset,
            contact_width: sim.contact_width,
            solver_tolerance: sim.solver.tolerance,
            solver_max_iterations: sim.solver.max_iterations,
            layers: sim
                .stack
                .layers()
                .iter()
                .map(|l| LayerEntry {
                    name: l.name.clone(),
                    shear_modulus: l.shear_modulus,
                    alpha: l.alpha,
                    thickness: l.thickness,
                })
                .collect(),
        }
    }
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            strategy: StrategyKind::Data,
            scale: 1.0,
            gains: c.gains,
            stop_tolerance: c.stop_tolerance,
            max_steps: c.max_steps,
            probe_epsilon: c.probe_epsilon,
            broyden_probe: c.broyden_probe,
            threshold: c.threshold,
            threshold_data_driven: c.threshold_data_driven,
            threshold_mechanics: c.threshold_mechanics,
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            targets: (1..=12).collect(),
            tasks: vec![TaskKind::Path, TaskKind::Point],
            scales: vec![1.5, 0.5],
            output_dir: PathBuf::from("results"),
        }
    }
}

impl RunConfiguration {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Defaults, or the file at `path` when given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim_config()?;
        self.controller_config()?;
        let e = &self.experiment;
        if let Some(t) = e.targets.iter().find(|t| !(1..=12).contains(*t)) {
            return Err(CliError::Config(format!("unknown target {t}")));
        }
        if e.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(CliError::Config("model scales must be positive".into()));
        }
        if !(self.controller.scale > 0.0 && self.controller.scale.is_finite()) {
            return Err(CliError::Config("controller scale must be positive".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let s = &self.simulator;
        let layers = s
            .layers
            .iter()
            .map(|l| TissueLayer::new(&l.name, l.shear_modulus, l.alpha, l.thickness))
            .collect::<Result<Vec<_>, _>>()
            .map_err(config_error)?;
        let config = SimConfig {
            needle: NeedleProperties {
                length: s.needle_length,
                flexural_rigidity: s.flexural_rigidity,
                element_length: s.element_length,
                diameter: s.needle_diameter,
            },
            stack: LayerStack::new(layers).map_err(config_error)?,
            bevel_offset: s.bevel_offset,
            template_offset: s.template_offset,
            insertion_step: s.insertion_step,
            contact_width: s.contact_width,
            parameter_scale: vec![1.0],
            solver: SolveOptions {
                tolerance: s.solver_tolerance,
                max_iterations: s.solver_max_iterations,
            },
        };
        config.validate().map_err(config_error)?;
        Ok(config)
    }

    pub fn controller_config(&self) -> Result<ControllerConfig, CliError> {
        let c = &self.controller;
        let config = ControllerConfig {
            gains: c.gains,
            stop_tolerance: c.stop_tolerance,
            max_steps: c.max_steps,
            probe_epsilon: c.probe_epsilon,
            threshold: c.threshold,
            threshold_data_driven: c.threshold_data_driven,
            threshold_mechanics: c.threshold_mechanics,
            broyden_probe: c.broyden_probe,
        };
        config.validate().map_err(config_error)?;
        Ok(config)
    }

    /// Strategy of the controller section.
    pub fn strategy(&self) -> Strategy {
        strategy(self.controller.strategy, self.controller.scale)
    }
}

/// The data-driven strategy has no model, so `scale` is ignored for it.
pub fn strategy(kind: StrategyKind, scale: f64) -> Strategy {
    match kind {
        StrategyKind::Data => Strategy::DataDriven,
        StrategyKind::Mech => Strategy::mechanics(scale),
    }
}

fn config_error(e: needle_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
