//! Layered hyperelastic tissue foundation.
//!
//! Each layer reacts to lateral needle compression with an Ogden-type
//! tangent stiffness
//!
//! ```text
//! k(λ) = 2μ (λ^(α-1) + ½ λ^(-α/2 - 1)),    λ = (t - c) / t
//! ```
//!
//! where `c` is the local compression and `t` the layer thickness. The
//! stretch is floored at [`STRETCH_FLOOR`] so fully compressed tissue stays
//! finite. Moduli are in MPa (N/mm²); an effective contact width converts
//! them to a line stiffness.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Smallest admissible stretch; compression beyond `0.95 t` saturates here.
pub const STRETCH_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct TissueLayer {
    pub name: String,
    /// Shear modulus μ, MPa.
    pub shear_modulus: f64,
    /// Nonlinearity exponent α.
    pub alpha: f64,
    /// Undeformed thickness along the insertion axis, mm.
    pub thickness: f64,
}

impl TissueLayer {
    pub fn new(name: &str, shear_modulus: f64, alpha: f64, thickness: f64) -> Result<Self> {
        let layer = Self {
            name: name.into(),
            shear_modulus,
            alpha,
            thickness,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shear_modulus > 0.0 && self.shear_modulus.is_finite()) {
            return Err(invalid(alloc::format!(
                "layer {}: shear modulus must be positive",
                self.name
            )));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(invalid(alloc::format!(
                "layer {}: thickness must be positive",
                self.name
            )));
        }
        if self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(invalid(alloc::format!(
                "layer {}: alpha must be a nonzero real",
                self.name
            )));
        }
        Ok(())
    }

    fn stiffness(&self, stretch: f64) -> f64 {
        let a = self.alpha;
        2.0 * self.shear_modulus
            * (libm::pow(stretch, a - 1.0) + 0.5 * libm::pow(stretch, -0.5 * a - 1.0))
    }

    /// dk/dλ
    fn stiffness_slope(&self, stretch: f64) -> f64 {
        let a = self.alpha;
        2.0 * self.shear_modulus
            * ((a - 1.0) * libm::pow(stretch, a - 2.0)
                + 0.5 * (-0.5 * a - 1.0) * libm::pow(stretch, -0.5 * a - 2.0))
    }
}

/// Stretch of a layer of initial `thickness` under `compression`, floored at
/// [`STRETCH_FLOOR`].
pub fn stretch(compression: f64, thickness: f64) -> Result<f64> {
    if compression < 0.0 {
        return Err(Error::NegativeCompression(compression));
    }
    if !(thickness > 0.0) {
        return Err(invalid("thickness must be positive"));
    }
    if clamped(compression, thickness) {
        Ok(STRETCH_FLOOR)
    } else {
        Ok((thickness - compression) / thickness)
    }
}

fn clamped(compression: f64, thickness: f64) -> bool {
    compression >= (1.0 - STRETCH_FLOOR) * thickness
}

/// Tangent modulus of `layer` at `stretch` (MPa).
pub fn tangent_stiffness(layer: &TissueLayer, stretch: f64) -> Result<f64> {
    if !(stretch > 0.0) {
        return Err(Error::SingularStretch(stretch));
    }
    Ok(layer.stiffness(stretch))
}

/// Reaction force density (N/mm) for a non-negative `compression` (mm).
///
/// The magnitude is `k(λ) c w`; callers apply the sign opposing deflection.
pub fn foundation_force(layer: &TissueLayer, compression: f64, contact_width: f64) -> Result<f64> {
    let l = stretch(compression, layer.thickness)?;
    Ok(tangent_stiffness(layer, l)? * compression * contact_width)
}

/// Derivative of [`foundation_force`] with respect to compression.
pub fn foundation_force_slope(
    layer: &TissueLayer,
    compression: f64,
    contact_width: f64,
) -> Result<f64> {
    let l = stretch(compression, layer.thickness)?;
    let k = tangent_stiffness(layer, l)?;
    let slope = if clamped(compression, layer.thickness) {
        k
    } else {
        k - compression * layer.stiffness_slope(l) / layer.thickness
    };
    Ok(slope * contact_width)
}

/// Contiguous tissue layers from the skin (x = 0) inward.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<TissueLayer>,
    /// Cumulative far boundary of each layer.
    ends: Vec<f64>,
}

impl LayerStack {
    pub fn new(layers: Vec<TissueLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("layer stack is empty"));
        }
        let mut ends = Vec::with_capacity(layers.len());
        let mut acc = 0.0;
        for layer in &layers {
            layer.validate()?;
            acc += layer.thickness;
            ends.push(acc);
        }
        Ok(Self { layers, ends })
    }

    /// Skin, fat, muscle, soft tissue and prostate of the tuned phantom.
    pub fn phantom() -> Self {
        let layers = [
            ("skin", 200.0, 1.0, 2.0),
            ("fat", 15.0, -1.0, 3.0),
            ("muscle", 30.0, -1.0, 5.0),
            ("soft tissue", 800.0, -1.0, 10.5),
            ("prostate", 3200.0, 1.0, 55.0),
        ]
        .into_iter()
        .map(|(n, mu, a, t)| TissueLayer::new(n, mu, a, t).expect("valid default layer"))
        .collect();
        Self::new(layers).expect("valid default stack")
    }

    pub fn layers(&self) -> &[TissueLayer] {
        &self.layers
    }

    pub fn total_thickness(&self) -> f64 {
        *self.ends.last().unwrap()
    }

    /// `[start, end)` of layer `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let start = if i == 0 { 0.0 } else { self.ends[i - 1] };
        (start, self.ends[i])
    }

    /// Index of the layer containing `x`; a shared boundary belongs to the
    /// deeper layer.
    pub fn index_at(&self, x: f64) -> Result<usize> {
        let total = self.total_thickness();
        if !(0.0..=total).contains(&x) {
            return Err(Error::OutOfDomain { x, total });
        }
        let i = self.ends.partition_point(|&e| e <= x);
        Ok(i.min(self.layers.len() - 1))
    }

    pub fn layer_at(&self, x: f64) -> Result<&TissueLayer> {
        Ok(&self.layers[self.index_at(x)?])
    }

    /// Copy with each layer's μ multiplied by the matching factor. A single
    /// factor applies to every layer.
    pub fn scaled(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != 1 && factors.len() != self.layers.len() {
            return Err(invalid(alloc::format!(
                "expected 1 or {} scale factors, got {}",
                self.layers.len(),
                factors.len()
            )));
        }
        if factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(invalid("scale factors must be positive"));
        }
        let mut out = self.clone();
        for (i, layer) in out.layers.iter_mut().enumerate() {
            let f = if factors.len() == 1 {
                factors[0]
            } else {
                factors[i]
            };
            layer.shear_modulus *= f;
        }
        Ok(out)
    }
}
