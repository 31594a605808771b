//! Euclidean vs spherical embedding spaces.

use std::fmt;

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::math::{self, l2_normalize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    Euclidean,
    Spherical,
}

impl SpaceKind {
    pub fn suffix(self) -> &'static str {
        match self {
            SpaceKind::Euclidean => "E",
            SpaceKind::Spherical => "S",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceKind::Euclidean => "euclidean",
            SpaceKind::Spherical => "spherical",
        })
    }
}

impl std::str::FromStr for SpaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" | "euclidean" => Ok(SpaceKind::Euclidean),
            "s" | "spherical" => Ok(SpaceKind::Spherical),
            other => Err(Error::Config(format!("unknown space kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceConfig {
    pub kind: SpaceKind,
    /// Triplet margin.
    pub margin: f64,
    /// Length of each FBV basis vector.
    pub basis_magnitude: f64,
}

pub const DEFAULT_SPHERICAL_MARGIN: f64 = 1.0;
pub const DEFAULT_EUCLIDEAN_MARGIN: f64 = 5.0;
pub const DEFAULT_BASIS_MAGNITUDE: f64 = 1.0;

impl SpaceConfig {
    pub fn new(kind: SpaceKind, margin: f64, basis_magnitude: f64) -> Result<Self> {
        let cfg = Self {
            kind,
            margin,
            basis_magnitude,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default margins: 1.0 on the sphere, 5.0 in Euclidean space.
    pub fn default_for(kind: SpaceKind) -> Self {
        let margin = match kind {
            SpaceKind::Spherical => DEFAULT_SPHERICAL_MARGIN,
            SpaceKind::Euclidean => DEFAULT_EUCLIDEAN_MARGIN,
        };
        Self {
            kind,
            margin,
            basis_magnitude: DEFAULT_BASIS_MAGNITUDE,
        }
    }

    pub fn spherical() -> Self {
        Self::default_for(SpaceKind::Spherical)
    }

    pub fn euclidean() -> Self {
        Self::default_for(SpaceKind::Euclidean)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.basis_magnitude > 0.0) || !self.basis_magnitude.is_finite() {
            return Err(Error::Config(format!(
                "basis magnitude must be > 0, got {}",
                self.basis_magnitude
            )));
        }
        Ok(())
    }
}

/// Map a raw network output into the embedding space.
pub fn project(space: &SpaceConfig, raw: &[f64]) -> Result<Vec<f64>> {
    if !math::all_finite(raw) {
        return Err(Error::NonFinite {
            context: "raw embedding".into(),
        });
    }
    match space.kind {
        SpaceKind::Euclidean => Ok(raw.to_vec()),
        SpaceKind::Spherical => l2_normalize(raw),
    }
}

/// Pull a gradient with respect to the projected embedding back to the raw
/// output. For the sphere, `y = z/‖z‖` and `∂L/∂z = (g − y (y·g)) / ‖z‖`.
pub fn project_backward(
    space: &SpaceConfig,
    raw: &[f64],
    projected: &[f64],
    grad: &[f64],
) -> Vec<f64> {
    match space.kind {
        SpaceKind::Euclidean => grad.to_vec(),
        SpaceKind::Spherical => {
            let n = math::norm(raw);
            let yg = math::dot(projected, grad);
            grad.iter()
                .zip(projected)
                .map(|(g, y)| (g - y * yg) / n)
                .collect()
        }
    }
}

/// FBV constrains absolute displacements, which the unit sphere cannot hold.
pub fn validate_recipe(space: &SpaceConfig, terms: &[LossKind]) -> Result<()> {
    space.validate()?;
    if space.kind == SpaceKind::Spherical && terms.contains(&LossKind::Fbv) {
        return Err(Error::Config(
            "loss term FBV requires a Euclidean embedding space".into(),
        ));
    }
    Ok(())
}
