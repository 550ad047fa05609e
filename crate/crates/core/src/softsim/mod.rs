//! Minimal 3-D MLS-MPM soft-body simulator with fixed-corotated elasticity
//! and rigid SDF colliders.

mod collider;
mod frames;
mod mpm;
mod object;
mod stress;

pub use collider::{FingerCollider, GripperCollider, GripperState};
pub use frames::{read_frame, write_frame};
pub use mpm::{FloorMode, SimConfig, Simulator, StepStats};
pub use object::{seed_particles, ObjectKind, ObjectSpec, ParticleState};
pub use stress::{cauchy_stress, kirchhoff_stress, particle_stress, polar_rotation, von_mises};

use serde::{Deserialize, Serialize};

use crate::geom::GeomError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation blew up at substep {step}")]
    Blowup { step: usize },
    #[error("CFL violated at substep {step}: particle speed {speed} m/s")]
    Cfl { step: usize, speed: f64 },
    #[error("object does not fit the grid interior: {0}")]
    OutsideGrid(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// True for failures of the integration itself (as opposed to setup).
    pub fn is_blowup(&self) -> bool {
        matches!(self, SimError::Blowup { .. } | SimError::Cfl { .. })
    }
}

/// Isotropic elastic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub young_modulus: f64,
    pub poisson: f64,
    pub density: f64,
    pub friction: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self { young_modulus: 2e4, poisson: 0.35, density: 1000.0, friction: 0.4 }
    }
}

impl Material {
    pub fn new(young_modulus: f64, poisson: f64, density: f64, friction: f64) -> Result<Self, SimError> {
        let m = Self { young_modulus, poisson, density, friction };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.young_modulus > 0.0 && self.young_modulus.is_finite()) {
            return Err(SimError::InvalidMaterial(format!("Young's modulus {} must be positive", self.young_modulus)));
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return Err(SimError::InvalidMaterial(format!("Poisson ratio {} must be in (0, 0.5)", self.poisson)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(SimError::InvalidMaterial(format!("density {} must be positive", self.density)));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(SimError::InvalidMaterial(format!("friction {} must be non-negative", self.friction)));
        }
        Ok(())
    }

    /// Lamé parameters `(mu, lambda)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young_modulus, self.poisson);
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }
}
