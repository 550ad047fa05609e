use serde::{Deserialize, Serialize};

use super::field::{FreezeMask, RbfField};
use super::flow::integrate_points;
use super::LdmError;
use crate::geom::{TriMesh, Vec3};

/// Lower bound added to every kernel width.
pub const SIGMA_MIN: f64 = 0.005;
/// Kernel width of the zero-deformation parameter vector.
pub const SIGMA_DEFAULT: f64 = 0.015;
/// Default number of RK4 steps over unit time.
pub const DEFAULT_STEPS: usize = 16;

pub fn softplus(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// The raw deformation design space: a base mesh, a freeze mask and fixed
/// kernel centers. Raw parameter vectors pack four scalars per kernel,
/// `[wx, wy, wz, s]`, with width `softplus(s) + SIGMA_MIN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdmSpace {
    pub base: TriMesh,
    pub mask: FreezeMask,
    pub centers: Vec<Vec3>,
    pub steps: usize,
}

impl LdmSpace {
    pub fn new(base: TriMesh, mask: FreezeMask, centers: Vec<Vec3>, steps: usize) -> Result<Self, LdmError> {
        if centers.is_empty() {
            return Err(LdmError::InvalidField("at least one kernel center is required".into()));
        }
        if steps == 0 {
            return Err(LdmError::InvalidField("integration needs at least one step".into()));
        }
        Ok(Self { base, mask, centers, steps })
    }

    /// Space with 18 centers on a 2 x 3 x 3 lattice (x, y, z) spanning the
    /// deformable part of the base mesh bounding box.
    pub fn with_lattice(base: TriMesh, mask: FreezeMask, steps: usize) -> Result<Self, LdmError> {
        let b = base.bounds().ok_or(LdmError::InvalidField("empty base mesh".into()))?;
        let zmax = b.max.z.min(mask.z_lo);
        let zmin = b.min.z;
        if !(zmin < zmax) {
            return Err(LdmError::InvalidField("base mesh has no deformable region".into()));
        }
        let lerp = |lo: f64, hi: f64, i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let mut centers = Vec::with_capacity(18);
        for iz in 0..3 {
            for iy in 0..3 {
                for ix in 0..2 {
                    centers.push(Vec3::new(
                        lerp(b.min.x, b.max.x, ix, 2),
                        lerp(b.min.y, b.max.y, iy, 3),
                        lerp(zmin, zmax, iz, 3),
                    ));
                }
            }
        }
        Self::new(base, mask, centers, steps)
    }

    pub fn kernel_count(&self) -> usize {
        self.centers.len()
    }

    pub fn raw_dim(&self) -> usize {
        4 * self.centers.len()
    }

    /// Parameters of the identity deformation.
    pub fn zero_params(&self) -> Vec<f64> {
        let s = softplus_inv(SIGMA_DEFAULT - SIGMA_MIN);
        (0..self.kernel_count()).flat_map(|_| [0.0, 0.0, 0.0, s]).collect()
    }

    pub fn unpack(&self, raw: &[f64]) -> Result<RbfField, LdmError> {
        if raw.len() != self.raw_dim() {
            return Err(LdmError::DimensionMismatch { expected: self.raw_dim(), got: raw.len() });
        }
        let weights = raw.chunks_exact(4).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let widths = raw.chunks_exact(4).map(|c| softplus(c[3]) + SIGMA_MIN).collect();
        RbfField::new(self.centers.clone(), widths, weights)
    }

    pub fn deform_points(&self, raw: &[f64], points: &[Vec3]) -> Result<Vec<Vec3>, LdmError> {
        let field = self.unpack(raw)?;
        integrate_points(&field, &self.mask, points, self.steps)
    }

    /// Transports the base mesh vertices; faces are unchanged.
    pub fn deform_mesh(&self, raw: &[f64]) -> Result<TriMesh, LdmError> {
        let v = self.deform_points(raw, self.base.vertices())?;
        Ok(self.base.with_vertices(v))
    }
}

/// Free-function form: deforms `base` by `raw_params` with lattice centers.
pub fn deform_mesh(raw_params: &[f64], base: &TriMesh, mask: FreezeMask, steps: usize) -> Result<TriMesh, LdmError> {
    LdmSpace::with_lattice(base.clone(), mask, steps)?.deform_mesh(raw_params)
}
