use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_deformation_with, FitConfig};
use super::space::LdmSpace;
use super::LdmError;
use crate::geom::{surface_sample, PointCloud, Vec3};
use crate::seed::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotation about the vertical axis is uniform in +-this many degrees.
    pub max_rotation_deg: f64,
    /// Horizontal translation is uniform in +-this (meters) per axis.
    pub max_translation: f64,
    pub scale_range: (f64, f64),
    pub max_redraws: usize,
    pub fit: FitConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 30.0,
            max_translation: 0.01,
            scale_range: (0.8, 1.25),
            max_redraws: 5,
            fit: FitConfig::default(),
        }
    }
}

/// A similarity transform about the mount origin.
#[derive(Debug, Clone, Copy)]
struct Augmentation {
    yaw: f64,
    shift: Vec3,
    scale: f64,
}

impl Augmentation {
    fn draw(rng: &mut ChaCha8Rng, cfg: &AugmentConfig) -> Self {
        let r = cfg.max_rotation_deg.to_radians();
        let t = cfg.max_translation;
        let (s0, s1) = cfg.scale_range;
        Self {
            yaw: if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 },
            shift: Vec3::new(
                if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 },
                if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 },
                0.0,
            ),
            scale: if s1 > s0 { rng.random_range(s0..=s1) } else { s0 },
        }
    }

    fn apply(&self, p: &Vec3) -> Vec3 {
        let iso = Isometry3::from_parts(
            Translation3::from(self.shift),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.yaw),
        );
        (iso * nalgebra::Point3::from(p * self.scale)).coords
    }
}

/// Grows `shapes` to `n_total` entries by randomly rotating (about z),
/// translating (horizontally) and scaling decoded shapes and refitting raw
/// parameters, warm-started from the source. The first `shapes.len()`
/// entries are the inputs unchanged. Samples whose refit fails are redrawn
/// up to `max_redraws` times and otherwise skipped, so the output may be
/// shorter than `n_total` (a warning is logged).
pub fn augment_dataset(
    space: &LdmSpace,
    shapes: &[Vec<f64>],
    n_total: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>, LdmError> {
    if shapes.is_empty() {
        return Err(LdmError::DimensionMismatch { expected: 1, got: 0 });
    }
    if n_total < shapes.len() {
        return Err(LdmError::DimensionMismatch { expected: shapes.len(), got: n_total });
    }
    if let Some(s) = shapes.iter().find(|s| s.len() != space.raw_dim()) {
        return Err(LdmError::DimensionMismatch { expected: space.raw_dim(), got: s.len() });
    }
    let extra: Vec<Option<Vec<f64>>> = (shapes.len()..n_total)
        .into_par_iter()
        .map(|slot| augment_one(space, shapes, slot, cfg, seed))
        .collect::<Result<_, _>>()?;
    let mut out = shapes.to_vec();
    let skipped = extra.iter().filter(|e| e.is_none()).count();
    if skipped > 0 {
        log::warn!("augmentation skipped {skipped} samples after repeated fit failures");
    }
    out.extend(extra.into_iter().flatten());
    Ok(out)
}

fn augment_one(
    space: &LdmSpace,
    shapes: &[Vec<f64>],
    slot: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Option<Vec<f64>>, LdmError> {
    for attempt in 0..=cfg.max_redraws {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[slot as u64, attempt as u64]));
        let src = &shapes[rng.random_range(0..shapes.len())];
        let aug = Augmentation::draw(&mut rng, cfg);
        let target = match augmented_cloud(space, src, &aug, cfg.fit.samples, rng.random()) {
            Ok(t) => t,
            Err(LdmError::FlowDivergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        match fit_deformation_with(space, &target, &cfg.fit, Some(src), rng.random()) {
            Ok(r) => return Ok(Some(r.params)),
            Err(LdmError::FitFailure(msg)) => {
                log::debug!("augmentation slot {slot} attempt {attempt} failed: {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

fn augmented_cloud(space: &LdmSpace, src: &[f64], aug: &Augmentation, n: usize, seed: u64) -> Result<PointCloud, LdmError> {
    let mesh = space.deform_mesh(src)?;
    let cloud = surface_sample(&mesh, n.max(1), seed)?;
    Ok(PointCloud::new(cloud.points.iter().map(|p| aug.apply(p)).collect()))
}

/// Refit of a source shape under an explicit transform; used to check that
/// the identity augmentation is reproduced.
pub fn refit_transformed(
    space: &LdmSpace,
    src: &[f64],
    yaw: f64,
    shift: Vec3,
    scale: f64,
    fit: &FitConfig,
    seed: u64,
) -> Result<super::FitResult, LdmError> {
    let aug = Augmentation { yaw, shift, scale };
    let target = augmented_cloud(space, src, &aug, fit.samples, derive(seed, &[1]))?;
    fit_deformation_with(space, &target, fit, Some(src), derive(seed, &[2]))
}
