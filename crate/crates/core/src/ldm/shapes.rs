use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::FreezeMask;
use super::LdmError;
use crate::geom::{TriMesh, Vec3};

/// Finger slab half extents: closure axis x, width y; length 6 cm along -z.
pub const FINGER_HALF_X: f64 = 0.005;
pub const FINGER_HALF_Y: f64 = 0.01;
pub const FINGER_LENGTH: f64 = 0.06;

/// The base finger: a 1 cm x 2 cm x 6 cm slab hanging below the mount plane
/// z = 0.
pub fn base_finger() -> TriMesh {
    TriMesh::cuboid(
        Vec3::new(-FINGER_HALF_X, -FINGER_HALF_Y, -FINGER_LENGTH),
        Vec3::new(FINGER_HALF_X, FINGER_HALF_Y, 0.0),
        [3, 6, 18],
    )
    .expect("static finger geometry is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Cubic,
    Spherical,
}

impl std::str::FromStr for PrimitiveKind {
    type Err = LdmError;
    fn from_str(s: &str) -> Result<Self, LdmError> {
        match s {
            "cubic" => Ok(Self::Cubic),
            "spherical" => Ok(Self::Spherical),
            other => Err(LdmError::Bounds(format!("unknown primitive kind {other:?}"))),
        }
    }
}

pub const PRIMITIVE_RANGE: (f64, f64) = (0.005, 0.08);

/// Baseline fingertip: a cube of side `param` with its top face on the mount
/// plane, or a sphere of radius `param` tangent to it from below.
pub fn primitive_design(kind: PrimitiveKind, param: f64) -> Result<TriMesh, LdmError> {
    if !(PRIMITIVE_RANGE.0..=PRIMITIVE_RANGE.1).contains(&param) {
        return Err(LdmError::Bounds(format!(
            "primitive parameter {param} outside [{}, {}]",
            PRIMITIVE_RANGE.0, PRIMITIVE_RANGE.1
        )));
    }
    let mesh = match kind {
        PrimitiveKind::Cubic => {
            let h = param / 2.0;
            TriMesh::cuboid(Vec3::new(-h, -h, -param), Vec3::new(h, h, 0.0), [4, 4, 4])?
        }
        PrimitiveKind::Spherical => TriMesh::icosphere(Vec3::new(0.0, 0.0, -param), param, 3)?,
    };
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Taper,
    Hook,
    Paddle,
    Bulge,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [Self::Taper, Self::Hook, Self::Paddle, Self::Bulge];
}

/// Procedural target shape: the base finger warped by a smooth analytic map
/// of the given kind, fading to identity across the frozen band.
pub fn procedural_target(base: &TriMesh, mask: &FreezeMask, kind: TargetKind, seed: u64) -> Result<TriMesh, LdmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(0.3..1.0);
    let bounds = base.bounds().ok_or(LdmError::InvalidField("empty base mesh".into()))?;
    let depth = (mask.z_lo - bounds.min.z).max(1e-9);
    let verts = base
        .vertices()
        .iter()
        .map(|p| {
            let m = mask.value(p.z);
            let u = ((mask.z_lo - p.z) / depth).clamp(0.0, 1.0);
            let q = match kind {
                TargetKind::Taper => {
                    let f = 1.0 + 0.6 * a * u;
                    Vec3::new(p.x * f, p.y * f, p.z)
                }
                TargetKind::Hook => Vec3::new(p.x + 0.015 * a * u * u, p.y, p.z + 0.004 * b * u * u),
                TargetKind::Paddle => Vec3::new(p.x * (1.0 - 0.4 * b * u), p.y * (1.0 + 0.8 * b * u), p.z),
                TargetKind::Bulge => {
                    let s = (std::f64::consts::PI * u).sin();
                    Vec3::new(p.x * (1.0 + 0.8 * b * s), p.y * (1.0 + 0.3 * a * s), p.z)
                }
            };
            p + (q - p) * m
        })
        .collect();
    Ok(TriMesh::new(verts, base.faces().to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_primitive() {
        let m = primitive_design(PrimitiveKind::Cubic, 0.02).unwrap();
        assert!((m.signed_volume() - 8e-6).abs() <= 1e-9);
        let b = m.bounds().unwrap();
        assert!(b.max.z.abs() < 1e-15 && (b.min.z + 0.02).abs() < 1e-15);
        assert!((b.max.x + b.min.x).abs() < 1e-15);
    }

    #[test]
    fn sphere_primitive_tangent() {
        let m = primitive_design(PrimitiveKind::Spherical, 0.02).unwrap();
        let b = m.bounds().unwrap();
        assert!(b.max.z.abs() < 1e-12);
        assert!(m.is_watertight());
        assert!(primitive_design(PrimitiveKind::Spherical, 0.1).is_err());
        assert!(primitive_design(PrimitiveKind::Cubic, 0.001).is_err());
    }

    #[test]
    fn finger_dimensions() {
        let f = base_finger();
        assert!(f.is_watertight());
        assert!((f.signed_volume() - 0.01 * 0.02 * 0.06).abs() < 1e-12);
    }

    #[test]
    fn targets_keep_mount() {
        let base = base_finger();
        let mask = FreezeMask::below_mount(0.0);
        for (i, k) in TargetKind::ALL.iter().enumerate() {
            let t = procedural_target(&base, &mask, *k, i as u64).unwrap();
            for (a, b) in t.vertices().iter().zip(base.vertices()) {
                if b.z >= 0.0 {
                    assert_eq!(a, b);
                }
            }
            assert!(t.signed_volume() > 0.0);
        }
    }
}
