use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Material, SimConfig, SimError};
use crate::geom::{Sdf, SdfShape, Vec3};

/// Object shapes, with dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectKind {
    /// Upright cylinder.
    Cylinder { radius: f64, height: f64 },
    /// Triangular prism lying on a face, axis along y.
    Onigiri { side: f64, length: f64 },
    Cube { side: f64 },
    /// Flat slab.
    FilletBox { length: f64, width: f64, thickness: f64 },
}

impl ObjectKind {
    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            Self::Cylinder { radius, height } => Self::Cylinder { radius: radius * s, height: height * s },
            Self::Onigiri { side, length } => Self::Onigiri { side: side * s, length: length * s },
            Self::Cube { side } => Self::Cube { side: side * s },
            Self::FilletBox { length, width, thickness } => {
                Self::FilletBox { length: length * s, width: width * s, thickness: thickness * s }
            }
        }
    }

    fn shape(&self) -> SdfShape {
        match *self {
            Self::Cylinder { radius, height } => SdfShape::Cylinder { radius, half_height: height / 2.0 },
            Self::Onigiri { side, length } => SdfShape::TriangularPrism { side, half_length: length / 2.0 },
            Self::Cube { side } => SdfShape::Box { half_extents: Vec3::repeat(side / 2.0) },
            Self::FilletBox { length, width, thickness } => {
                SdfShape::Box { half_extents: Vec3::new(length / 2.0, width / 2.0, thickness / 2.0) }
            }
        }
    }

    /// Half extents of the local bounding box.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Self::Cylinder { radius, height } => Vec3::new(radius, radius, height / 2.0),
            Self::Onigiri { side, length } => Vec3::new(side / 2.0, length / 2.0, side * 3f64.sqrt() / 4.0),
            Self::Cube { side } => Vec3::repeat(side / 2.0),
            Self::FilletBox { length, width, thickness } => Vec3::new(length / 2.0, width / 2.0, thickness / 2.0),
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Self::Cylinder { radius, height } => std::f64::consts::PI * radius * radius * height,
            Self::Onigiri { side, length } => 3f64.sqrt() / 4.0 * side * side * length,
            Self::Cube { side } => side.powi(3),
            Self::FilletBox { length, width, thickness } => length * width * thickness,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let h = self.half_extents();
        if h.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!("object dimensions must be positive: {self:?}")))
        }
    }
}

/// An object placed in the world: `center` of its bounding box and a yaw
/// about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: ObjectKind,
    pub center: Vec3,
    pub yaw: f64,
}

impl ObjectSpec {
    /// Resting on the plane `z = table`.
    pub fn on_table(shape: ObjectKind, x: f64, y: f64, yaw: f64, table: f64) -> Self {
        let h = shape.half_extents().z;
        Self { shape, center: Vec3::new(x, y, table + h), yaw }
    }

    pub fn pose(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.center),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.yaw),
        )
    }

    pub fn sdf(&self) -> Sdf {
        Sdf::new(self.shape.shape(), self.pose())
    }

    /// World-space bounding box corners.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let h = self.shape.half_extents();
        let r = self.pose().rotation.to_rotation_matrix().into_inner().abs() * h;
        (self.center - r, self.center + r)
    }
}

/// Particle state in structure-of-arrays layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub f: Vec<Matrix3<f64>>,
    pub c: Vec<Matrix3<f64>>,
    pub mass: Vec<f64>,
    pub vol: Vec<f64>,
}

impl ParticleState {
    /// Particles at rest with identity deformation.
    pub fn from_positions(x: Vec<Vec3>, mass: Vec<f64>, vol: Vec<f64>) -> Self {
        let n = x.len();
        Self {
            x,
            v: vec![Vec3::zeros(); n],
            f: vec![Matrix3::identity(); n],
            c: vec![Matrix3::zeros(); n],
            mass,
            vol,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.v.iter().zip(&self.mass).fold(Vec3::zeros(), |acc, (v, m)| acc + v * *m)
    }

    /// Mass-weighted mean position.
    pub fn centroid(&self) -> Vec3 {
        let m = self.total_mass();
        self.x.iter().zip(&self.mass).fold(Vec3::zeros(), |acc, (x, w)| acc + x * *w) / m
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Stratified-jittered particles inside the object: each grid cell is split
/// into `k^3` sub-cells (`k = round(cbrt(particles_per_cell))`) with one
/// jittered sample each, kept when inside the object.
pub fn seed_particles(
    spec: &ObjectSpec,
    config: &SimConfig,
    material: &Material,
    seed: u64,
) -> Result<ParticleState, SimError> {
    spec.shape.validate()?;
    material.validate()?;
    config.validate()?;
    let (lo, hi) = spec.bounds();
    let dx = config.cell;
    let origin = config.origin();
    let margin = config.boundary_cells as f64;
    for a in 0..3 {
        let l = (lo[a] - origin[a]) / dx;
        let h = (hi[a] - origin[a]) / dx;
        // Objects resting on the floor sit exactly on the margin; allow
        // rounding there.
        let tol = 1e-9;
        if l < margin - tol || h > config.resolution[a] as f64 - 1.0 - margin + tol {
            return Err(SimError::OutsideGrid(format!(
                "object spans cells {l:.1}..{h:.1} on axis {a}, grid interior is {margin}..{}",
                config.resolution[a] as f64 - 1.0 - margin
            )));
        }
    }
    let sdf = spec.sdf();
    let k = (config.particles_per_cell as f64).cbrt().round().max(1.0) as usize;
    let sub = dx / k as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i0: Vec<usize> = (0..3).map(|a| ((lo[a] - origin[a]) / dx).floor() as usize).collect();
    let i1: Vec<usize> = (0..3).map(|a| ((hi[a] - origin[a]) / dx).ceil() as usize).collect();
    let mut x = Vec::new();
    for ck in i0[2]..i1[2] {
        for cj in i0[1]..i1[1] {
            for ci in i0[0]..i1[0] {
                let corner = origin + Vec3::new(ci as f64, cj as f64, ck as f64) * dx;
                for sk in 0..k {
                    for sj in 0..k {
                        for si in 0..k {
                            let j = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
                            let p = corner + (Vec3::new(si as f64, sj as f64, sk as f64) + j) * sub;
                            if sdf.eval(&p) <= 0.0 {
                                x.push(p);
                            }
                        }
                    }
                }
            }
        }
    }
    if x.is_empty() {
        return Err(SimError::OutsideGrid("object too small for the grid: no particles seeded".into()));
    }
    let vol = spec.shape.volume() / x.len() as f64;
    let n = x.len();
    Ok(ParticleState::from_positions(x, vec![vol * material.density; n], vec![vol; n]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_count_and_mass() {
        let cfg = SimConfig { cell: 0.005, resolution: [32; 3], ..SimConfig::default() };
        let spec = ObjectSpec::on_table(ObjectKind::Cube { side: 0.04 }, 0.0, 0.0, 0.0, 0.0);
        let m = Material::default();
        let p = seed_particles(&spec, &cfg, &m, 1).unwrap();
        let n = p.len() as f64;
        assert!((n - 4096.0).abs() <= 0.05 * 4096.0, "{n}");
        let want = m.density * 0.04f64.powi(3);
        assert!((p.total_mass() - want).abs() <= 0.01 * want);
        let sdf = spec.sdf();
        assert!(p.x.iter().all(|x| sdf.eval(x) <= 0.0));
        let c = p.centroid();
        assert!((c - spec.center).norm() < 1e-3);
    }

    #[test]
    fn outside_grid_rejected() {
        let cfg = SimConfig { cell: 0.005, resolution: [16; 3], ..SimConfig::default() };
        let spec = ObjectSpec::on_table(ObjectKind::Cube { side: 0.06 }, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(seed_particles(&spec, &cfg, &Material::default(), 1), Err(SimError::OutsideGrid(_))));
    }

    #[test]
    fn weighted_centroid() {
        let p = ParticleState::from_positions(vec![Vec3::zeros(), Vec3::x()], vec![1.0, 3.0], vec![1.0, 1.0]);
        assert!((p.centroid().x - 0.75).abs() < 1e-15);
        let q = ParticleState::from_positions(vec![Vec3::x(), -Vec3::x()], vec![2.0, 2.0], vec![1.0, 1.0]);
        assert_eq!(q.centroid(), Vec3::zeros());
    }
}
