use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collider::{GripperCollider, GripperState};
use super::stress::{kirchhoff_stress, particle_stress};
use super::{Material, ParticleState, SimError};
use crate::geom::{Sdf, Vec3};
use crate::gripper::EePose;

/// Grid treatment of nodes at or below the floor plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloorMode {
    /// Zero velocity.
    Sticky,
    /// No downward velocity; tangential motion reduced by friction.
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub resolution: [usize; 3],
    pub cell: f64,
    pub dt: f64,
    pub gravity: Vec3,
    pub particles_per_cell: usize,
    /// Substeps per control step.
    pub substeps: usize,
    /// Cells at each domain face treated as walls.
    pub boundary_cells: usize,
    /// Height of the table plane, if any.
    pub floor: Option<f64>,
    pub floor_mode: FloorMode,
    pub floor_friction: f64,
    /// Lower domain corner; by default the domain is centered in x and y
    /// with the floor `boundary_cells` above the bottom.
    pub origin: Option<Vec3>,
    /// Maximum allowed `speed * dt / cell`.
    pub cfl: f64,
    /// Grid nodes closer than this to a collider surface are in contact.
    pub contact_margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            resolution: [64; 3],
            cell: 0.004,
            dt: 2e-4,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            particles_per_cell: 8,
            substeps: 10,
            boundary_cells: 3,
            floor: Some(0.0),
            floor_mode: FloorMode::Sticky,
            floor_friction: 0.4,
            origin: None,
            cfl: 0.5,
            contact_margin: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.resolution.iter().any(|&r| r < 2 * self.boundary_cells + 4) {
            return Err(SimError::InvalidConfig(format!("grid resolution {:?} too small", self.resolution)));
        }
        if !(self.cell > 0.0 && self.dt > 0.0 && self.cfl > 0.0) {
            return Err(SimError::InvalidConfig("cell, dt and cfl must be positive".into()));
        }
        if self.substeps == 0 || self.particles_per_cell == 0 {
            return Err(SimError::InvalidConfig("substeps and particles_per_cell must be positive".into()));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(SimError::InvalidConfig("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        if let Some(o) = self.origin {
            return o;
        }
        let [nx, ny, nz] = self.resolution.map(|r| r as f64);
        let z = match self.floor {
            Some(f) => f - self.boundary_cells as f64 * self.cell,
            None => -nz * self.cell / 2.0,
        };
        Vec3::new(-nx * self.cell / 2.0, -ny * self.cell / 2.0, z)
    }

    /// Duration of one control step.
    pub fn control_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Particles whose deformation gradient was repaired.
    pub clamp_events: usize,
    pub max_speed: f64,
}

/// Quadratic B-spline weights and base node for a grid coordinate.
#[inline]
fn kernel(xg: f64) -> (i64, f64, [f64; 3]) {
    let base = (xg - 0.5).floor();
    let fx = xg - base;
    (
        base as i64,
        fx,
        [0.5 * (1.5 - fx).powi(2), 0.75 - (fx - 1.0).powi(2), 0.5 * (fx - 0.5).powi(2)],
    )
}

fn project_static(sdf: &Sdf, x: &Vec3, v: Vec3, friction: f64, margin: f64) -> Vec3 {
    if sdf.eval(x) > margin {
        return v;
    }
    let Ok(n) = sdf.gradient(x) else {
        return v;
    };
    let vn = v.dot(&n);
    if vn >= 0.0 {
        return v;
    }
    let vt = v - n * vn;
    let t = vt.norm();
    if t <= -friction * vn {
        Vec3::zeros()
    } else {
        vt * (1.0 + friction * vn / t)
    }
}

/// MLS-MPM simulator owning its particles and grid.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    material: Material,
    mu: f64,
    lambda: f64,
    origin: Vec3,
    particles: ParticleState,
    grid_m: Vec<f64>,
    grid_v: Vec<Vec3>,
    touched: Vec<usize>,
    gripper: Option<GripperCollider>,
    /// Static rigid bodies (fixtures).
    obstacles: Vec<Sdf>,
    substep: usize,
    clamp_events: usize,
    grid_mass: f64,
    /// Fraction of the current control interval elapsed.
    phase: f64,
}

impl Simulator {
    pub fn new(particles: ParticleState, material: Material, config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        material.validate()?;
        let (mu, lambda) = material.lame();
        let n = config.resolution.iter().product();
        let origin = config.origin();
        Ok(Self {
            mu,
            lambda,
            origin,
            particles,
            grid_m: vec![0.0; n],
            grid_v: vec![Vec3::zeros(); n],
            touched: Vec::new(),
            gripper: None,
            obstacles: Vec::new(),
            substep: 0,
            clamp_events: 0,
            grid_mass: 0.0,
            phase: 0.0,
            config,
            material,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn particles(&self) -> &ParticleState {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut ParticleState {
        &mut self.particles
    }

    pub fn substeps_taken(&self) -> usize {
        self.substep
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Total node mass scattered in the last substep.
    pub fn grid_mass(&self) -> f64 {
        self.grid_mass
    }

    pub fn time(&self) -> f64 {
        self.substep as f64 * self.config.dt
    }

    pub fn set_gripper(&mut self, gripper: Option<GripperCollider>) {
        self.gripper = gripper;
    }

    /// Adds a static obstacle with separating, frictional contact.
    pub fn add_obstacle(&mut self, sdf: Sdf) {
        self.obstacles.push(sdf);
    }

    pub fn gripper(&self) -> Option<&GripperCollider> {
        self.gripper.as_ref()
    }

    pub fn stress(&self) -> Vec<f64> {
        particle_stress(&self.particles, &self.material)
    }

    pub fn centroid(&self) -> Vec3 {
        self.particles.centroid()
    }

    /// Runs one control step, moving the gripper (if any) to `target`.
    pub fn advance(&mut self, target: Option<EePose>) -> Result<StepStats, SimError> {
        let control_dt = self.config.control_dt();
        if let (Some(g), Some(t)) = (self.gripper.as_mut(), target) {
            g.state = GripperState { from: g.state.to, to: t, duration: control_dt };
        }
        let mut stats = StepStats::default();
        for s in 0..self.config.substeps {
            self.phase = s as f64 / self.config.substeps as f64;
            let st = self.step()?;
            stats.clamp_events += st.clamp_events;
            stats.max_speed = stats.max_speed.max(st.max_speed);
        }
        if let Some(g) = self.gripper.as_mut() {
            g.state = GripperState::at_rest(g.state.to);
        }
        Ok(stats)
    }

    /// One MPM substep: scatter, grid update, gather.
    pub fn step(&mut self) -> Result<StepStats, SimError> {
        let step = self.substep;
        let dt = self.config.dt;
        let dx = self.config.cell;
        let inv_dx = 1.0 / dx;
        let [nx, ny, nz] = self.config.resolution;
        let (mu, lambda) = (self.mu, self.lambda);

        let tau: Vec<Matrix3<f64>> = self.particles.f.par_iter().map(|f| kirchhoff_stress(f, mu, lambda)).collect();

        // Scatter in particle order: fixed summation order on every node.
        let p = &self.particles;
        for q in 0..p.len() {
            let xg = (p.x[q] - self.origin) * inv_dx;
            let (bx, fx, wx) = kernel(xg.x);
            let (by, fy, wy) = kernel(xg.y);
            let (bz, fz, wz) = kernel(xg.z);
            if bx < 0 || by < 0 || bz < 0 || bx + 2 >= nx as i64 || by + 2 >= ny as i64 || bz + 2 >= nz as i64 {
                return Err(SimError::Blowup { step });
            }
            let m = p.mass[q];
            let affine = tau[q] * (-dt * p.vol[q] * 4.0 * inv_dx * inv_dx) + p.c[q] * m;
            let mv = p.v[q] * m;
            // affine * dpos split per axis.
            let ax: [Vec3; 3] = [0, 1, 2].map(|i| affine.column(0) * ((i as f64 - fx) * dx));
            let ay: [Vec3; 3] = [0, 1, 2].map(|j| affine.column(1) * ((j as f64 - fy) * dx));
            let az: [Vec3; 3] = [0, 1, 2].map(|k| affine.column(2) * ((k as f64 - fz) * dx));
            let base = bx as usize + nx * (by as usize + ny * bz as usize);
            for k in 0..3 {
                for j in 0..3 {
                    let wjk = wy[j] * wz[k];
                    let vjk = mv + ay[j] + az[k];
                    let row = base + nx * (j + ny * k);
                    let gm = &mut self.grid_m[row..row + 3];
                    let gv = &mut self.grid_v[row..row + 3];
                    for i in 0..3 {
                        let w = wx[i] * wjk;
                        if gm[i] == 0.0 {
                            self.touched.push(row + i);
                        }
                        gm[i] += w * m;
                        gv[i] += (vjk + ax[i]) * w;
                    }
                }
            }
        }

        // Grid update.
        let g = self.config.gravity;
        let bc = self.config.boundary_cells;
        let origin = self.origin;
        let floor = self.config.floor;
        let floor_mode = self.config.floor_mode;
        let floor_mu = self.config.floor_friction;
        let friction = self.material.friction;
        let margin = self.config.contact_margin;
        let phase = self.phase;
        let gripper = self.gripper.as_ref();
        let obstacles = &self.obstacles;
        let grid_m = &self.grid_m;
        let updates: Vec<Vec3> = self
            .touched
            .par_iter()
            .map(|&idx| {
                let m = grid_m[idx];
                let mut v = self.grid_v[idx] / m + g * dt;
                let i = idx % nx;
                let j = (idx / nx) % ny;
                let k = idx / (nx * ny);
                let x = origin + Vec3::new(i as f64, j as f64, k as f64) * dx;
                if let Some(gr) = gripper {
                    v = gr.project(&x, v, phase, friction, margin);
                }
                for o in obstacles {
                    v = project_static(o, &x, v, friction, margin);
                }
                if let Some(fz) = floor {
                    if x.z <= fz + 1e-12 {
                        match floor_mode {
                            FloorMode::Sticky => v = Vec3::zeros(),
                            FloorMode::Separate => {
                                if v.z < 0.0 {
                                    let vn = v.z;
                                    v.z = 0.0;
                                    let t = (v.x * v.x + v.y * v.y).sqrt();
                                    let s = if t <= -floor_mu * vn { 0.0 } else { 1.0 + floor_mu * vn / t };
                                    v.x *= s;
                                    v.y *= s;
                                }
                            }
                        }
                    }
                }
                for (a, c) in [i, j, k].into_iter().enumerate() {
                    let n = self.config.resolution[a];
                    if c < bc && v[a] < 0.0 {
                        v[a] = 0.0;
                    }
                    if c + bc >= n && v[a] > 0.0 {
                        v[a] = 0.0;
                    }
                }
                v
            })
            .collect();
        for (&idx, v) in self.touched.iter().zip(updates) {
            self.grid_v[idx] = v;
        }

        // Gather.
        let grid_v = &self.grid_v;
        let p = &mut self.particles;
        let (clamps, vmax) = p
            .x
            .par_iter_mut()
            .zip(p.v.par_iter_mut())
            .zip(p.c.par_iter_mut())
            .zip(p.f.par_iter_mut())
            .map(|(((x, v), c), f)| {
                let xg = (*x - origin) * inv_dx;
                let (bx, fx, wx) = kernel(xg.x);
                let (by, fy, wy) = kernel(xg.y);
                let (bz, fz, wz) = kernel(xg.z);
                let mut nv = Vec3::zeros();
                let mut c0 = Vec3::zeros();
                let mut c1 = Vec3::zeros();
                let mut c2 = Vec3::zeros();
                let base = bx as usize + nx * (by as usize + ny * bz as usize);
                for k in 0..3 {
                    let dz = k as f64 - fz;
                    for j in 0..3 {
                        let dy = j as f64 - fy;
                        let wjk = wy[j] * wz[k];
                        let row = base + nx * (j + ny * k);
                        let gv = &grid_v[row..row + 3];
                        for i in 0..3 {
                            let wg = gv[i] * (wx[i] * wjk);
                            nv += wg;
                            c0 += wg * (i as f64 - fx);
                            c1 += wg * dy;
                            c2 += wg * dz;
                        }
                    }
                }
                let nc = Matrix3::from_columns(&[c0, c1, c2]) * (4.0 * inv_dx);
                *v = nv;
                *c = nc;
                *x += nv * dt;
                *f = (Matrix3::identity() + nc * dt) * *f;
                let mut clamped = 0usize;
                if !(f.determinant() > 1e-4) {
                    *f = repair(f);
                    clamped = 1;
                }
                (clamped, nv.norm())
            })
            .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, if b.1.is_nan() || a.1.is_nan() { f64::NAN } else { a.1.max(b.1) }));

        self.grid_mass = 0.0;
        for &idx in &self.touched {
            self.grid_mass += self.grid_m[idx];
            self.grid_m[idx] = 0.0;
            self.grid_v[idx] = Vec3::zeros();
        }
        self.touched.clear();
        self.substep += 1;
        self.clamp_events += clamps;
        if !vmax.is_finite() || p.x.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(SimError::Blowup { step });
        }
        if vmax * dt > self.config.cfl * dx {
            return Err(SimError::Cfl { step, speed: vmax });
        }
        Ok(StepStats { clamp_events: clamps, max_speed: vmax })
    }
}

/// Floors singular values at 0.05 and removes reflections.
fn repair(f: &Matrix3<f64>) -> Matrix3<f64> {
    if !f.iter().all(|v| v.is_finite()) {
        return Matrix3::identity();
    }
    let svd = SVD::new(*f, true, true);
    let (Some(mut u), Some(vt)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let mut s = svd.singular_values;
    if (u * vt).determinant() < 0.0 {
        let k = s.imin();
        u.set_column(k, &(-u.column(k)));
    }
    s.apply(|v| *v = v.max(0.05));
    u * Matrix3::from_diagonal(&s) * vt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::softsim::{seed_particles, ObjectKind, ObjectSpec};

    fn small() -> (SimConfig, ObjectSpec) {
        let cfg = SimConfig { resolution: [24; 3], cell: 0.005, floor: None, ..SimConfig::default() };
        let spec = ObjectSpec { shape: ObjectKind::Cube { side: 0.03 }, center: Vec3::zeros(), yaw: 0.0 };
        (cfg, spec)
    }

    #[test]
    fn rest_is_equilibrium() {
        let (mut cfg, spec) = small();
        cfg.gravity = Vec3::zeros();
        let m = Material::default();
        let mut sim = Simulator::new(seed_particles(&spec, &cfg, &m, 1).unwrap(), m, cfg).unwrap();
        for _ in 0..100 {
            sim.step().unwrap();
        }
        assert!(sim.particles().max_speed() <= 1e-8);
    }

    #[test]
    fn momentum_gains_weight_impulse() {
        let (cfg, spec) = small();
        let m = Material::default();
        let mut sim = Simulator::new(seed_particles(&spec, &cfg, &m, 2).unwrap(), m, cfg.clone()).unwrap();
        let mass = sim.particles().total_mass();
        for _ in 0..5 {
            let p0 = sim.particles().momentum();
            sim.step().unwrap();
            let dp = sim.particles().momentum() - p0;
            let want = cfg.gravity * (mass * cfg.dt);
            assert!((dp - want).norm() <= 1e-8 * want.norm());
        }
        assert_eq!(sim.particles().total_mass(), mass);
    }

    #[test]
    fn repair_floors_singular_values() {
        let f = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -0.01));
        let r = repair(&f);
        assert!(r.determinant() > 0.0);
        let s = SVD::new(r, false, false).singular_values;
        assert!(s.min() >= 0.05 - 1e-12);
    }

    #[test]
    fn kernel_weights_partition_unity() {
        for xg in [3.0, 3.2, 3.5, 3.99] {
            let (_, _, w) = kernel(xg);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
