use nalgebra::{Isometry3, Point3, Vector2};
use serde::{Deserialize, Serialize};

use super::bvh::MeshBvh;
use super::mesh::TriMesh;
use super::{GeomError, Vec3};

/// Central-difference step for grid gradients.
const GRID_FD_STEP: f64 = 1e-5;
/// Central-difference step for analytic shapes without a closed-form gradient.
const ANALYTIC_FD_STEP: f64 = 1e-7;

/// Regular grid of signed distance samples. Node `(i, j, k)` sits at
/// `origin + cell * (i, j, k)`, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdfGrid {
    origin: Vec3,
    cell: f64,
    resolution: [usize; 3],
    values: Vec<f32>,
}

impl SdfGrid {
    pub fn new(
        origin: Vec3,
        cell: f64,
        resolution: [usize; 3],
        values: Vec<f32>,
    ) -> Result<Self, GeomError> {
        if resolution.iter().any(|&r| r < 2) {
            return Err(GeomError::InvalidSdf(format!(
                "grid resolution {resolution:?} must be at least 2 per axis"
            )));
        }
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(GeomError::InvalidSdf(format!("cell size {cell} must be positive")));
        }
        let n = resolution[0] * resolution[1] * resolution[2];
        if values.len() != n {
            return Err(GeomError::InvalidSdf(format!(
                "expected {n} samples, got {}",
                values.len()
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(GeomError::InvalidSdf("non-finite origin".into()));
        }
        Ok(Self { origin, cell, resolution, values })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.cell
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f32 {
        let [nx, ny, _] = self.resolution;
        self.values[i + nx * (j + ny * k)]
    }

    pub fn upper(&self) -> Vec3 {
        self.node(self.resolution[0] - 1, self.resolution[1] - 1, self.resolution[2] - 1)
    }

    /// Trilinear inside the domain; outside, the value at the nearest
    /// domain point plus the Euclidean offset to it.
    pub fn eval(&self, p: &Vec3) -> f64 {
        let hi = self.upper();
        let q = p.sup(&self.origin).inf(&hi);
        let outside = (p - q).norm();
        let mut idx = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let g = (q[a] - self.origin[a]) / self.cell;
            let i = (g.floor() as usize).min(self.resolution[a] - 2);
            idx[a] = i;
            t[a] = (g - i as f64).clamp(0.0, 1.0);
        }
        let [nx, ny, _] = self.resolution;
        let base = idx[0] + nx * (idx[1] + ny * idx[2]);
        let v = |di: usize, dj: usize, dk: usize| self.values[base + di + nx * (dj + ny * dk)] as f64;
        let c00 = v(0, 0, 0) * (1.0 - t[0]) + v(1, 0, 0) * t[0];
        let c10 = v(0, 1, 0) * (1.0 - t[0]) + v(1, 1, 0) * t[0];
        let c01 = v(0, 0, 1) * (1.0 - t[0]) + v(1, 0, 1) * t[0];
        let c11 = v(0, 1, 1) * (1.0 - t[0]) + v(1, 1, 1) * t[0];
        let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
        let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
        c0 * (1.0 - t[2]) + c1 * t[2] + outside
    }
}

/// Shape of a signed distance field in its local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SdfShape {
    Sphere { radius: f64 },
    /// Axis-aligned box centered at the origin.
    Box { half_extents: Vec3 },
    /// Cylinder with axis z, centered at the origin.
    Cylinder { radius: f64, half_height: f64 },
    /// Equilateral triangle of side `side` in the xz-plane (apex up, centered
    /// on its bounding box) extruded along y by `±half_length`.
    TriangularPrism { side: f64, half_length: f64 },
    /// Solid below the plane z = 0; the outward normal is +z.
    HalfSpace,
    Grid(SdfGrid),
}

/// A signed distance field: negative inside, positive outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sdf {
    pub shape: SdfShape,
    pub pose: Isometry3<f64>,
}

impl Sdf {
    pub fn new(shape: SdfShape, pose: Isometry3<f64>) -> Self {
        Self { shape, pose }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self::new(SdfShape::Sphere { radius }, Isometry3::translation(center.x, center.y, center.z))
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Self {
        Self::new(
            SdfShape::Box { half_extents },
            Isometry3::translation(center.x, center.y, center.z),
        )
    }

    pub fn cylinder(center: Vec3, radius: f64, height: f64) -> Self {
        Self::new(
            SdfShape::Cylinder { radius, half_height: height * 0.5 },
            Isometry3::translation(center.x, center.y, center.z),
        )
    }

    /// Half-space solid below `z = height`.
    pub fn floor(height: f64) -> Self {
        Self::new(SdfShape::HalfSpace, Isometry3::translation(0.0, 0.0, height))
    }

    pub fn grid(grid: SdfGrid) -> Self {
        Self::new(SdfShape::Grid(grid), Isometry3::identity())
    }

    pub fn with_pose(mut self, pose: Isometry3<f64>) -> Self {
        self.pose = pose;
        self
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.shape, SdfShape::Grid(_))
    }

    fn to_local(&self, x: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(&Point3::from(*x)).coords
    }

    /// Signed distance at world point `x`.
    pub fn eval(&self, x: &Vec3) -> f64 {
        self.eval_local(&self.to_local(x))
    }

    pub fn eval_local(&self, p: &Vec3) -> f64 {
        match &self.shape {
            SdfShape::Sphere { radius } => p.norm() - radius,
            SdfShape::Box { half_extents } => {
                let q = p.abs() - half_extents;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            SdfShape::Cylinder { radius, half_height } => {
                let d2 = Vector2::new(p.x, p.y).norm() - radius;
                extrude(d2, p.z.abs() - half_height)
            }
            SdfShape::TriangularPrism { side, half_length } => {
                let h = side * 3f64.sqrt() / 2.0;
                let q = Vector2::new(p.x, p.z);
                let d2 = sd_triangle(
                    q,
                    Vector2::new(-side / 2.0, -h / 2.0),
                    Vector2::new(side / 2.0, -h / 2.0),
                    Vector2::new(0.0, h / 2.0),
                );
                extrude(d2, p.y.abs() - half_length)
            }
            SdfShape::HalfSpace => p.z,
            SdfShape::Grid(g) => g.eval(p),
        }
    }

    /// Unit gradient of the field at world point `x`.
    pub fn gradient(&self, x: &Vec3) -> Result<Vec3, GeomError> {
        let p = self.to_local(x);
        let raw = match &self.shape {
            SdfShape::Sphere { .. } => p,
            SdfShape::HalfSpace => Vec3::z(),
            SdfShape::Box { half_extents } => {
                let q = p.abs() - half_extents;
                let sign = p.map(|c| if c < 0.0 { -1.0 } else { 1.0 });
                if q.max() > 0.0 {
                    q.sup(&Vec3::zeros()).component_mul(&sign)
                } else {
                    let mut g = Vec3::zeros();
                    let a = q.imax();
                    g[a] = sign[a];
                    g
                }
            }
            SdfShape::Grid(_) => self.fd_gradient(&p, GRID_FD_STEP),
            _ => self.fd_gradient(&p, ANALYTIC_FD_STEP),
        };
        let n = raw.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(GeomError::DegenerateGradient { x: x.x, y: x.y, z: x.z });
        }
        Ok(self.pose.rotation * (raw / n))
    }

    fn fd_gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g[a] = (self.eval_local(&(p + e)) - self.eval_local(&(p - e))) / (2.0 * h);
        }
        g
    }

    /// Enclosed volume of bounded analytic shapes.
    pub fn volume(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match &self.shape {
            SdfShape::Sphere { radius } => Some(4.0 / 3.0 * PI * radius.powi(3)),
            SdfShape::Box { half_extents } => Some(8.0 * half_extents.product()),
            SdfShape::Cylinder { radius, half_height } => Some(PI * radius * radius * 2.0 * half_height),
            SdfShape::TriangularPrism { side, half_length } => {
                Some(3f64.sqrt() / 4.0 * side * side * 2.0 * half_length)
            }
            SdfShape::HalfSpace | SdfShape::Grid(_) => None,
        }
    }

    /// Local-frame half extents of bounded analytic shapes.
    pub fn local_half_extents(&self) -> Option<Vec3> {
        match &self.shape {
            SdfShape::Sphere { radius } => Some(Vec3::repeat(*radius)),
            SdfShape::Box { half_extents } => Some(*half_extents),
            SdfShape::Cylinder { radius, half_height } => Some(Vec3::new(*radius, *radius, *half_height)),
            SdfShape::TriangularPrism { side, half_length } => {
                Some(Vec3::new(side / 2.0, *half_length, side * 3f64.sqrt() / 4.0))
            }
            SdfShape::HalfSpace => None,
            SdfShape::Grid(g) => Some((g.upper() - g.origin()) * 0.5),
        }
    }
}

fn extrude(d2: f64, dz: f64) -> f64 {
    let w = Vector2::new(d2, dz);
    w.max().min(0.0) + w.sup(&Vector2::zeros()).norm()
}

/// Exact signed distance to a 2D triangle.
fn sd_triangle(p: Vector2<f64>, p0: Vector2<f64>, p1: Vector2<f64>, p2: Vector2<f64>) -> f64 {
    let e0 = p1 - p0;
    let e1 = p2 - p1;
    let e2 = p0 - p2;
    let v0 = p - p0;
    let v1 = p - p1;
    let v2 = p - p2;
    let pq0 = v0 - e0 * (v0.dot(&e0) / e0.dot(&e0)).clamp(0.0, 1.0);
    let pq1 = v1 - e1 * (v1.dot(&e1) / e1.dot(&e1)).clamp(0.0, 1.0);
    let pq2 = v2 - e2 * (v2.dot(&e2) / e2.dot(&e2)).clamp(0.0, 1.0);
    let s = (e0.x * e2.y - e0.y * e2.x).signum();
    let cand = [
        (pq0.dot(&pq0), s * (v0.x * e0.y - v0.y * e0.x)),
        (pq1.dot(&pq1), s * (v1.x * e1.y - v1.y * e1.x)),
        (pq2.dot(&pq2), s * (v2.x * e2.y - v2.y * e2.x)),
    ];
    let d = cand.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let side = cand.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    -d.sqrt() * side.signum()
}

/// Samples the signed distance of a watertight mesh on a regular grid
/// covering its bounding box expanded by `padding` meters.
///
/// Distances are exact (closest triangle through a BVH); signs come from
/// axis-aligned parity ray casts along x, y and z with a majority vote.
pub fn mesh_to_sdf_grid(
    mesh: &TriMesh,
    resolution: [usize; 3],
    padding: f64,
) -> Result<SdfGrid, GeomError> {
    if mesh.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    if resolution.iter().any(|&r| r < 8) {
        return Err(GeomError::InvalidSdf(format!(
            "resolution {resolution:?} must be at least 8 per axis"
        )));
    }
    let open = mesh.open_edge_count();
    if open > 0 {
        return Err(GeomError::OpenMesh { open_edges: open });
    }
    let bounds = mesh.bounds().ok_or(GeomError::EmptyMesh)?.expanded(padding);
    let ext = bounds.extent();
    let cell = (0..3)
        .map(|a| ext[a] / (resolution[a] - 1) as f64)
        .fold(0.0, f64::max);
    let span = Vec3::new(
        cell * (resolution[0] - 1) as f64,
        cell * (resolution[1] - 1) as f64,
        cell * (resolution[2] - 1) as f64,
    );
    let origin = bounds.center() - span * 0.5;

    let bvh = MeshBvh::new(mesh);
    let [nx, ny, nz] = resolution;
    let node = |i: usize, j: usize, k: usize| origin + Vec3::new(i as f64, j as f64, k as f64) * cell;

    let votes: Vec<Vec<bool>> = (0..3).map(|axis| parity_inside(mesh, origin, cell, resolution, axis)).collect();
    let mut values = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                let d = bvh.distance(&node(i, j, k)).unwrap_or(f64::INFINITY);
                let inside = votes.iter().filter(|v| v[idx]).count() >= 2;
                values.push(if inside { -d } else { d } as f32);
            }
        }
    }
    SdfGrid::new(origin, cell, resolution, values)
}

/// Default grid: 64 nodes per axis and padding of 10% of the largest extent.
pub fn mesh_to_sdf_grid_default(mesh: &TriMesh) -> Result<SdfGrid, GeomError> {
    let ext = mesh.bounds().ok_or(GeomError::EmptyMesh)?.extent().max();
    mesh_to_sdf_grid(mesh, [64; 3], 0.1 * ext)
}

/// Inside/outside classification of every grid node by counting crossings
/// of a ray cast along `axis` in the negative direction.
fn parity_inside(
    mesh: &TriMesh,
    origin: Vec3,
    cell: f64,
    resolution: [usize; 3],
    axis: usize,
) -> Vec<bool> {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let [nx, ny, nz] = resolution;
    let mut out = vec![false; nx * ny * nz];
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len()).map(|i| mesh.triangle(i)).collect();
    let ranges: Vec<[f64; 4]> = tris
        .iter()
        .map(|t| {
            let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for p in t {
                umin = umin.min(p[u]);
                umax = umax.max(p[u]);
                vmin = vmin.min(p[v]);
                vmax = vmax.max(p[v]);
            }
            [umin, umax, vmin, vmax]
        })
        .collect();
    let mut hits: Vec<f64> = Vec::new();
    for jv in 0..resolution[v] {
        let pv = origin[v] + jv as f64 * cell;
        for ju in 0..resolution[u] {
            let pu = origin[u] + ju as f64 * cell;
            hits.clear();
            for (t, r) in tris.iter().zip(&ranges) {
                if pu < r[0] || pu > r[1] || pv < r[2] || pv > r[3] {
                    continue;
                }
                if let Some(x) = line_hit(t, u, v, axis, pu, pv) {
                    hits.push(x);
                }
            }
            hits.sort_by(f64::total_cmp);
            let mut h = 0;
            for ia in 0..resolution[axis] {
                let pa = origin[axis] + ia as f64 * cell;
                while h < hits.len() && hits[h] < pa {
                    h += 1;
                }
                let mut ijk = [0usize; 3];
                ijk[axis] = ia;
                ijk[u] = ju;
                ijk[v] = jv;
                out[ijk[0] + nx * (ijk[1] + ny * ijk[2])] = h % 2 == 1;
            }
        }
    }
    out
}

/// Intersection coordinate along `axis` of the line through `(pu, pv)`
/// with triangle `t`, if the line pierces it. Points on shared edges are
/// assigned to exactly one triangle with a top-left fill rule, so parity
/// stays correct when the line passes through an edge or vertex.
fn line_hit(t: &[Vec3; 3], u: usize, v: usize, axis: usize, pu: f64, pv: f64) -> Option<f64> {
    let p = [pu, pv];
    let mut q = [[t[0][u], t[0][v]], [t[1][u], t[1][v]], [t[2][u], t[2][v]]];
    let mut h = [t[0][axis], t[1][axis], t[2][axis]];
    let area = orient(&q[0], &q[1], &q[2]);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        q.swap(1, 2);
        h.swap(1, 2);
    }
    let mut w = [0.0; 3];
    for e in 0..3 {
        let (a, b) = (&q[(e + 1) % 3], &q[(e + 2) % 3]);
        let we = edge_function(&p, a, b);
        let (du, dv) = (b[0] - a[0], b[1] - a[1]);
        let owns_edge = dv > 0.0 || (dv == 0.0 && du < 0.0);
        if we < 0.0 || (we == 0.0 && !owns_edge) {
            return None;
        }
        w[e] = we;
    }
    let sum = w[0] + w[1] + w[2];
    if sum <= 0.0 {
        return None;
    }
    Some((w[0] * h[0] + w[1] * h[1] + w[2] * h[2]) / sum)
}

fn orient(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Orientation of `p` against edge `a -> b`, evaluated in a canonical vertex
/// order so the reversed edge yields the exact negation.
fn edge_function(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    if (a[0], a[1]) <= (b[0], b[1]) {
        orient(a, b, p)
    } else {
        -orient(b, a, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Sdf {
        Sdf::cuboid(Vec3::zeros(), Vec3::repeat(0.5))
    }

    #[test]
    fn box_values() {
        let b = unit_box();
        assert_eq!(b.eval(&Vec3::zeros()), -0.5);
        assert_eq!(b.eval(&Vec3::new(1.5, 0.0, 0.0)), 1.0);
    }

    #[test]
    fn cylinder_lateral_surface_is_zero() {
        let c = Sdf::cylinder(Vec3::zeros(), 0.03, 0.08);
        for k in 0..16 {
            let a = k as f64 * 0.4;
            let p = Vec3::new(0.03 * a.cos(), 0.03 * a.sin(), 0.01 * (k as f64 - 8.0) / 4.0);
            assert!(c.eval(&p).abs() < 1e-9);
        }
        assert!((c.eval(&Vec3::new(0.0, 0.0, 0.05)) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn gradients() {
        let s = Sdf::sphere(Vec3::zeros(), 0.05);
        assert!((s.gradient(&Vec3::new(0.1, 0.0, 0.0)).unwrap() - Vec3::x()).norm() < 1e-15);
        let floor = Sdf::floor(0.0);
        assert_eq!(floor.gradient(&Vec3::new(0.3, -2.0, 0.4)).unwrap(), Vec3::z());
        let g = unit_box().gradient(&Vec3::new(0.6, 0.2, 0.1)).unwrap();
        assert!((g - Vec3::x()).norm() < 1e-6);
        // Center of a sphere is a singular point.
        assert!(matches!(s.gradient(&Vec3::zeros()), Err(GeomError::DegenerateGradient { .. })));
    }

    #[test]
    fn prism_gradient_is_unit() {
        let p = Sdf::new(SdfShape::TriangularPrism { side: 0.05, half_length: 0.02 }, Isometry3::identity());
        let g = p.gradient(&Vec3::new(0.0, 0.0, 0.04)).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-9);
        assert!((g - Vec3::z()).norm() < 1e-6);
        // Base face is flat: distance below equals offset from the base.
        let h = 0.05 * 3f64.sqrt() / 2.0;
        assert!((p.eval(&Vec3::new(0.0, 0.0, -h / 2.0 - 0.01)) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn grid_requires_resolution() {
        assert!(SdfGrid::new(Vec3::zeros(), 0.1, [0, 4, 4], vec![]).is_err());
        assert!(SdfGrid::new(Vec3::zeros(), 0.1, [2, 2, 2], vec![0.0; 8]).is_ok());
    }

    #[test]
    fn grid_outside_adds_offset() {
        let g = SdfGrid::new(Vec3::zeros(), 1.0, [2, 2, 2], vec![1.0; 8]).unwrap();
        assert!((g.eval(&Vec3::new(3.0, 0.5, 0.5)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cube_mesh_grid() {
        let mesh = TriMesh::cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5), [1, 1, 1]).unwrap();
        let g = mesh_to_sdf_grid(&mesh, [32; 3], 0.1).unwrap();
        let diag = g.cell() * 3f64.sqrt();
        assert!((g.eval(&Vec3::zeros()) + 0.5).abs() <= diag);
        assert!(g.value(0, 0, 0) > 0.0);
    }

    #[test]
    fn open_mesh_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(mesh_to_sdf_grid(&m, [8; 3], 0.1), Err(GeomError::OpenMesh { open_edges: 3 })));
    }
}
