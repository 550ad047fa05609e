use std::collections::HashMap;

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use super::{GeomError, Vec3};

/// Faces with less area than this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Aabb { min: *first, max: *first };
        for p in &points[1..] {
            b.include(p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn expanded(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Aabb { min: self.min - m, max: self.max + m }
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Indexed triangle mesh with outward (counter-clockwise) winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices, degenerate faces and
    /// non-finite coordinates.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeomError::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(GeomError::InvalidMesh(format!(
                    "face {fi} references a vertex out of range ({n} vertices)"
                )));
            }
        }
        let mesh = Self { vertices, faces };
        for fi in 0..mesh.faces.len() {
            if mesh.face_area(fi) <= DEGENERATE_AREA {
                return Err(GeomError::InvalidMesh(format!("face {fi} is degenerate")));
            }
        }
        Ok(mesh)
    }

    /// Replaces vertex positions while keeping connectivity. Used for
    /// deformations, which preserve topology by construction.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len());
        Self { vertices, faces: self.faces.clone() }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, fi: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[fi];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal (twice the area vector).
    pub fn face_normal(&self, fi: usize) -> Vec3 {
        let [a, b, c] = self.triangle(fi);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        0.5 * self.face_normal(fi).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.face_area(i)).sum()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Enclosed volume by the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c]))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Number of undirected edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.faces.is_empty() && self.open_edge_count() == 0
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| iso.transform_point(&(*v).into()).coords)
            .collect();
        Self { vertices, faces: self.faces.clone() }
    }

    /// Uniform scaling about `center`.
    pub fn scaled(&self, center: &Vec3, factor: f64) -> Self {
        let vertices = self.vertices.iter().map(|v| center + (v - center) * factor).collect();
        Self { vertices, faces: self.faces.clone() }
    }

    /// Reflection through the plane x = 0, with winding flipped so normals
    /// stay outward.
    pub fn mirrored_x(&self) -> Self {
        let vertices = self.vertices.iter().map(|v| Vec3::new(-v.x, v.y, v.z)).collect();
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self { vertices, faces }
    }

    /// Closed box `[min, max]` tessellated with `divisions` quads per axis.
    pub fn cuboid(min: Vec3, max: Vec3, divisions: [usize; 3]) -> Result<Self, GeomError> {
        let n = divisions;
        if n.contains(&0) {
            return Err(GeomError::InvalidMesh("cuboid divisions must be positive".into()));
        }
        let mut index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut vid = |ijk: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
            *index.entry(ijk).or_insert_with(|| {
                let p = Vec3::new(
                    min.x + (max.x - min.x) * ijk[0] as f64 / n[0] as f64,
                    min.y + (max.y - min.y) * ijk[1] as f64 / n[1] as f64,
                    min.z + (max.z - min.z) * ijk[2] as f64 / n[2] as f64,
                );
                vertices.push(p);
                vertices.len() - 1
            })
        };
        // For each axis and side, the two in-plane axes (u, v) are ordered so
        // that u x v points outward on the max side.
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in 0..2 {
                let fixed = if side == 0 { 0 } else { n[axis] };
                for i in 0..n[u] {
                    for j in 0..n[v] {
                        let corner = |di: usize, dj: usize| {
                            let mut c = [0usize; 3];
                            c[axis] = fixed;
                            c[u] = i + di;
                            c[v] = j + dj;
                            c
                        };
                        let a = vid(corner(0, 0), &mut vertices);
                        let b = vid(corner(1, 0), &mut vertices);
                        let c = vid(corner(1, 1), &mut vertices);
                        let d = vid(corner(0, 1), &mut vertices);
                        if side == 1 {
                            faces.push([a, b, c]);
                            faces.push([a, c, d]);
                        } else {
                            faces.push([a, c, b]);
                            faces.push([a, d, c]);
                        }
                    }
                }
            }
        }
        Self::new(vertices, faces)
    }

    /// Icosphere obtained by `subdivisions` rounds of midpoint subdivision.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> Result<Self, GeomError> {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            for &[a, b, c] in &faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        let vertices = verts.into_iter().map(|v| center + v * radius).collect();
        Self::new(vertices, faces)
    }

    /// Capped cylinder along z centered at `center`.
    pub fn cylinder(
        center: Vec3,
        radius: f64,
        height: f64,
        segments: usize,
    ) -> Result<Self, GeomError> {
        let segments = segments.max(3);
        let h = height * 0.5;
        let mut vertices = Vec::with_capacity(2 * segments + 2);
        for k in 0..segments {
            let a = std::f64::consts::TAU * k as f64 / segments as f64;
            let (s, c) = a.sin_cos();
            vertices.push(center + Vec3::new(radius * c, radius * s, -h));
            vertices.push(center + Vec3::new(radius * c, radius * s, h));
        }
        let bottom = vertices.len();
        vertices.push(center + Vec3::new(0.0, 0.0, -h));
        let top = vertices.len();
        vertices.push(center + Vec3::new(0.0, 0.0, h));
        let mut faces = Vec::with_capacity(4 * segments);
        for k in 0..segments {
            let (b0, t0) = (2 * k, 2 * k + 1);
            let (b1, t1) = (2 * ((k + 1) % segments), 2 * ((k + 1) % segments) + 1);
            faces.push([b0, b1, t1]);
            faces.push([b0, t1, t0]);
            faces.push([bottom, b1, b0]);
            faces.push([top, t0, t1]);
        }
        Self::new(vertices, faces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_is_closed_with_outward_normals() {
        let m = TriMesh::cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5), [2, 3, 4]).unwrap();
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!((m.area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_volume_approaches_sphere() {
        let m = TriMesh::icosphere(Vec3::zeros(), 1.0, 3).unwrap();
        assert!(m.is_watertight());
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((m.signed_volume() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn mirrored_mesh_keeps_positive_volume() {
        let m = TriMesh::cylinder(Vec3::new(0.3, 0.0, 0.0), 0.1, 0.2, 24).unwrap();
        let v = m.signed_volume();
        assert!(v > 0.0);
        assert!((m.mirrored_x().signed_volume() - v).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn open_edges_counted() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let m = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert_eq!(m.open_edge_count(), 3);
        assert!(!m.is_watertight());
    }
}
