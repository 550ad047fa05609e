//! Geometric substrate: triangle meshes, signed distance fields, surface
//! sampling and Chamfer distance.

mod bvh;
mod chamfer;
mod io;
mod mesh;
mod sample;
mod sdf;

pub use bvh::MeshBvh;
pub use chamfer::{chamfer, NearestGrid};
pub use io::{read_mesh, read_sdf_grid, write_mesh, write_sdf_grid, parse_mesh, format_mesh};
pub use mesh::{Aabb, TriMesh};
pub use sample::{surface_sample, surface_sample_transported, surface_sample_with_faces};
pub use sdf::{mesh_to_sdf_grid, mesh_to_sdf_grid_default, Sdf, SdfGrid, SdfShape};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Points and vectors are plain `f64` triples, in meters unless stated.
pub type Vec3 = Vector3<f64>;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("invalid sdf: {0}")]
    InvalidSdf(String),
    #[error("degenerate sdf gradient at ({x:.6}, {y:.6}, {z:.6})")]
    DegenerateGradient { x: f64, y: f64, z: f64 },
    #[error("mesh is not watertight: {open_edges} open edges")]
    OpenMesh { open_edges: usize },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An unordered set of 3D points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

impl From<Vec<Vec3>> for PointCloud {
    fn from(points: Vec<Vec3>) -> Self {
        Self { points }
    }
}
