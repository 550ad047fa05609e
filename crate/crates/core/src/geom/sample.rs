use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriMesh;
use super::{GeomError, PointCloud, Vec3};

/// Area-weighted uniform samples on the mesh surface; deterministic per seed.
pub fn surface_sample(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    surface_sample_with_faces(mesh, n, seed).map(|(cloud, _)| cloud)
}

/// Like [`surface_sample`], also returning the face each sample lies on.
pub fn surface_sample_with_faces(
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>), GeomError> {
    sample_impl(mesh, mesh, n, seed)
}

/// Samples drawn on `reference` (faces and barycentric coordinates) and
/// evaluated on `mesh`, which must share its face list. For identical
/// meshes this equals [`surface_sample`] with the same seed.
pub fn surface_sample_transported(
    reference: &TriMesh,
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<PointCloud, GeomError> {
    if reference.faces() != mesh.faces() || reference.vertices().len() != mesh.vertices().len() {
        return Err(GeomError::InvalidMesh("meshes do not share a face list".into()));
    }
    sample_impl(reference, mesh, n, seed).map(|(cloud, _)| cloud)
}

fn sample_impl(
    reference: &TriMesh,
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>), GeomError> {
    if reference.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(reference.faces().len());
    let mut total = 0.0;
    for fi in 0..reference.faces().len() {
        total += reference.face_area(fi);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let fi = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(fi);
        let s = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let p: Vec3 = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        points.push(p);
        faces.push(fi);
    }
    Ok((PointCloud::new(points), faces))
}
