//! Text mesh format (`v x y z` / `f i j k`, one-based) and the binary grid
//! SDF format (`SDF1` header, little-endian, f32 samples x-fastest).

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::mesh::TriMesh;
use super::sdf::SdfGrid;
use super::{GeomError, Vec3};

const SDF_MAGIC: &[u8; 4] = b"SDF1";

pub fn parse_mesh(text: &str) -> Result<TriMesh, GeomError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        let perr = |msg: &str| GeomError::Parse { line: ln + 1, msg: msg.to_string() };
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| perr(&e.to_string())))
                    .collect::<Result<_, _>>()?;
                if c.len() != 3 {
                    return Err(perr("vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or(s);
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(perr(&format!("bad face index `{s}`"))),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(perr("face needs at least three indices"));
                }
                // Fan-triangulate polygons.
                for t in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[t], idx[t + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn format_mesh(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh, GeomError> {
    parse_mesh(&fs::read_to_string(path)?)
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<(), GeomError> {
    fs::write(path, format_mesh(mesh))?;
    Ok(())
}

pub fn write_sdf_grid(mut w: impl Write, grid: &SdfGrid) -> Result<(), GeomError> {
    let mut buf = Vec::with_capacity(48 + 4 * grid.values().len());
    buf.extend_from_slice(SDF_MAGIC);
    for r in grid.resolution() {
        buf.extend_from_slice(&(r as u32).to_le_bytes());
    }
    for c in grid.origin().iter() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    buf.extend_from_slice(&grid.cell().to_le_bytes());
    for v in grid.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_sdf_grid(mut r: impl Read) -> Result<SdfGrid, GeomError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let bad = |m: &str| GeomError::InvalidSdf(m.to_string());
    if buf.len() < 48 || &buf[0..4] != SDF_MAGIC {
        return Err(bad("missing SDF1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let res = [u32_at(4), u32_at(8), u32_at(12)];
    let origin = Vec3::new(f64_at(16), f64_at(24), f64_at(32));
    let cell = f64_at(40);
    let n = res[0].checked_mul(res[1]).and_then(|v| v.checked_mul(res[2])).ok_or_else(|| bad("resolution overflow"))?;
    if buf.len() != 48 + 4 * n {
        return Err(bad("payload length does not match resolution"));
    }
    let values = buf[48..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SdfGrid::new(origin, cell, res, values)
}
