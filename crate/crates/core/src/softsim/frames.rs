use std::io::{Read, Write};

use crate::geom::Vec3;

const MAGIC: &[u8; 4] = b"MPMF";

/// One state dump: magic, u32 particle count, f32 position triplets, f32
/// stresses; little-endian.
pub fn write_frame(mut w: impl Write, positions: &[Vec3], stresses: &[f64]) -> std::io::Result<()> {
    if positions.len() != stresses.len() {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "positions and stresses differ in length"));
    }
    let n = u32::try_from(positions.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "too many particles"))?;
    let mut buf = Vec::with_capacity(8 + 16 * positions.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    for p in positions {
        for c in p.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for s in stresses {
        buf.extend_from_slice(&(*s as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_frame(mut r: impl Read) -> std::io::Result<(Vec<[f32; 3]>, Vec<f32>)> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "not an MPMF frame"));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
    let mut body = vec![0u8; 16 * n];
    r.read_exact(&mut body)?;
    let f = |i: usize| f32::from_le_bytes(body[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let pos = (0..n).map(|i| [f(3 * i), f(3 * i + 1), f(3 * i + 2)]).collect();
    let stress = (0..n).map(|i| f(3 * n + i)).collect();
    Ok((pos, stress))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let pos = vec![Vec3::new(0.5, -1.0, 2.0), Vec3::new(0.0, 0.25, 8.0)];
        let mut buf = Vec::new();
        write_frame(&mut buf, &pos, &[10.0, 20.5]).unwrap();
        assert_eq!(buf.len(), 8 + 32);
        let (p, s) = read_frame(&buf[..]).unwrap();
        assert_eq!(p[1], [0.0, 0.25, 8.0]);
        assert_eq!(s, vec![10.0, 20.5]);
        assert!(read_frame(&b"XXXX\0\0\0\0"[..]).is_err());
    }
}
