use super::mesh::Aabb;
use super::{GeomError, PointCloud, Vec3};

/// Uniform grid over a point set for nearest-neighbor queries. Cells are
/// sized near the mean point spacing.
#[derive(Debug, Clone)]
pub struct NearestGrid<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NearestGrid<'a> {
    pub fn new(points: &'a [Vec3]) -> Result<Self, GeomError> {
        let bounds = Aabb::from_points(points).ok_or(GeomError::EmptyCloud)?;
        let ext = bounds.extent();
        let max_ext = ext.max().max(1e-12);
        let floor = max_ext / 64.0;
        let vol: f64 = ext.iter().map(|e| e.max(floor)).product();
        let n = points.len();
        let mut cell = (vol / n as f64).cbrt().max(max_ext * 1e-6);
        let dims_for = |cell: f64| -> [usize; 3] {
            [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).max(1))
        };
        let mut dims = dims_for(cell);
        while dims.iter().product::<usize>() > 8 * n + 64 {
            cell *= 1.5;
            dims = dims_for(cell);
        }
        let total: usize = dims.iter().product();
        let cell_of = |p: &Vec3| -> usize {
            let c = [0, 1, 2].map(|a| (((p[a] - bounds.min[a]) / cell) as usize).min(dims[a] - 1));
            c[0] + dims[0] * (c[1] + dims[1] * c[2])
        };
        let mut counts = vec![0usize; total + 1];
        let keys: Vec<usize> = points.iter().map(cell_of).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; n];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        Ok(Self { points, origin: bounds.min, cell, dims, starts: counts, items })
    }

    /// Index of and squared distance to the nearest stored point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        let c: [isize; 3] = [0, 1, 2].map(|a| {
            let g = ((q[a] - self.origin[a]) / self.cell).floor();
            (g.max(0.0) as isize).min(self.dims[a] as isize - 1)
        });
        let max_ring = *self.dims.iter().max().unwrap() as isize;
        let mut best = (usize::MAX, f64::INFINITY);
        for r in 0..=max_ring {
            self.scan_ring(c, r, q, &mut best);
            // Points outside rings 0..=r are at least r cells away.
            let bound = r as f64 * self.cell;
            if best.0 != usize::MAX && best.1 <= bound * bound {
                break;
            }
        }
        best
    }

    fn scan_ring(&self, c: [isize; 3], r: isize, q: &Vec3, best: &mut (usize, f64)) {
        let d = self.dims.map(|x| x as isize);
        let lo = [0, 1, 2].map(|a| (c[a] - r).max(0));
        let hi = [0, 1, 2].map(|a| (c[a] + r).min(d[a] - 1));
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                let on_shell_jk = (k - c[2]).abs() == r || (j - c[1]).abs() == r;
                let mut i = lo[0];
                while i <= hi[0] {
                    let on_shell = on_shell_jk || (i - c[0]).abs() == r;
                    if on_shell {
                        let cell = (i + d[0] * (j + d[1] * k)) as usize;
                        for &pi in &self.items[self.starts[cell]..self.starts[cell + 1]] {
                            let d2 = (self.points[pi] - q).norm_squared();
                            if d2 < best.1 {
                                *best = (pi, d2);
                            }
                        }
                        i += 1;
                    } else {
                        // Jump to the far face of the shell on this row.
                        i = c[0] + r;
                    }
                }
            }
        }
    }
}

/// Symmetric Chamfer distance with squared Euclidean distances:
/// mean over `a` of the nearest squared distance into `b`, plus the same
/// from `b` into `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, GeomError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let ga = NearestGrid::new(&a.points)?;
    let gb = NearestGrid::new(&b.points)?;
    let ab: f64 = a.points.iter().map(|p| gb.nearest(p).1).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.points.iter().map(|p| ga.nearest(p).1).sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let a = PointCloud::new(vec![Vec3::zeros()]);
        let b = PointCloud::new(vec![Vec3::x()]);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        let a2 = PointCloud::new(vec![Vec3::zeros(), Vec3::x()]);
        let b2 = PointCloud::new(vec![Vec3::zeros()]);
        assert_eq!(chamfer(&a2, &b2).unwrap(), 0.5);
        assert!(matches!(chamfer(&a, &PointCloud::default()), Err(GeomError::EmptyCloud)));
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.01f64..0.01), 1..120)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vec3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(pts in cloud(), q in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)) {
            let q = Vec3::new(q.0, q.1, q.2);
            let g = NearestGrid::new(&pts).unwrap();
            let brute = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(g.nearest(&q).1, brute);
        }

        #[test]
        fn chamfer_symmetric_and_zero_on_self(a in cloud(), b in cloud()) {
            let (a, b) = (PointCloud::new(a), PointCloud::new(b));
            prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
            let ab = chamfer(&a, &b).unwrap();
            let ba = chamfer(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        }
    }
}
