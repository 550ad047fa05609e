use super::field::{FreezeMask, RbfField};
use super::space::{sigmoid, LdmSpace};
use super::LdmError;
use crate::geom::{GeomError, NearestGrid, PointCloud, Vec3};

fn rk4_step(field: &RbfField, mask: &FreezeMask, x: &Vec3, h: f64) -> Vec3 {
    let k1 = field.velocity(mask, x);
    let k2 = field.velocity(mask, &(x + k1 * (0.5 * h)));
    let k3 = field.velocity(mask, &(x + k2 * (0.5 * h)));
    let k4 = field.velocity(mask, &(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Flows each point from t = 0 to t = 1 with `steps` uniform RK4 steps.
pub fn integrate_points(
    field: &RbfField,
    mask: &FreezeMask,
    points: &[Vec3],
    steps: usize,
) -> Result<Vec<Vec3>, LdmError> {
    if steps == 0 {
        return Err(LdmError::InvalidField("integration needs at least one step".into()));
    }
    let h = 1.0 / steps as f64;
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let mut x = *p;
            for _ in 0..steps {
                x = rk4_step(field, mask, &x, h);
            }
            if x.iter().all(|c| c.is_finite()) {
                Ok(x)
            } else {
                Err(LdmError::FlowDivergence { index })
            }
        })
        .collect()
}

pub fn integrate_flow(
    field: &RbfField,
    mask: &FreezeMask,
    points: &PointCloud,
    steps: usize,
) -> Result<PointCloud, LdmError> {
    integrate_points(field, mask, &points.points, steps).map(PointCloud::new)
}

/// Forward flow of surface samples with the intermediate RK4 stage points
/// kept for the reverse pass.
struct Tape {
    /// Per point, per step: `[x_n, y2, y3, y4]`.
    stages: Vec<[Vec3; 4]>,
    out: Vec<Vec3>,
}

fn forward_with_tape(field: &RbfField, mask: &FreezeMask, points: &[Vec3], steps: usize) -> Result<Tape, LdmError> {
    let h = 1.0 / steps as f64;
    let mut stages = Vec::with_capacity(points.len() * steps);
    let mut out = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let mut x = *p;
        for _ in 0..steps {
            let k1 = field.velocity(mask, &x);
            let y2 = x + k1 * (0.5 * h);
            let k2 = field.velocity(mask, &y2);
            let y3 = x + k2 * (0.5 * h);
            let k3 = field.velocity(mask, &y3);
            let y4 = x + k3 * h;
            let k4 = field.velocity(mask, &y4);
            stages.push([x, y2, y3, y4]);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        if !x.iter().all(|c| c.is_finite()) {
            return Err(LdmError::FlowDivergence { index });
        }
        out.push(x);
    }
    Ok(Tape { stages, out })
}

/// Sampled Chamfer objective between the flowed base samples and a target
/// cloud, with its exact gradient in raw parameters through the unrolled RK4
/// integration. Nearest-neighbor correspondences are held fixed at the
/// current iterate.
pub fn chamfer_value_and_gradient(
    space: &LdmSpace,
    raw: &[f64],
    base_samples: &[Vec3],
    target: &[Vec3],
) -> Result<(f64, Vec<f64>), LdmError> {
    if base_samples.is_empty() || target.is_empty() {
        return Err(GeomError::EmptyCloud.into());
    }
    let field = space.unpack(raw)?;
    let steps = space.steps;
    let tape = forward_with_tape(&field, &space.mask, base_samples, steps)?;
    let x = &tape.out;
    let (na, nb) = (x.len() as f64, target.len() as f64);

    let grid_t = NearestGrid::new(target)?;
    let grid_x = NearestGrid::new(x)?;
    let mut value_ab = 0.0;
    let mut xbar: Vec<Vec3> = vec![Vec3::zeros(); x.len()];
    for (a, xa) in x.iter().enumerate() {
        let (j, d2) = grid_t.nearest(xa);
        value_ab += d2;
        xbar[a] += (xa - target[j]) * (2.0 / na);
    }
    let mut value_ba = 0.0;
    for yb in target {
        let (a, d2) = grid_x.nearest(yb);
        value_ba += d2;
        xbar[a] += (x[a] - yb) * (2.0 / nb);
    }
    let value = value_ab / na + value_ba / nb;

    let k = field.kernel_count();
    let mut g_w = vec![Vec3::zeros(); k];
    let mut g_s = vec![0.0; k];
    let h = 1.0 / steps as f64;
    let mask = &space.mask;
    for (pi, abar0) in xbar.iter().enumerate() {
        let mut abar = *abar0;
        if abar == Vec3::zeros() {
            continue;
        }
        for n in (0..steps).rev() {
            let [xn, y2, y3, y4] = tape.stages[pi * steps + n];
            let mut xb = abar;
            let k4b = abar * (h / 6.0);
            let mut k3b = abar * (h / 3.0);
            let mut k2b = abar * (h / 3.0);
            let mut k1b = abar * (h / 6.0);

            let mut y4b = Vec3::zeros();
            field.vjp(mask, &y4, &k4b, &mut y4b, &mut g_w, &mut g_s);
            xb += y4b;
            k3b += y4b * h;

            let mut y3b = Vec3::zeros();
            field.vjp(mask, &y3, &k3b, &mut y3b, &mut g_w, &mut g_s);
            xb += y3b;
            k2b += y3b * (0.5 * h);

            let mut y2b = Vec3::zeros();
            field.vjp(mask, &y2, &k2b, &mut y2b, &mut g_w, &mut g_s);
            xb += y2b;
            k1b += y2b * (0.5 * h);

            let mut y1b = Vec3::zeros();
            field.vjp(mask, &xn, &k1b, &mut y1b, &mut g_w, &mut g_s);
            xb += y1b;
            abar = xb;
        }
    }
    let mut grad = vec![0.0; 4 * k];
    for i in 0..k {
        grad[4 * i] = g_w[i].x;
        grad[4 * i + 1] = g_w[i].y;
        grad[4 * i + 2] = g_w[i].z;
        grad[4 * i + 3] = g_s[i] * sigmoid(raw[4 * i + 3]);
    }
    Ok((value, grad))
}

/// Sampled Chamfer objective only (nearest neighbors recomputed).
pub fn chamfer_value(space: &LdmSpace, raw: &[f64], base_samples: &[Vec3], target: &[Vec3]) -> Result<f64, LdmError> {
    let x = space.deform_points(raw, base_samples)?;
    Ok(crate::geom::chamfer(&PointCloud::new(x), &PointCloud::new(target.to_vec()))?)
}
