use serde::{Deserialize, Serialize};

use super::LdmError;
use crate::geom::Vec3;

/// Blends the velocity field to zero towards the mount: 1 below `z_lo`,
/// 0 above `z_hi`, quintic smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub z_lo: f64,
    pub z_hi: f64,
}

impl FreezeMask {
    pub fn new(z_lo: f64, z_hi: f64) -> Result<Self, LdmError> {
        if !(z_lo < z_hi) || !z_lo.is_finite() || !z_hi.is_finite() {
            return Err(LdmError::InvalidField(format!(
                "freeze mask needs z_lo < z_hi, got {z_lo} and {z_hi}"
            )));
        }
        Ok(Self { z_lo, z_hi })
    }

    /// Mask with the frozen band ending 1 cm below the mount plane.
    pub fn below_mount(z_mount: f64) -> Self {
        Self { z_lo: z_mount - 0.01, z_hi: z_mount }
    }

    fn t(&self, z: f64) -> f64 {
        ((self.z_hi - z) / (self.z_hi - self.z_lo)).clamp(0.0, 1.0)
    }

    pub fn value(&self, z: f64) -> f64 {
        if z >= self.z_hi {
            return 0.0;
        }
        if z <= self.z_lo {
            return 1.0;
        }
        let t = self.t(z);
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }

    /// d(mask)/dz.
    pub fn derivative(&self, z: f64) -> f64 {
        if z >= self.z_hi || z <= self.z_lo {
            return 0.0;
        }
        let t = self.t(z);
        let dt_dz = -1.0 / (self.z_hi - self.z_lo);
        30.0 * t * t * (t - 1.0) * (t - 1.0) * dt_dz
    }
}

/// Stationary velocity field as a sum of Gaussian radial basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfField {
    pub centers: Vec<Vec3>,
    pub widths: Vec<f64>,
    pub weights: Vec<Vec3>,
}

impl RbfField {
    pub fn new(centers: Vec<Vec3>, widths: Vec<f64>, weights: Vec<Vec3>) -> Result<Self, LdmError> {
        let k = centers.len();
        if widths.len() != k || weights.len() != k {
            return Err(LdmError::InvalidField(format!(
                "kernel arrays disagree: {k} centers, {} widths, {} weights",
                widths.len(),
                weights.len()
            )));
        }
        if let Some(i) = widths.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(LdmError::InvalidField(format!("width {i} must be positive")));
        }
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !centers.iter().all(finite) || !weights.iter().all(finite) {
            return Err(LdmError::InvalidField("non-finite center or weight".into()));
        }
        Ok(Self { centers, widths, weights })
    }

    pub fn kernel_count(&self) -> usize {
        self.centers.len()
    }

    /// Unmasked velocity.
    pub fn raw_velocity(&self, x: &Vec3) -> Vec3 {
        let mut v = Vec3::zeros();
        for i in 0..self.centers.len() {
            let d = x - self.centers[i];
            let s = self.widths[i];
            v += self.weights[i] * (-d.norm_squared() / (2.0 * s * s)).exp();
        }
        v
    }

    pub fn velocity(&self, mask: &FreezeMask, x: &Vec3) -> Vec3 {
        let m = mask.value(x.z);
        if m == 0.0 {
            return Vec3::zeros();
        }
        self.raw_velocity(x) * m
    }

    /// Vector-Jacobian product of the masked velocity at `x` with cotangent
    /// `ybar`: accumulates `ybar^T dv/dx` into `gx`, and the parameter
    /// cotangents into `g_weights` and `g_widths`.
    pub fn vjp(
        &self,
        mask: &FreezeMask,
        x: &Vec3,
        ybar: &Vec3,
        gx: &mut Vec3,
        g_weights: &mut [Vec3],
        g_widths: &mut [f64],
    ) {
        let m = mask.value(x.z);
        let dm = mask.derivative(x.z);
        if m == 0.0 && dm == 0.0 {
            return;
        }
        let mut raw = Vec3::zeros();
        for i in 0..self.centers.len() {
            let d = x - self.centers[i];
            let s = self.widths[i];
            let r2 = d.norm_squared();
            let g = (-r2 / (2.0 * s * s)).exp();
            let lam = self.weights[i];
            let ly = lam.dot(ybar);
            raw += lam * g;
            // d g / d x = -g d / s^2
            *gx -= d * (m * ly * g / (s * s));
            g_weights[i] += ybar * (m * g);
            g_widths[i] += m * ly * g * r2 / (s * s * s);
        }
        gx.z += dm * raw.dot(ybar);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_profile() {
        let m = FreezeMask::new(-0.01, 0.0).unwrap();
        assert_eq!(m.value(-0.02), 1.0);
        assert_eq!(m.value(0.0), 0.0);
        assert_eq!(m.value(0.5), 0.0);
        assert!((m.value(-0.005) - 0.5).abs() < 1e-12);
        let h = 1e-7;
        for z in [-0.009, -0.005, -0.001] {
            let fd = (m.value(z + h) - m.value(z - h)) / (2.0 * h);
            assert!((fd - m.derivative(z)).abs() < 1e-5 * fd.abs().max(1.0));
        }
        assert!(FreezeMask::new(0.0, 0.0).is_err());
    }

    #[test]
    fn velocity_examples() {
        let mask = FreezeMask::new(10.0, 11.0).unwrap();
        let one = RbfField::new(vec![Vec3::new(0.1, 0.2, 0.3)], vec![0.5], vec![Vec3::new(1.0, -2.0, 3.0)]).unwrap();
        assert_eq!(one.velocity(&mask, &Vec3::new(0.1, 0.2, 0.3)), Vec3::new(1.0, -2.0, 3.0));
        assert_eq!(one.velocity(&mask, &Vec3::new(0.0, 0.0, 11.0)), Vec3::zeros());

        let two = RbfField::new(
            vec![Vec3::zeros(), Vec3::x()],
            vec![1.0, 1.0],
            vec![Vec3::x(), Vec3::y()],
        )
        .unwrap();
        let v = two.velocity(&mask, &Vec3::new(0.5, 0.0, 0.0));
        let e = (-0.125f64).exp();
        assert!((v - Vec3::new(e, e, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(RbfField::new(vec![Vec3::zeros()], vec![0.0], vec![Vec3::zeros()]).is_err());
        assert!(RbfField::new(vec![Vec3::zeros()], vec![1.0, 2.0], vec![Vec3::zeros()]).is_err());
    }
}
