use nalgebra::Matrix3;

use super::{Material, ParticleState};

/// Rotation factor of the polar decomposition `F = R S` (det F > 0), by
/// Newton iteration `R <- (R + R^-T) / 2` with Frobenius scaling while far
/// from converged. `R^-T` is the cofactor matrix over the determinant.
pub fn polar_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    let mut r = *f;
    for _ in 0..40 {
        let (c0, c1, c2) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
        let x0 = c1.cross(&c2);
        let det = c0.dot(&x0);
        if det.abs() < 1e-300 || !det.is_finite() {
            break;
        }
        let it = Matrix3::from_columns(&[x0, c2.cross(&c0), c0.cross(&c1)]) / det;
        let rn = r.norm();
        let g = (it.norm() / rn).sqrt();
        let next = if (g - 1.0).abs() > 1e-3 { (r * g + it / g) * 0.5 } else { (r + it) * 0.5 };
        let delta = (next - r).norm();
        r = next;
        // Quadratic convergence: the remaining error is about delta^2.
        if delta <= 1e-8 {
            break;
        }
    }
    r
}

/// Kirchhoff stress `tau = P F^T` of the fixed-corotated model.
pub fn kirchhoff_stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Matrix3<f64> {
    let j = f.determinant();
    let r = polar_rotation(f);
    (f - r) * f.transpose() * (2.0 * mu) + Matrix3::identity() * (lambda * (j - 1.0) * j)
}

pub fn cauchy_stress(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Matrix3<f64> {
    kirchhoff_stress(f, mu, lambda) / f.determinant()
}

pub fn von_mises(s: &Matrix3<f64>) -> f64 {
    let d = (s[(0, 0)] - s[(1, 1)]).powi(2) + (s[(1, 1)] - s[(2, 2)]).powi(2) + (s[(2, 2)] - s[(0, 0)]).powi(2);
    let shear = s[(0, 1)].powi(2) + s[(1, 2)].powi(2) + s[(2, 0)].powi(2);
    (0.5 * d + 3.0 * shear).max(0.0).sqrt()
}

/// Von Mises equivalent of the Cauchy stress of every particle (Pa).
pub fn particle_stress(particles: &ParticleState, material: &Material) -> Vec<f64> {
    let (mu, lambda) = material.lame();
    particles.f.iter().map(|f| von_mises(&cauchy_stress(f, mu, lambda))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    #[test]
    fn polar_of_rotation_times_stretch() {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.7).into_inner();
        let s = Matrix3::new(1.2, 0.1, 0.0, 0.1, 0.9, 0.05, 0.0, 0.05, 1.05);
        let got = polar_rotation(&(r * s));
        assert!((got - r).norm() < 1e-12);
    }

    #[test]
    fn identity_is_stress_free() {
        let m = Material::default();
        let (mu, la) = m.lame();
        assert_eq!(von_mises(&cauchy_stress(&Matrix3::identity(), mu, la)), 0.0);
    }

    #[test]
    fn uniaxial_small_strain() {
        // Laterally free: the transverse strain is -nu times the axial one.
        let m = Material::new(1e4, 0.3, 1000.0, 0.4).unwrap();
        let (mu, la) = m.lame();
        let eps = 0.01;
        let f = Matrix3::from_diagonal(&Vector3::new(1.0 - eps, 1.0 + m.poisson * eps, 1.0 + m.poisson * eps));
        let vm = von_mises(&cauchy_stress(&f, mu, la));
        let want = m.young_modulus * eps;
        assert!((vm - want).abs() <= 0.15 * want, "{vm} vs {want}");
    }

    #[test]
    fn rotation_invariant() {
        let m = Material::default();
        let (mu, la) = m.lame();
        let f = Matrix3::new(1.05, 0.02, 0.0, -0.01, 0.97, 0.03, 0.0, 0.01, 1.01);
        let base = von_mises(&cauchy_stress(&f, mu, la));
        for k in 0..10 {
            let r = Rotation3::from_euler_angles(0.3 * k as f64, -0.2 * k as f64, 0.5).into_inner();
            let vm = von_mises(&cauchy_stress(&(r * f), mu, la));
            assert!((vm - base).abs() <= 1e-6 * base);
        }
    }
}
