use codesign_core::geom::{chamfer, surface_sample, PointCloud, Vec3};
use codesign_core::ldm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, lo: Vec3, hi: Vec3) -> Vec3 {
    Vec3::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y), rng.random_range(lo.z..hi.z))
}

/// K = 3 kernels, 50 points, 4 RK4 steps, some points in the blend band.
fn small_instance(seed: u64) -> (LdmSpace, Vec<f64>, Vec<Vec3>, Vec<Vec3>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = Vec3::new(-0.01, -0.01, -0.04);
    let hi = Vec3::new(0.01, 0.01, 0.004);
    let centers = (0..3).map(|_| rand_vec(&mut rng, lo, hi)).collect();
    let space = LdmSpace::new(base_finger(), FreezeMask::below_mount(0.0), centers, 4).unwrap();
    let raw: Vec<f64> = (0..3)
        .flat_map(|_| {
            let w = rand_vec(&mut rng, Vec3::repeat(-0.03), Vec3::repeat(0.03));
            let s = softplus_inv(rng.random_range(0.006..0.025));
            [w.x, w.y, w.z, s]
        })
        .collect();
    let pts = (0..50).map(|_| rand_vec(&mut rng, lo, hi)).collect();
    let tgt = (0..50).map(|_| rand_vec(&mut rng, lo, hi)).collect();
    (space, raw, pts, tgt)
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (space, raw, pts, tgt) = small_instance(seed);
        let (_, g) = chamfer_value_and_gradient(&space, &raw, &pts, &tgt).unwrap();
        for i in 0..raw.len() {
            let mut p = raw.clone();
            p[i] += h;
            let fp = chamfer_value(&space, &p, &pts, &tgt).unwrap();
            p[i] -= 2.0 * h;
            let fm = chamfer_value(&space, &p, &pts, &tgt).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "seed {seed} coord {i}: analytic {} fd {fd}", g[i]);
        }
    }
    eprintln!("worst relative gradient error {worst:e}");
}

#[test]
fn zero_params_on_own_samples_is_stationary() {
    let space = LdmSpace::with_lattice(base_finger(), FreezeMask::below_mount(0.0), 16).unwrap();
    let pts = surface_sample(&space.base, 500, 1).unwrap().points;
    let (v, g) = chamfer_value_and_gradient(&space, &space.zero_params(), &pts, &pts).unwrap();
    assert_eq!(v, 0.0);
    let wn: f64 = g.chunks(4).map(|c| c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sum::<f64>().sqrt();
    assert!(wn <= 1e-8);
}

#[test]
fn chamfer_value_scales_quadratically() {
    let a: Vec<Vec3> = (0..30).map(|i| Vec3::new(i as f64 * 0.01, (i % 7) as f64 * 0.003, 0.0)).collect();
    let b: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.013, 0.01, (i % 3) as f64 * 0.002)).collect();
    let c1 = chamfer(&PointCloud::new(a.clone()), &PointCloud::new(b.clone())).unwrap();
    let c2 = chamfer(
        &PointCloud::new(a.iter().map(|p| p * 2.0).collect()),
        &PointCloud::new(b.iter().map(|p| p * 2.0).collect()),
    )
    .unwrap();
    assert!((c2 - 4.0 * c1).abs() <= 1e-12 * c2);
}

#[test]
fn deform_zero_is_identity_and_topology_kept() {
    let base = base_finger();
    let mask = FreezeMask::below_mount(0.0);
    let space = LdmSpace::with_lattice(base.clone(), mask, DEFAULT_STEPS).unwrap();
    let same = deform_mesh(&space.zero_params(), &base, mask, DEFAULT_STEPS).unwrap();
    assert_eq!(same, base);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let raw: Vec<f64> = space.zero_params().iter().map(|p| p + rng.random_range(-0.02..0.02)).collect();
    let d = space.deform_mesh(&raw).unwrap();
    assert_eq!(d.faces(), base.faces());
    for (a, b) in d.vertices().iter().zip(base.vertices()) {
        if b.z >= mask.z_hi {
            assert_eq!(a, b);
        }
    }
    // Backward flow with the negated field returns close to the start.
    let neg: Vec<f64> = raw.chunks(4).flat_map(|c| [-c[0], -c[1], -c[2], c[3]]).collect();
    let back = space.deform_points(&neg, d.vertices()).unwrap();
    let diag = base.bounds().unwrap().diagonal();
    for (a, b) in back.iter().zip(base.vertices()) {
        assert!((a - b).norm() <= 1e-3 * diag);
    }
}

#[test]
fn fit_identity_target() {
    let base = base_finger();
    let mask = FreezeMask::below_mount(0.0);
    let space = LdmSpace::with_lattice(base.clone(), mask, 8).unwrap();
    let target = surface_sample(&base, 1024, 5).unwrap();
    let cfg = FitConfig { samples: 1024, budget: 60, ..FitConfig::default() };
    let r = fit_deformation_with(&space, &target, &cfg, None, 5).unwrap();
    assert!(r.final_chamfer <= r.initial_chamfer);
    assert!(r.best_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.final_chamfer <= 1e-6, "{}", r.final_chamfer);
}
