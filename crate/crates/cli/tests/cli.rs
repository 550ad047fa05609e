use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codesign_core::geom::{chamfer, format_mesh, read_mesh, PointCloud};
use codesign_core::ldm::{base_finger, DesignModel, FreezeMask, LdmSpace, RawParamsDoc, DEFAULT_STEPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codesign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small grid and short horizon: rollouts take about a second.
const CHEAP: &str = r#"
[codesign]
envs = 1
candidates = 1
generations = 1
population = 2
[codesign.pose]
generations = 6
[codesign.sim]
resolution = [24, 24, 24]
cell = 0.008
[codesign.plan]
horizon_grasp = 160
"#;

/// `extra` may hold top-level keys and further sections.
fn cheap_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    let (top, sections) = match extra.find('[') {
        Some(i) => extra.split_at(i),
        None => (extra, ""),
    };
    std::fs::write(&p, format!("seed = 3\n{top}\n{CHEAP}\n{sections}")).unwrap();
    p
}

fn space() -> LdmSpace {
    LdmSpace::with_lattice(base_finger(), FreezeMask::below_mount(0.0), 8).unwrap()
}

fn synthetic_docs(dir: &Path, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let sp = space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = sp.zero_params();
    let mut rows = Vec::new();
    for i in 0..n {
        let p: Vec<f64> = zero.iter().map(|z| z + rng.random_range(-0.004..0.004)).collect();
        RawParamsDoc { space: sp.clone(), params: p.clone(), initial_chamfer: None, final_chamfer: None }
            .save(dir.join(format!("p{i:03}.json")))
            .unwrap();
        rows.push(p);
    }
    rows
}

#[test]
fn dry_run_prints_resolved_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = cheap_config(d.path(), "");
    let o = run(&["--config", s(&cfg), "--dry-run", "codesign"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("envs = 1"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn config_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let cfg = cheap_config(d.path(), "typo = 1\n[codesign.contexts]\nwobble = 2\n");
    let o = run(&["--config", s(&cfg), "--dry-run", "codesign"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("typo") && e.contains("codesign.contexts.wobble"), "{e}");
    let o = run(&["--config", "/nonexistent/run.toml", "codesign"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/run.toml"));
}

#[test]
fn fit_identity_and_missing_file() {
    let d = tempfile::tempdir().unwrap();
    let base = d.path().join("base.obj");
    std::fs::write(&base, format_mesh(&base_finger())).unwrap();
    let cfg = cheap_config(d.path(), "");
    let out = d.path().join("fit.json");
    let o = run(&["--config", s(&cfg), "fit", "--target", s(&base), "--out", s(&out), "--budget", "20"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = RawParamsDoc::load(&out).unwrap();
    assert!(doc.final_chamfer.unwrap() <= 1e-6);
    let log = std::fs::read_to_string(out.with_extension("fit.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);

    let missing = d.path().join("nope.obj");
    let o = run(&["fit", "--target", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.obj"));
}

#[test]
fn fit_synthetic_target() {
    let d = tempfile::tempdir().unwrap();
    // Generated by known parameters of the space the fit searches.
    let sp = LdmSpace::with_lattice(base_finger(), FreezeMask::below_mount(0.0), DEFAULT_STEPS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let known: Vec<f64> = sp.zero_params().iter().map(|z| z + rng.random_range(-0.01..0.01)).collect();
    let target = sp.deform_mesh(&known).unwrap();
    let tpath = d.path().join("target.obj");
    std::fs::write(&tpath, format_mesh(&target)).unwrap();
    let cfg = cheap_config(d.path(), "[fit]\nsamples = 1024\n");
    let out = d.path().join("fit.json");
    let o = run(&["--config", s(&cfg), "fit", "--target", s(&tpath), "--out", s(&out), "--budget", "400"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = RawParamsDoc::load(&out).unwrap();
    let (i, f) = (doc.initial_chamfer.unwrap(), doc.final_chamfer.unwrap());
    assert!(f <= 0.05 * i, "initial {i:e} final {f:e}");
}

#[test]
fn build_latent_and_decode() {
    let d = tempfile::tempdir().unwrap();
    let params = d.path().join("params");
    std::fs::create_dir(&params).unwrap();
    let rows = synthetic_docs(&params, 50, 11);
    let model_path = d.path().join("model.json");
    let o = run(&["build-latent", "--params-dir", s(&params), "--latent-dim", "15", "--out", s(&model_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = DesignModel::load(&model_path).unwrap();
    assert_eq!(model.latent_dim(), 15);

    // decode(0) is the dataset mean.
    let zeros = vec!["0"; 15].join(",");
    let mesh_path = d.path().join("mean.obj");
    let o = run(&["decode", "--model", s(&model_path), "--z", &zeros, "--out", s(&mesh_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mean_mesh = read_mesh(&mesh_path).unwrap();
    let want = model.space.deform_mesh(&model.latent.mean).unwrap();
    let err = mean_mesh.vertices().iter().zip(want.vertices()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");

    // A training row's code decodes to (nearly) that row's shape.
    let z = model.latent.encode(&rows[4]).unwrap();
    let zs: Vec<String> = z.iter().map(|v| format!("{v:e}")).collect();
    let o = run(&["decode", "--model", s(&model_path), "--z", &zs.join(","), "--out", s(&mesh_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let got = read_mesh(&mesh_path).unwrap();
    let row_mesh = model.space.deform_mesh(&model.latent.decode(&z).unwrap()).unwrap();
    let c = chamfer(&PointCloud::new(got.vertices().to_vec()), &PointCloud::new(row_mesh.vertices().to_vec())).unwrap();
    assert!(c <= 1e-6, "{c}");

    let o = run(&["decode", "--model", s(&model_path), "--z", "0,abc", "--out", s(&mesh_path)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn rank_deficient_latent_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let sp = space();
    for i in 0..3 {
        RawParamsDoc { space: sp.clone(), params: sp.zero_params(), initial_chamfer: None, final_chamfer: None }
            .save(d.path().join(format!("same{i}.json")))
            .unwrap();
    }
    let o = run(&["build-latent", "--params-dir", s(d.path()), "--latent-dim", "1", "--out", s(&d.path().join("m.out"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn rollout_primitive_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = cheap_config(d.path(), "");
    let mut records = Vec::new();
    for sub in ["a", "b"] {
        let out = d.path().join(sub);
        let o = run(&["--config", s(&cfg), "--out-dir", s(&out), "rollout", "--primitive", "cubic:0.02"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        records.push(std::fs::read(out.join("rollout.jsonl")).unwrap());
    }
    assert!(!records[0].is_empty());
    assert_eq!(records[0], records[1]);

    let o = run(&["--config", s(&cfg), "rollout", "--primitive", "hexagon:0.02"]);
    assert_eq!(code(&o), 1);
    let o = run(&["--config", s(&cfg), "rollout", "--primitive", "cubic:0.02", "--mesh", "x.obj"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn baseline_and_codesign_reports_share_schema() {
    let d = tempfile::tempdir().unwrap();
    let params = d.path().join("params");
    std::fs::create_dir(&params).unwrap();
    synthetic_docs(&params, 12, 2);
    let model = d.path().join("model.json");
    let o = run(&["build-latent", "--params-dir", s(&params), "--latent-dim", "4", "--out", s(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = cheap_config(d.path(), "model = \"model.json\"\n");

    let o = run(&["--config", s(&cfg), "baseline", "--space", "spherical", "--params", "0.5"]);
    assert_eq!(code(&o), 1);

    let o = run(&["--config", s(&cfg), "baseline", "--space", "cubic"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let base: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/baseline_cubic.json")).unwrap()).unwrap();
    assert_eq!(base["generations"][0]["candidates"].as_array().unwrap().len(), 8);

    let o = run(&["--config", s(&cfg), "codesign"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = d.path().join("out");
    let first = std::fs::read(out.join("codesign_report.json")).unwrap();
    assert!(out.join("best_design.obj").is_file());
    assert_eq!(std::fs::read_to_string(out.join("generations.jsonl")).unwrap().lines().count(), 1);
    let rep: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let keys = |v: &serde_json::Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&rep), keys(&base));
    assert_eq!(rep["config"]["seed"], 3);

    let o = run(&["--config", s(&cfg), "codesign"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(out.join("codesign_report.json")).unwrap(), first);
}
