use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use codesign_core::codesign::{
    baseline_sweep, codesign_run, env_seed, evaluate_env, propose_poses, CodesignReport, GenerationReport,
};
use codesign_core::geom::{read_mesh, surface_sample, surface_sample_transported, write_mesh, TriMesh};
use codesign_core::gripper::Gripper;
use codesign_core::ldm::{
    base_finger, fit_deformation_with, primitive_design, DesignModel, DesignVector, FreezeMask, LdmSpace,
    PrimitiveKind, RawParamsDoc, DEFAULT_STEPS,
};
use codesign_core::seed::{derive, tag};
use serde_json::json;

use crate::config::{default_sweep, RunConfig};
use crate::error::CliError;
use crate::DesignSource;

fn read_mesh_at(path: &Path) -> Result<TriMesh, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    read_mesh(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn load_model(cfg: &RunConfig, explicit: Option<&Path>) -> Result<DesignModel, CliError> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.model.clone())
        .ok_or_else(|| CliError::Usage("a design model is required (--model or `model` in the config)".into()))?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    DesignModel::load(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_z(text: &str) -> Result<Vec<f64>, CliError> {
    text.parse::<DesignVector>().map(|v| v.0).map_err(|e| CliError::Usage(format!("malformed latent vector: {e}")))
}

fn design_mesh(cfg: &RunConfig, src: &DesignSource) -> Result<(TriMesh, serde_json::Value), CliError> {
    let given = [src.z.is_some(), src.mesh.is_some(), src.primitive.is_some()].iter().filter(|b| **b).count();
    if given != 1 {
        return Err(CliError::Usage("give exactly one of --z, --mesh or --primitive".into()));
    }
    if let Some(z) = &src.z {
        let model = load_model(cfg, src.model.as_deref())?;
        let z = parse_z(z)?;
        if z.len() != model.latent_dim() {
            return Err(CliError::Usage(format!("latent vector has {} entries, model expects {}", z.len(), model.latent_dim())));
        }
        return Ok((model.decode_mesh(&z)?, json!({ "latent": z })));
    }
    if let Some(p) = &src.mesh {
        return Ok((read_mesh_at(p)?, json!({ "mesh": p.display().to_string() })));
    }
    let spec = src.primitive.as_deref().unwrap_or_default();
    let (kind, param) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("primitive `{spec}` must look like cubic:0.03")))?;
    let kind: PrimitiveKind = kind.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    let param: f64 = param.parse().map_err(|e| CliError::Usage(format!("primitive size `{param}`: {e}")))?;
    Ok((primitive_design(kind, param)?, json!({ "primitive": kind, "param": param })))
}

fn gripper_of(mesh: TriMesh) -> Result<Gripper, CliError> {
    Gripper::new(mesh).map_err(|e| CliError::Usage(format!("invalid design: {e}")))
}

pub fn fit(
    cfg: &RunConfig,
    target: &Path,
    out: &Path,
    base: Option<&Path>,
    budget: Option<usize>,
    mount_z: f64,
) -> Result<(), CliError> {
    let base = match base {
        Some(p) => read_mesh_at(p)?,
        None => base_finger(),
    };
    let target = read_mesh_at(target)?;
    let space = LdmSpace::with_lattice(base, FreezeMask::below_mount(mount_z), DEFAULT_STEPS)?;
    let mut fit_cfg = cfg.fit.clone();
    if let Some(b) = budget {
        fit_cfg.budget = b;
    }
    let sample_seed = derive(cfg.seed, &[tag("fit")]);
    // Same sampling stream as the base samples inside the fit; a target that
    // shares the base's faces is sampled at the same surface coordinates.
    let n = fit_cfg.samples.max(1);
    let cloud = if target.faces() == space.base.faces() && target.vertices().len() == space.base.vertices().len() {
        surface_sample_transported(&space.base, &target, n, sample_seed)?
    } else {
        surface_sample(&target, n, sample_seed)?
    };
    let r = fit_deformation_with(&space, &cloud, &fit_cfg, None, sample_seed)?;
    if !r.final_chamfer.is_finite() {
        return Err(CliError::Numerical("fit produced a non-finite Chamfer distance".into()));
    }
    log::info!("fit: chamfer {:.3e} -> {:.3e} in {} iterations", r.initial_chamfer, r.final_chamfer, r.iterations);
    let doc = RawParamsDoc {
        space,
        params: r.params.clone(),
        initial_chamfer: Some(r.initial_chamfer),
        final_chamfer: Some(r.final_chamfer),
    };
    write_text(out, &serde_json::to_string_pretty(&doc)?)?;
    let mut log_text = String::new();
    for (i, c) in r.best_history.iter().enumerate() {
        log_text.push_str(&json!({ "iteration": i + 1, "chamfer": c }).to_string());
        log_text.push('\n');
    }
    write_text(&out.with_extension("fit.jsonl"), &log_text)
}

pub fn build_latent(dir: &Path, latent_dim: usize, out: &Path) -> Result<(), CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("{}: no parameter files (*.json)", dir.display())));
    }
    let docs = files
        .iter()
        .map(|p| RawParamsDoc::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let model = DesignModel::from_docs(&docs, latent_dim)?;
    write_text(out, &serde_json::to_string(&model)?)
}

pub fn decode(cfg: &RunConfig, model: Option<&Path>, z: &str, out: &Path) -> Result<(), CliError> {
    let z = parse_z(z)?;
    let model = load_model(cfg, model)?;
    if z.len() != model.latent_dim() {
        return Err(CliError::Usage(format!("latent vector has {} entries, model expects {}", z.len(), model.latent_dim())));
    }
    let mesh = model.decode_mesh(&z)?;
    write_mesh(out, &mesh).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))
}

pub fn pose_opt(cfg: &RunConfig, src: &DesignSource) -> Result<(), CliError> {
    let (mesh, design) = design_mesh(cfg, src)?;
    let gripper = gripper_of(mesh)?;
    let (ctx, cands) = propose_poses(&gripper, &cfg.codesign, env_seed(cfg.seed, 0, 0, 0))?;
    let cands = cands.map_err(CliError::Numerical)?;
    let doc = json!({
        "version": codesign_core::codesign::VERSION,
        "config": cfg.echo(),
        "design": design,
        "context": ctx,
        "candidates": cands,
    });
    write_text(&out_path(cfg, "pose_candidates.json"), &serde_json::to_string_pretty(&doc)?)
}

pub fn rollout(cfg: &RunConfig, src: &DesignSource) -> Result<(), CliError> {
    let (mesh, design) = design_mesh(cfg, src)?;
    let gripper = gripper_of(mesh)?;
    let outcome = evaluate_env(&gripper, &cfg.codesign, env_seed(cfg.seed, 0, 0, 0))?;
    if let Some(rec) = &outcome.record {
        write_text(&out_path(cfg, "rollout.jsonl"), &rec.to_jsonl()?)?;
    }
    let doc = json!({
        "version": codesign_core::codesign::VERSION,
        "config": cfg.echo(),
        "design": design,
        "context": outcome.context,
        "pose": outcome.pose,
        "components": outcome.components,
        "termination": outcome.record.as_ref().map(|r| &r.termination),
    });
    write_text(&out_path(cfg, "rollout_summary.json"), &serde_json::to_string_pretty(&doc)?)?;
    match &outcome.record {
        None => Err(CliError::Numerical("environment could not be evaluated (floored)".into())),
        Some(r) if r.is_blowup() => Err(CliError::Numerical("simulation blew up".into())),
        Some(_) => Ok(()),
    }
}

pub fn baseline(cfg: &RunConfig, space: Option<&str>, params: Option<&str>) -> Result<(), CliError> {
    let kind = match space {
        Some(s) => s.parse::<PrimitiveKind>().map_err(|e| CliError::Usage(e.to_string()))?,
        None => cfg.baseline.space,
    };
    let params = match params {
        Some(p) => parse_z(p)?,
        None => cfg.baseline.params.clone().unwrap_or_else(|| default_sweep(kind)),
    };
    if params.is_empty() {
        return Err(CliError::Usage("empty baseline sweep".into()));
    }
    // Reject out-of-range sizes before any simulation.
    for &p in &params {
        primitive_design(kind, p)?;
    }
    let report = baseline_sweep(&cfg.codesign, kind, &params, cfg.echo())?;
    let name = match kind {
        PrimitiveKind::Cubic => "baseline_cubic.json",
        PrimitiveKind::Spherical => "baseline_spherical.json",
    };
    write_text(&out_path(cfg, name), &report.to_json()?)
}

fn unix_time() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Runs the co-design loop and writes the report, the best mesh, one JSON
/// line per generation and a timestamped progress log.
pub fn run_codesign(cfg: &RunConfig, model: &DesignModel) -> Result<CodesignReport, CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Usage(format!("{}: {e}", cfg.out_dir.display())))?;
    let open = |name: &str| {
        let p = out_path(cfg, name);
        fs::File::create(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
    };
    let mut stream = open("generations.jsonl")?;
    let mut progress = open("progress.log")?;
    let start = unix_time();
    let _ = writeln!(progress, "{:.3} start", start);
    let mut io_err = None;
    let report = codesign_run(&cfg.codesign, &model.latent, &model.space, cfg.echo(), |g: &GenerationReport| {
        let line = serde_json::to_string(g).expect("generation serializes");
        let now = unix_time();
        let r = writeln!(stream, "{line}").and_then(|_| {
            writeln!(progress, "{now:.3} generation {} best_j {:.6} elapsed {:.1}s", g.generation, g.best_j, now - start)
        });
        if let Err(e) = r {
            io_err.get_or_insert(e);
        }
        log::info!("generation {}: mean J {:.4}, best J {:.4}", g.generation, g.mean_j, g.best_j);
    })?;
    if let Some(e) = io_err {
        return Err(CliError::Usage(format!("writing progress: {e}")));
    }
    let _ = writeln!(progress, "{:.3} done, wall {:.1}s", unix_time(), unix_time() - start);
    write_text(&out_path(cfg, "codesign_report.json"), &report.to_json()?)?;
    let best = model.decode_mesh(&report.best_design)?;
    write_mesh(out_path(cfg, "best_design.obj"), &best).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(report)
}

pub fn codesign(cfg: &RunConfig) -> Result<(), CliError> {
    let model = load_model(cfg, None)?;
    run_codesign(cfg, &model).map(|_| ())
}
