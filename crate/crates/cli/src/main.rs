//! `codesign` command-line tool.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "codesign", version, about = "Latent end-effector co-design")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: host core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Validate the configuration and print the resolved values only.
    #[arg(long, global = true)]
    dry_run: bool,
}

/// Where a design comes from: exactly one of the three.
#[derive(Args, Debug, Clone)]
pub struct DesignSource {
    /// Comma-separated latent vector (needs a model).
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    /// Finger mesh file.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Primitive finger, `cubic:<side>` or `spherical:<radius>`.
    #[arg(long)]
    primitive: Option<String>,
    /// Design model file; falls back to the configured one.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit deformation parameters of the base finger to a target mesh.
    Fit {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Base mesh; the built-in finger slab when omitted.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        /// Height of the mount plane of the base mesh.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mount_z: f64,
    },
    /// PCA latent model from a directory of fitted parameter files.
    BuildLatent {
        #[arg(long)]
        params_dir: PathBuf,
        #[arg(long)]
        latent_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a latent vector to a finger mesh.
    Decode {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        z: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-contact pose search for one sampled context.
    PoseOpt {
        #[command(flatten)]
        design: DesignSource,
    },
    /// Pose search plus soft-body rollouts in one sampled context.
    Rollout {
        #[command(flatten)]
        design: DesignSource,
    },
    /// Grid evaluation of primitive designs.
    Baseline {
        /// `cubic` or `spherical`; overrides the configured space.
        #[arg(long)]
        space: Option<String>,
        /// Comma-separated sizes; overrides the configured sweep.
        #[arg(long)]
        params: Option<String>,
    },
    /// Bi-level co-design over the latent design space.
    Codesign,
}

fn resolve(g: &GlobalOpts) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.resolve()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.global)?;
    if cli.global.dry_run {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit { target, out, base, budget, mount_z } => {
            commands::fit(&cfg, &target, &out, base.as_deref(), budget, mount_z)
        }
        Command::BuildLatent { params_dir, latent_dim, out } => commands::build_latent(&params_dir, latent_dim, &out),
        Command::Decode { model, z, out } => commands::decode(&cfg, model.as_deref(), &z, &out),
        Command::PoseOpt { design } => commands::pose_opt(&cfg, &design),
        Command::Rollout { design } => commands::rollout(&cfg, &design),
        Command::Baseline { space, params } => commands::baseline(&cfg, space.as_deref(), params.as_deref()),
        Command::Codesign => commands::codesign(&cfg),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CODESIGN_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
