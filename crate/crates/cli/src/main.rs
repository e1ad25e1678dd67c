use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use eitlab::argument_principle::{reconstruct, ReconstructedCloud};
use eitlab::experiments::{
    emit_outputs, perturbed_dn, reference_immersion, run_sweep, surface_dn, ExperimentConfig, ExperimentError,
};
use eitlab::geometry_metrics::{fill_distance, hausdorff, PointCloud};
use eitlab::holomorphic_structure::{estimate_kappa, TraceTuple};
use eitlab::{BoundaryOperator, OperatorKind};

/// DN maps of bordered surfaces and reconstruction of holomorphic immersions.
#[derive(Parser)]
#[command(name = "eitlab", version)]
struct Cli {
    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a perturbation sweep and write sweep.csv, summary.json, clouds and plot data.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to the config's output_dir, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the DN operator of the base surface, or of a perturbed one.
    Dn {
        #[command(flatten)]
        common: Common,
        /// Perturbation parameter; omit for the base surface.
        #[arg(long)]
        parameter: Option<f64>,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the image cloud of an immersion given by its boundary traces.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Trace tuple JSON; built from the config recipes when omitted.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Also write the trace tuple used.
        #[arg(long)]
        dump_traces: Option<PathBuf>,
        /// Output CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hausdorff distance between two cloud CSV files.
    Hausdorff {
        a: PathBuf,
        b: PathBuf,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate kappa = 1 - chi from a DN operator.
    Kappa {
        /// DN operator JSON as written by `dn`.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        dn: Option<PathBuf>,
        /// Experiment config whose base surface is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = eitlab::holomorphic_structure::TAU_RANK)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Marks an error as caused by the input rather than the numerics.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return if e.is_config() { 2 } else { 3 };
        }
        if cause.is::<InputError>() || cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    3
}

fn load_config(common: &Common, full: bool) -> Result<ExperimentConfig> {
    let mut cfg = if full {
        ExperimentConfig::load(&common.config)
    } else {
        ExperimentConfig::load_surface(&common.config)
    }
    .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(bytes).context("writing stdout"),
    }
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let cloud = ReconstructedCloud::read_csv(file).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    PointCloud::new(2 * cloud.dim(), &cloud.real_points()).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Sweep { common, out } => {
            let cfg = load_config(&common, true)?;
            let dir = out.or_else(|| cfg.output_dir.clone().map(PathBuf::from)).unwrap_or_else(|| "out".into());
            let outcome = run_sweep(&cfg, |r| {
                if verbose {
                    match &r.reason {
                        None => eprintln!("s={:.4e} t={:.3e} d_h={:.3e} ({:.2}s)", r.parameter, r.t, r.d_h_interior, r.wall_time),
                        Some(why) => eprintln!("s={:.4e} invalid: {why}", r.parameter),
                    }
                }
            })?;
            emit_outputs(&outcome, &dir)?;
            if verbose {
                eprintln!("wrote {}", dir.display());
            }
        }
        Command::Dn { common, parameter, out } => {
            let op = match parameter {
                Some(s) => perturbed_dn(&load_config(&common, true)?, s)?,
                None => {
                    let cfg = load_config(&common, false)?;
                    surface_dn(&cfg.base_surface, cfg.n_modes, None)?
                }
            };
            emit_json(out.as_deref(), &op.to_json())?;
        }
        Command::Reconstruct { common, traces, dump_traces, out } => {
            let cfg = load_config(&common, true)?;
            let (tuple, kappa) = match &traces {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let value: serde_json::Value = serde_json::from_str(&text)?;
                    let t = TraceTuple::from_json(&value).map_err(|e| input_err(format!("{}: {e}", p.display())))?;
                    let k = value["metadata"]["kappa"].as_u64().unwrap_or(0) as usize;
                    (t, k)
                }
                None => {
                    let r = reference_immersion(&cfg)?;
                    (r.immersion, r.kappa)
                }
            };
            if let Some(p) = &dump_traces {
                emit_json(Some(p), &tuple.to_json(kappa, Some(cfg.seed)))?;
            }
            let cloud = reconstruct(&tuple, cfg.epsilon, cfg.grid_resolution).map_err(ExperimentError::from)?;
            if verbose {
                let d = &cloud.diagnostics;
                eprintln!("{} points, {} candidates, {} merged", cloud.points.len(), d.candidates, d.merged);
            }
            let mut buf = Vec::new();
            cloud.write_csv(&mut buf).map_err(ExperimentError::from)?;
            emit(out.as_deref(), &buf)?;
        }
        Command::Hausdorff { a, b, out } => {
            let (ca, cb) = (read_cloud(&a)?, read_cloud(&b)?);
            let r = hausdorff(&ca, &cb).map_err(|e| input_err(e.to_string()))?;
            emit_json(out.as_deref(), &r.to_json(fill_distance(&ca), fill_distance(&cb)))?;
        }
        Command::Kappa { dn, config, tau, out } => {
            if !(tau > 0.0) {
                return Err(input_err("--tau must be positive"));
            }
            let op = match (dn, config) {
                (Some(p), _) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let value: serde_json::Value = serde_json::from_str(&text)?;
                    BoundaryOperator::from_json(&value, OperatorKind::Dn).map_err(|e| input_err(format!("{}: {e}", p.display())))?
                }
                (None, Some(c)) => {
                    let cfg = load_config(&Common { config: c, seed: None }, false)?;
                    surface_dn(&cfg.base_surface, cfg.n_modes, None)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let est = estimate_kappa(&op, tau)?;
            emit_json(out.as_deref(), &serde_json::to_value(&est)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
