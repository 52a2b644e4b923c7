//! Command-line runner: `run`, `centroids` and `eval`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::algorithms::run_experiment;
use crate::archive_io::{load_archive, save_archive, write_atomic, Archive};
use crate::config::parse_config;
use crate::containers::compute_cvt_centroids;
use crate::error::{QdError, Result};
use crate::exec::Executor;
use crate::metrics::{
    compute_metrics, compute_mome_metrics, compute_population_metrics, format_real, MetricsCsv, QdMetrics,
};
use crate::rng::RngStream;
use crate::types::Bounds;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Debug, Parser)]
#[command(name = "qdlab", version, about = "Quality-diversity experiment runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write metrics, archive and resolved config.
    Run(RunArgs),
    /// Precompute CVT centroids.
    Centroids(CentroidArgs),
    /// Print QD metrics of an archive file as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CentroidArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long = "d-dims", default_value_t = 2)]
    pub d_dims: usize,
    /// Lower bound per axis (repeat or give once for all axes).
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub lower: Vec<f64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub upper: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "n-samples", default_value_t = crate::containers::CVT_DEFAULT_SAMPLES)]
    pub n_samples: usize,
    #[arg(long = "lloyd-iters", default_value_t = crate::containers::CVT_DEFAULT_LLOYD_ITERS)]
    pub lloyd_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long = "qd-offset", default_value_t = 0.0, allow_negative_numbers = true)]
    pub qd_offset: f64,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => run_command(&a),
        Command::Centroids(a) => centroids_command(&a),
        Command::Eval(a) => {
            let line = eval_command(&a.archive, a.qd_offset)?;
            println!("{line}");
            Ok(())
        }
    }
}

/// Everything is validated before the output directory is touched. The
/// metrics file is rewritten from scratch; the archive is written atomically
/// at the end.
pub fn run_command(args: &RunArgs) -> Result<()> {
    let mut config = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(QdError::Validation("--workers must be at least 1".into()));
        }
        config.workers = w;
    }
    let base_dir = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let executor = Executor::new(config.workers)?;
    fs::create_dir_all(&args.out)?;
    let metrics_path = args.out.join(&config.logging.metrics_path);
    let archive_path = args.out.join(&config.logging.archive_path);
    let snapshot = serde_json::to_string_pretty(&config).expect("config serializes");
    write_atomic(&args.out.join(RESOLVED_CONFIG_FILE), format!("{snapshot}\n").as_bytes())?;

    let file = fs::File::create(&metrics_path)?;
    let mut csv = MetricsCsv::new(BufWriter::new(file), false, config.logging.record_wall_time);
    let log_every = config.logging.log_every;
    let archive = run_experiment(&config, &base_dir, &executor, &mut |r| {
        csv.append(r)?;
        if r.iteration % log_every == 0 {
            eprintln!(
                "iter {} evals {} qd_score {} coverage {} max_fitness {}",
                r.iteration,
                r.evaluations,
                format_real(r.qd_score),
                format_real(r.coverage),
                r.max_fitness.map(format_real).unwrap_or_else(|| "-".into())
            );
        }
        Ok(())
    })?;
    csv.flush()?;
    save_archive(&archive, &archive_path)
}

pub fn centroids_command(args: &CentroidArgs) -> Result<()> {
    if args.k == 0 {
        return Err(QdError::InvalidArgument("k must be at least 1".into()));
    }
    if args.d_dims == 0 {
        return Err(QdError::InvalidArgument("d-dims must be at least 1".into()));
    }
    let expand = |v: &[f64], default: f64| -> Result<Vec<f64>> {
        match v.len() {
            0 => Ok(vec![default; args.d_dims]),
            1 => Ok(vec![v[0]; args.d_dims]),
            n if n == args.d_dims => Ok(v.to_vec()),
            n => Err(QdError::InvalidArgument(format!(
                "expected 1 or {} bound values, got {n}",
                args.d_dims
            ))),
        }
    };
    let bounds = Bounds::new(expand(&args.lower, 0.0)?, expand(&args.upper, 1.0)?);
    let mut rng = RngStream::new(args.seed);
    let spec = compute_cvt_centroids(args.k, &bounds, args.n_samples, args.lloyd_iters, &mut rng)?;
    let json = serde_json::to_string(&spec).expect("centroids serialize");
    write_atomic(&args.out, format!("{json}\n").as_bytes())
}

fn metrics_json(m: &QdMetrics) -> String {
    format!(
        "{{\"qd_score\":{},\"coverage\":{},\"max_fitness\":{}}}",
        format_real(m.qd_score),
        format_real(m.coverage),
        m.max_fitness.map(format_real).unwrap_or_else(|| "null".into())
    )
}

/// One-line JSON metrics of an archive file. `qd_offset` only applies to
/// single-objective archives.
pub fn eval_command(path: &Path, qd_offset: f64) -> Result<String> {
    let m = match load_archive(path)? {
        Archive::Elites(r) => compute_metrics(&r, qd_offset),
        Archive::Fronts(r) => compute_mome_metrics(&r)?,
        Archive::Population(p) => {
            let objs: Vec<&[f64]> = p.members.iter().map(|m| m.objectives.as_slice()).collect();
            compute_population_metrics(&objs, &p.reference)?
        }
    };
    Ok(metrics_json(&m))
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
