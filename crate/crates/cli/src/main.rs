use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use secest_core::benchmark::config::ExperimentConfig;
use secest_core::benchmark::montecarlo::{fused_errors, map_replications, replication_seeds, summarize, ErrorStats};
use secest_core::benchmark::output::{write_summary, write_summary_plot, write_trace, write_trace_plot};
use secest_core::benchmark::sim::Experiment;
use secest_core::bounds::compute_n;
use secest_core::observability::{check_sparse_observability, DEFAULT_SUBSET_CAP};
use secest_core::Error;

/// Secure state estimation experiments: single runs, Monte Carlo sweeps and
/// assumption/bound analysis.
#[derive(Debug, Parser)]
#[command(name = "secest", version)]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one seeded run and write its trace and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write whitespace-separated plot data.
        #[arg(long)]
        plot: bool,
    },
    /// Run seeded replications and write per-stamp error statistics.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        /// Base seed; replication r uses seed + r. Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replications: usize,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        /// Give every replication the base seed.
        #[arg(long)]
        same_seed: bool,
        #[arg(long)]
        plot: bool,
    },
    /// Check the modelling assumptions and print the bound constants.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Directory for `analysis.json`; defaults to the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sparsity level to certify; defaults to `run.check_sparsity`, then `2p`.
        #[arg(long)]
        sparsity: Option<usize>,
    },
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config: String,
    config_sha256: String,
    seeds: Vec<u64>,
    out: String,
    tool_version: &'static str,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 1,
        Error::Model(_) | Error::UnobservableState(_) | Error::NoiseAboveBound { .. } | Error::Dimension(_) => 2,
        _ => 3,
    }
}

fn load(path: &Path) -> Result<(ExperimentConfig, String), Error> {
    let bytes = fs::read(path).map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
    let hash = format!("{:x}", Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| Error::config(path.display().to_string(), "not valid UTF-8"))?;
    Ok((ExperimentConfig::from_json_str(&text)?, hash))
}

fn write_manifest(out: &Path, subcommand: &str, config: &Path, hash: String, seeds: Vec<u64>) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    let manifest = RunManifest {
        subcommand,
        config: config.display().to_string(),
        config_sha256: hash,
        seeds,
        out: out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    let file = File::create(out.join("manifest.json"))?;
    serde_json::to_writer_pretty(file, &manifest).map_err(|e| Error::Io(e.into()))?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, plot: bool) -> Result<(), Error> {
    let (cfg, hash) = load(config)?;
    let seed = seed.unwrap_or(cfg.run.seed);
    write_manifest(out, "run", config, hash, vec![seed])?;
    let exp = Experiment::prepare(cfg)?;
    let trace = exp.run(seed)?;
    write_trace(create(out, "trace.csv")?, &exp, &trace)?;
    let stats = ErrorStats::from_samples(&[fused_errors(&trace)])?;
    let rows = summarize(&exp, &stats);
    write_summary(create(out, "summary.csv")?, &rows)?;
    if plot {
        write_trace_plot(create(out, "trace.dat")?, &exp, &trace)?;
    }
    let c = &trace.counters;
    log::info!(
        "{} stamps processed; {} triples consumed, {} late, {} stale, {} duplicate, {} rejected, {} pathological batches",
        trace.records.len() - 1,
        c.consumed,
        c.late,
        c.stale,
        c.duplicate,
        c.rejected_gap + c.rejected_pathological + c.rejected_gain,
        c.pathological_batches
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_montecarlo(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    replications: usize,
    jobs: Option<usize>,
    same_seed: bool,
    plot: bool,
) -> Result<(), Error> {
    let (cfg, hash) = load(config)?;
    if replications < 2 {
        return Err(Error::config("--replications", format!("needs at least 2, got {replications}")));
    }
    if jobs == Some(0) {
        return Err(Error::config("--jobs", "needs at least 1 worker"));
    }
    let base = seed.unwrap_or(cfg.run.seed);
    let seeds = if same_seed { vec![base; replications] } else { replication_seeds(base, replications) };
    write_manifest(out, "montecarlo", config, hash, seeds.clone())?;
    let mut cfg = cfg;
    cfg.run.record_locals = false;
    let exp = Experiment::prepare(cfg)?;
    let samples = map_replications(&exp, &seeds, jobs, |t| fused_errors(&t))?;
    let stats = ErrorStats::from_samples(&samples)?;
    let rows = summarize(&exp, &stats);
    write_summary(create(out, "summary.csv")?, &rows)?;
    if plot {
        write_summary_plot(create(out, "summary.dat")?, &rows)?;
    }
    log::info!("{} replications, {} common stamps", replications, rows.len());
    Ok(())
}

fn cmd_analyze(config: &Path, out: Option<&Path>, sparsity: Option<usize>) -> Result<bool, Error> {
    let (mut cfg, _) = load(config)?;
    let s = sparsity.or(cfg.run.check_sparsity).unwrap_or(2 * cfg.attack.p);
    cfg.run.check_sparsity = None;
    let exp = Experiment::prepare(cfg)?;
    let model = &exp.plant.model;
    let cert = match check_sparse_observability(model, s, DEFAULT_SUBSET_CAP) {
        Ok(c) => Some(c),
        Err(Error::SubsetOverflow { count, cap }) => {
            println!("sparse observability: {s}-sparse check skipped, {count} subsets exceed the cap of {cap}");
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(c) = &cert {
        println!("sparse observability: {c}");
    }
    let periods = model.aliasing_periods();
    if periods.is_empty() {
        println!("pathological intervals: none (no eigenvalue pairs share a real part)");
    } else {
        let mut sorted = periods.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let list: Vec<String> = sorted.iter().take(5).map(|p| format!("{p:.6}")).collect();
        let more = if sorted.len() > 5 { format!(", … ({} distinct periods in analysis.json)", sorted.len()) } else { String::new() };
        println!("pathological intervals: integer multiples of {}{more}", list.join(", "));
    }
    let k = &exp.constants;
    println!("a_bar   = {} (at t = {})", k.a_bar, k.a_bar_at);
    println!("q_bar   = {}", k.q_bar);
    println!("l_bar   = {}", k.l_bar);
    println!("r_bar   = {}", k.r_bar);
    println!("rho_bar = {}", k.rho_bar);
    println!("sigma_0 = {}", k.sigma_0);
    println!("N_1 = {}, N_2 = {} (m = {})", k.n1, k.n2, k.m);
    println!("N_1 = {}, N_2 = {} (largest fusion set, {} sensors)", k.n1_entry, k.n2_entry, k.m_entry);

    let certificate = cert.as_ref().map(|c| {
        json!({
            "s": c.s,
            "observable": c.observable,
            "witness": c.witness.as_ref().map(|w| w.iter().map(|i| i + 1).collect::<Vec<_>>()),
            "lost_eigenvalues": c.lost_eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "subsets_checked": c.subsets_checked.to_string(),
        })
    });
    let report = json!({
        "n": model.n(),
        "m": model.m(),
        "sparsity": s,
        "certificate": certificate,
        "aliasing_periods": periods,
        "fusion_set_sizes": exp.decomposition.raw_fusion_sets().iter().map(|f| f.len()).collect::<Vec<_>>(),
        "constants": k,
        "n1_recomputed": compute_n(k.m as u32, 1),
        "n2_recomputed": compute_n(k.m as u32, 2),
    });
    let dir = out.unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file = File::create(dir.join("analysis.json"))?;
    serde_json::to_writer_pretty(file, &report).map_err(|e| Error::Io(e.into()))?;
    Ok(cert.is_none_or(|c| c.observable))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).init();
    let result = match &cli.command {
        Command::Run { config, seed, out, plot } => cmd_run(config, *seed, out, *plot).map(|_| true),
        Command::Montecarlo { config, seed, out, replications, jobs, same_seed, plot } => {
            cmd_montecarlo(config, *seed, out, *replications, *jobs, *same_seed, *plot).map(|_| true)
        }
        Command::Analyze { config, out, sparsity } => cmd_analyze(config, out.as_deref(), *sparsity),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
