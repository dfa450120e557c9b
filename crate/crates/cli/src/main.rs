use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use calibre_core::calibrate::CalibrationReport;
use calibre_core::config::{Ablation, PipelineConfig};
use calibre_core::io;
use calibre_core::lof;
use calibre_core::metrics::{self, SplitRule};
use calibre_core::pipeline::{self, calibrate_dataset};
use calibre_core::sample::{self, BalanceTarget};
use calibre_core::simulate::{self, CorruptionReport, TransitionMatrix};
use calibre_core::theory::{self, TheoryConfig};
use calibre_core::train::{self, ProbeModel, TrainConfig};
use calibre_core::{seeded_rng, CalibrationConfig, CorruptionSpec, GroundTruthModel};

#[derive(Parser)]
#[command(
    name = "calibre",
    version,
    about = "Robust class statistics for noisy long-tailed embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subsample to a long tail and inject label noise.
    Simulate(SimulateArgs),
    /// LOF-filter each class, estimate Gaussians and calibrate tail classes.
    Calibrate(CalibrateArgs),
    /// Rebalance a dataset with draws from calibrated class Gaussians.
    Sample(SampleArgs),
    /// Train the anchored linear probe.
    Train(TrainArgs),
    /// Score a probe on clean-labelled test data.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo checks of the estimation-error behaviour.
    VerifyTheory(TheoryArgs),
    /// Full pipeline from a JSON config.
    Run(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Input embeddings; omit to generate Gaussian data with --synthetic.
    #[arg(long = "in", required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// `dim,classes,per_class[,mean_scale]` for isotropic Gaussian classes.
    #[arg(long, conflicts_with = "input")]
    synthetic: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Imbalance ratio; 1 keeps class sizes.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Calibration settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lof_k: Option<usize>,
    #[arg(long)]
    lof_threshold: Option<f64>,
    /// Write per-point LOF scores as CSV.
    #[arg(long)]
    dump_lof: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Calibration report written by `calibrate`.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `max` or a per-class count.
    #[arg(long, default_value = "max")]
    target: BalanceTarget,
    /// Synthetic-point mask; defaults to `<out>.mask.csv`.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Synthetic-point mask from `sample`; without it every point is
    /// anchored to itself.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Training settings as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Split rule as JSON, e.g. `{"rule":"thresholds","many_above":100,"few_below":20}`.
    #[arg(long)]
    split: Option<String>,
    /// Also write the metrics here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated components to remove: cl-anchor, dc, mixup, reg, all.
    #[arg(long)]
    ablate: Option<String>,
    #[arg(long)]
    dump_lof: bool,
}

#[derive(Serialize)]
struct SimulateSidecar<'a> {
    report: &'a CorruptionReport,
    transition: &'a TransitionMatrix,
    clean_labels: &'a [usize],
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let root = seeded_rng(a.seed, "simulate");
    let data = match (&a.input, &a.synthetic) {
        (Some(p), _) => io::load_embeddings(p)?,
        (None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
            if !(3..=4).contains(&parts.len()) {
                bail!("--synthetic expects dim,classes,per_class[,mean_scale]");
            }
            let dim: usize = parts[0].parse().context("dim")?;
            let k: usize = parts[1].parse().context("classes")?;
            let per: usize = parts[2].parse().context("per_class")?;
            let scale: f64 = parts
                .get(3)
                .map_or(Ok(1.0), |s| s.parse())
                .context("mean_scale")?;
            let means = simulate::random_means(k, dim, scale, &mut root.child("means"));
            let model = GroundTruthModel::isotropic(means, 1.0, vec![per; k])?;
            simulate::synth_gaussian(&model, &root.child("data"))?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let spec = (a.rho != 1.0).then(|| CorruptionSpec {
        imbalance_ratio: a.rho,
        noise_rate: a.eta,
        num_classes: data.num_classes(),
        base_count: data.class_counts().into_iter().min().unwrap_or(0),
    });
    let c = simulate::corrupt(&data, spec.as_ref(), a.eta, &root.child("corrupt"))?;
    io::save_embeddings(&c.data, &a.out)?;
    io::write_json(
        &SimulateSidecar {
            report: &c.report,
            transition: &c.transition,
            clean_labels: &c.clean_labels,
        },
        sidecar(&a.out, ".json"),
    )?;
    log::info!(
        "wrote {} items, counts {:?}, flip rate {:.4}",
        c.data.len(),
        c.report.noisy_counts,
        c.report.empirical_noise_rate
    );
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let data = io::load_embeddings(&a.input)?;
    let mut cfg: CalibrationConfig = read_config(a.config.as_deref())?;
    if let Some(k) = a.lof_k {
        cfg.lof_neighbors = k;
    }
    if let Some(t) = a.lof_threshold {
        cfg.lof_threshold = t;
    }
    let (filters, report) = calibrate_dataset(&data, &cfg)?;
    if let Some(p) = &a.dump_lof {
        fs::write(p, lof::format_lof_dump(&filters, &data))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    io::write_json(&report, &a.out)?;
    log::info!(
        "{} head / {} tail classes",
        report.partition.head.len(),
        report.partition.tail.len()
    );
    Ok(())
}

fn sample_cmd(a: SampleArgs) -> Result<()> {
    let data = io::load_embeddings(&a.input)?;
    let report: CalibrationReport = io::read_json(&a.stats)?;
    let b = sample::balance_dataset(
        &data,
        &report.classes,
        a.target,
        &seeded_rng(a.seed, "sample"),
    )?;
    io::save_embeddings(&b.data, &a.out)?;
    let mask = a.mask.unwrap_or_else(|| sidecar(&a.out, ".mask.csv"));
    fs::write(&mask, pipeline::format_mask(&b.synthetic_mask))
        .with_context(|| format!("writing {}", mask.display()))?;
    log::info!("balanced to {} items", b.data.len());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = io::load_embeddings(&a.input)?;
    let cfg: TrainConfig = read_config(a.config.as_deref())?;
    let mask = match &a.mask {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            pipeline::parse_mask(&text, &p.display().to_string())?
        }
        None => vec![false; data.len()],
    };
    let out = train::train_probe(&data, &mask, &cfg, &seeded_rng(a.seed, "train"))?;
    let mut model = out.model;
    // Split metadata should reflect the real class sizes, not the rebalanced ones.
    let real: Vec<usize> = data
        .labels()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| !m)
        .map(|(&y, _)| y)
        .collect();
    let mut counts = vec![0; data.num_classes()];
    for y in real {
        counts[y] += 1;
    }
    model.class_counts = counts;
    io::write_json(&model, &a.out)?;
    if let Some(last) = out.epoch_losses.last() {
        log::info!("final epoch loss {last:.5}");
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model: ProbeModel = io::read_json(&a.model)?;
    let test = io::load_embeddings(&a.test)?;
    let rule: SplitRule = match &a.split {
        Some(s) => serde_json::from_str(s).context("parsing --split")?,
        None => SplitRule::default(),
    };
    let m = metrics::evaluate(&model, &test, &rule)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    if let Some(p) = &a.out {
        io::write_json(&m, p)?;
    }
    Ok(())
}

fn theory_cmd(a: TheoryArgs) -> Result<bool> {
    let mut cfg: TheoryConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = theory::verify_theory(&cfg)?;
    io::write_json(&report, &a.out)?;
    for c in &report.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(report.passed)
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut cfg: PipelineConfig = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(list) = &a.ablate {
        cfg.ablate = Ablation::parse_list(list)?;
    }
    cfg.dump_lof |= a.dump_lof;
    let out = pipeline::run_pipeline(&cfg, &a.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&out.metrics)?);
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CALIBRE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .with_context(|| format!("CALIBRE_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        bail!("CALIBRE_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => simulate_cmd(a).map(|()| true),
        Command::Calibrate(a) => calibrate_cmd(a).map(|()| true),
        Command::Sample(a) => sample_cmd(a).map(|()| true),
        Command::Train(a) => train_cmd(a).map(|()| true),
        Command::Evaluate(a) => evaluate_cmd(a).map(|()| true),
        Command::VerifyTheory(a) => theory_cmd(a),
        Command::Run(a) => run_cmd(a).map(|()| true),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
