use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use skyreserve::config::{Config, SweepSection};
use skyreserve::features::{read_dataset, write_dataset, FeatureVector, N_FEATURES};
use skyreserve::powerplant::{power_table, write_power_table, CruiseModel};
use skyreserve::predictor::metrics::{evaluate, write_metrics, write_predictions};
use skyreserve::predictor::{train, Checkpoint};
use skyreserve::report;
use skyreserve::simkit::density_sweep;
use skyreserve::{Error, Result};

#[derive(Parser)]
#[command(
    name = "skyreserve",
    version,
    about = "Energy reserves for eVTOL cruise under tactical deconfliction"
)]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SweepArgs {
    /// Base seed; run k of each density uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated traffic counts, e.g. 10,30,60.
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
    /// Densities 10..=60 step 5 with 200 runs each.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fly the density sweep and write the transit dataset.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Overhead statistics, conflict fractions and histograms from a dataset.
    Report {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Fit the overhead predictor.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Train for 10000 epochs.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Metrics and per-sample predictions on the held-out split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reserve estimate for one aircraft.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Thirteen comma-separated raw feature values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "dataset")]
        features: Option<Vec<f64>>,
        /// Take the features of one dataset row instead.
        #[arg(long, requires = "row")]
        dataset: Option<PathBuf>,
        /// Zero-based record index into --dataset.
        #[arg(long)]
        row: Option<usize>,
    },
    /// Power breakdown against airspeed.
    PowerTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        step_kt: f64,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    started_unix: u64,
    finished_unix: u64,
    config: &'a Config,
    inputs: Vec<String>,
    outputs: Vec<OutputEntry>,
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    bytes: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_manifest(
    path: &Path,
    command: &str,
    started: u64,
    config: &Config,
    inputs: &[&Path],
    outputs: &[PathBuf],
) -> Result<()> {
    let outputs = outputs
        .iter()
        .map(|p| {
            Ok(OutputEntry {
                path: p.display().to_string(),
                bytes: fs::metadata(p)?.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        started_unix: started,
        finished_unix: unix_now(),
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Domain(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate(mut cfg: Config, out: &Path, sweep: SweepArgs) -> Result<()> {
    let started = unix_now();
    if sweep.paper_scale {
        cfg.sweep = SweepSection::full();
        cfg.scenario.runs = 200;
    }
    if let Some(d) = sweep.densities {
        cfg.sweep.densities = d;
    }
    if let Some(r) = sweep.runs {
        cfg.scenario.runs = r;
    }
    if let Some(s) = sweep.seed {
        cfg.scenario.seed = s;
    }
    cfg.validate(Path::new("<command line>"))?;
    fs::create_dir_all(out)?;
    let cruise = CruiseModel::new(cfg.aircraft_config())?;
    info!(
        "best-range speed {:.2} kt; densities {:?}, {} runs each",
        skyreserve::units::to_knots(cruise.best_range_speed),
        cfg.sweep.densities,
        cfg.scenario.runs
    );
    let runs = density_sweep(&cfg.scenario_config(), &cruise, &cfg.sweep.densities)?;
    let records: Vec<_> = runs.iter().flat_map(|r| r.records()).collect();
    let dataset = out.join("dataset.csv");
    let summary = out.join("runs.csv");
    write_dataset(&records, &dataset)?;
    report::write_run_summary(&runs, create(&summary)?)?;
    let los: usize = runs.iter().map(|r| r.los_count).sum();
    let nmac: usize = runs.iter().map(|r| r.nmac_count).sum();
    let incomplete = records.iter().filter(|r| r.incomplete).count();
    info!(
        "{} transits ({incomplete} incomplete), {los} losses of separation, {nmac} NMACs",
        records.len()
    );
    println!("{}", dataset.display());
    let outputs = [dataset, summary];
    write_manifest(&out.join("manifest.json"), "simulate", started, &cfg, &[], &outputs)
}

fn report_cmd(dataset: &Path, out: &Path, bins: usize) -> Result<()> {
    let records = read_dataset(dataset)?;
    if records.is_empty() {
        return Err(Error::Data {
            line: 1,
            message: "dataset has no records".into(),
        });
    }
    fs::create_dir_all(out)?;
    let stats = report::overhead_table(&records)?;
    report::write_overhead_table(&stats, create(&out.join("overhead_stats.csv"))?)?;
    report::write_conflict_fractions(
        &report::conflict_fractions(&records),
        create(&out.join("conflict_fraction.csv"))?,
    )?;
    let (rows, zeros) = report::density_histograms(&records, bins)?;
    report::write_density_histograms(&rows, &zeros, create(&out.join("overhead_histogram.csv"))?)?;
    println!(
        "{:>4} {:>7} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "N", "count", "mean%", "median%", "p90%", "p95%", "max%"
    );
    for s in &stats {
        println!(
            "{:>4} {:>7} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.2}",
            s.n_aircraft,
            s.count,
            100.0 * s.mean,
            100.0 * s.median,
            100.0 * s.p90,
            100.0 * s.p95,
            100.0 * s.max
        );
    }
    Ok(())
}

fn train_cmd(
    cfg: Config,
    dataset: &Path,
    out: &Path,
    epochs: Option<usize>,
    seed: Option<u64>,
    full_scale: bool,
) -> Result<()> {
    let started = unix_now();
    let mut cfg = cfg;
    if full_scale {
        cfg.training.epochs = 10_000;
    }
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    cfg.validate(Path::new("<command line>"))?;
    let records = read_dataset(dataset)?;
    let ckpt = train(&records, &cfg.net_config(), &cfg.training)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ckpt.save(out)?;
    let log_path = out.with_extension("log.csv");
    let mut w = create(&log_path)?;
    {
        use std::io::Write;
        writeln!(w, "epoch,train_loss,val_nll,grad_norm")?;
        for e in &ckpt.log {
            writeln!(
                w,
                "{},{:.9e},{:.9e},{:.9e}",
                e.epoch, e.train_loss, e.val_nll, e.grad_norm
            )?;
        }
        w.flush()?;
    }
    println!(
        "best validation NLL {:.6} at epoch {}",
        ckpt.best_val_nll, ckpt.best_epoch
    );
    write_manifest(
        &out.with_extension("manifest.json"),
        "train",
        started,
        &cfg,
        &[dataset],
        &[out.to_path_buf(), log_path],
    )
}

fn evaluate_cmd(checkpoint: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let records = read_dataset(dataset)?;
    let split = ckpt.split(&records)?;
    let preds = ckpt.predict(&split.validation.iter().map(|r| r.features).collect::<Vec<_>>())?;
    let observed: Vec<f64> = split.validation.iter().map(|r| r.delta_e).collect();
    let m = evaluate(&preds, &observed)?;
    fs::create_dir_all(out)?;
    write_metrics(&m, create(&out.join("metrics.csv"))?)?;
    write_predictions(&preds, &observed, create(&out.join("predictions.csv"))?)?;
    for (k, v) in m.rows() {
        println!("{k:>14} {v:.6}");
    }
    println!("{:>14} {:.6}", "logged_nll", ckpt.best_val_nll);
    Ok(())
}

fn predict_cmd(
    checkpoint: &Path,
    features: Option<Vec<f64>>,
    dataset: Option<PathBuf>,
    row: Option<usize>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let fv = match (features, dataset) {
        (Some(v), _) => {
            let arr: [f64; N_FEATURES] = v.try_into().map_err(|v: Vec<f64>| {
                Error::Domain(format!("expected {N_FEATURES} feature values, got {}", v.len()))
            })?;
            FeatureVector(arr)
        }
        (None, Some(path)) => {
            let records = read_dataset(&path)?;
            let i = row.unwrap_or(0);
            records
                .get(i)
                .ok_or_else(|| Error::Domain(format!("row {i} out of range ({} records)", records.len())))?
                .features
        }
        (None, None) => return Err(Error::Domain("give --features or --dataset with --row".into())),
    };
    if !fv.is_finite() {
        return Err(Error::Domain("features must be finite".into()));
    }
    let p = ckpt.predict_one(&fv)?;
    println!("mean     {:.3}%", 100.0 * p.mean());
    println!("median   {:.3}%", 100.0 * p.quantile(0.5)?);
    println!("q95      {:.3}%", 100.0 * p.quantile(0.95)?);
    println!("reserve  {:.3}%  (90% upper bound)", 100.0 * p.quantile(0.9)?);
    Ok(())
}

fn power_table_cmd(cfg: &Config, out: &Path, step_kt: f64) -> Result<()> {
    let aircraft = cfg.aircraft_config();
    let rows = power_table(&aircraft, aircraft.cruise_density()?, step_kt)?;
    write_power_table(&rows, create(out)?)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Simulate { out, sweep } => simulate(cfg, &out, sweep),
        Command::Report { dataset, out, bins } => report_cmd(&dataset, &out, bins),
        Command::Train {
            dataset,
            out,
            epochs,
            seed,
            paper_scale,
        } => train_cmd(cfg, &dataset, &out, epochs, seed, paper_scale),
        Command::Evaluate {
            checkpoint,
            dataset,
            out,
        } => evaluate_cmd(&checkpoint, &dataset, &out),
        Command::Predict {
            checkpoint,
            features,
            dataset,
            row,
        } => predict_cmd(&checkpoint, features, dataset, row),
        Command::PowerTable { out, step_kt } => power_table_cmd(&cfg, &out, step_kt),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("SKYRESERVE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
