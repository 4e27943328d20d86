//! The `edrs` command line. Subcommands map one-to-one onto the library's
//! pipeline stages; every run leaves a `run_manifest.json` behind.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::dataset::{
    augment, generate_synthetic, load_manifest, load_patches, split_folds, write_manifest,
    AugmentConfig, PatchDataset, SynthConfig,
};
use crate::dna::ProbabilityLaw;
use crate::error::{Error, Result};
use crate::harness::{
    emit_report, load_generation, read_fold_csv, run_evolution, run_last_generation_baseline,
    summarize, write_fold_csv, write_summary_csv, EvolutionRunConfig,
};
use crate::nn::time_forward;
use crate::seed::{derive_seed, Purpose};
use crate::sequencer::{extract_sequence, write_sequences_csv, PATCH_SIZE};
use crate::tensor::Tensor;

/// Synthetic dataset recipe used when no dataset file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub patients: usize,
    pub lesions_per_patient: usize,
    /// Generator seed; derived from the master seed when absent.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub augment: AugmentConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            patients: 93,
            lesions_per_patient: 1,
            seed: None,
            synth: SynthConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

/// Everything that determines a run's results. This is the schema of the
/// config file and is echoed into every manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub evolution: EvolutionRunConfig,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a TOML config file, or a JSON `run_manifest.json` written by a
    /// previous run.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::Input {
            path: path.to_path_buf(),
            reason,
        };
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let config = value
                .pointer("/provenance/run_config")
                .or_else(|| value.get("run_config"))
                .ok_or_else(|| bad("no run_config entry".into()))?;
            serde_json::from_value(config.clone()).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))
        }
    }

    fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        self.data.augment.validate()?;
        if self.data.patients < self.evolution.n_folds || self.data.lesions_per_patient == 0 {
            return Err(Error::Config(format!(
                "need at least {} patients with >= 1 lesion each",
                self.evolution.n_folds
            )));
        }
        let f = self.data.synth.malignant_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("malignant fraction {f} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "edrs", version, about = "Evolutionary deep radiomic sequencer discovery")]
pub struct Cli {
    /// TOML config file or a previous run_manifest.json
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (falls back to $EDRS_OUT, then the config file)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Maximum folds processed concurrently
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Log progress to stderr (repeat for more)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, augment and fold-split a synthetic dataset
    GenData(DataArgs),
    /// Run the evolution on every fold and write the report and checkpoints
    Evolve(EvolveArgs),
    /// Retrain the last-generation architectures from scratch
    Baseline(BaselineArgs),
    /// Re-time existing checkpoints
    Bench(BenchArgs),
    /// Re-emit summary.csv from a per-fold CSV
    Report(ReportArgs),
    /// Write radiomic sequences for patches using a checkpoint
    Extract(ExtractArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub lesions_per_patient: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LawArg {
    Exponential,
    Linear,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Dataset CSV from `gen-data` instead of generating one
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub retain: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Inputs per timed pass; 0 disables timing
    #[arg(long)]
    pub bench_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub law: Option<LawArg>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub evolve: EvolveArgs,
    /// Directory holding gen{G}_fold{f}.edrs
    #[arg(long)]
    pub checkpoints: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long, default_value_t = 1500)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// folds.csv of a previous run
    #[arg(long)]
    pub folds_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory with index.csv and PGM patches
    #[arg(long)]
    pub patches: PathBuf,
}

/// Failure split by exit code: usage/validation problems exit 2,
/// everything else 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("edrs: {msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("edrs: {e}");
            1
        }
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("EDRS_OUT").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("edrs-out"));
    if cli.jobs == 0 {
        return Err(Failure::Usage("--jobs must be >= 1".into()));
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    match &cli.command {
        Command::GenData(args) => {
            apply_data(&mut cfg, args);
            cfg.validate().map_err(usage)?;
            let data = build_dataset(&cfg)?;
            let path = out.join("dataset.csv");
            write_manifest(&path, &data)?;
            write_run_manifest(&out, "gen-data", &cfg, serde_json::json!({
                "records": data.records.len(),
                "dataset_crc32": file_crc(&path)?,
            }))?;
        }
        Command::Evolve(args) => {
            apply_evolve(&mut cfg, args);
            cfg.validate().map_err(usage)?;
            let data = dataset_for(&cfg, args.dataset.as_deref())?;
            let mut run = run_evolution(&data, &cfg.evolution, cli.jobs)?;
            run.save_checkpoints(&out.join("checkpoints"))?;
            run.report.provenance = provenance("evolve", &cfg, args.dataset.as_deref())?;
            emit_report(&run.report, &out)?;
        }
        Command::Baseline(args) => {
            apply_evolve(&mut cfg, &args.evolve);
            cfg.validate().map_err(usage)?;
            let data = dataset_for(&cfg, args.evolve.dataset.as_deref())?;
            let nets = load_generation(
                &args.checkpoints,
                cfg.evolution.n_generations,
                cfg.evolution.n_folds,
            )?;
            let records = run_last_generation_baseline(&data, &cfg.evolution, &nets)?;
            write_fold_csv(&out.join("baseline.csv"), &records)?;
            write_summary_csv(&out.join("baseline_summary.csv"), &summarize(&records))?;
            write_run_manifest(
                &out,
                "baseline",
                &cfg,
                provenance("baseline", &cfg, args.evolve.dataset.as_deref())?,
            )?;
        }
        Command::Bench(args) => {
            if args.samples == 0 || args.repeats == 0 || args.batch_size == 0 {
                return Err(Failure::Usage(
                    "--samples, --repeats and --batch-size must be >= 1".into(),
                ));
            }
            bench(args, &out)?;
            write_run_manifest(&out, "bench", &cfg, serde_json::json!({
                "checkpoints": args.checkpoints,
                "samples": args.samples,
                "repeats": args.repeats,
                "batch_size": args.batch_size,
            }))?;
        }
        Command::Report(args) => {
            let records = read_fold_csv(&args.folds_csv)?;
            write_summary_csv(&out.join("summary.csv"), &summarize(&records))?;
            write_run_manifest(&out, "report", &cfg, serde_json::json!({
                "folds_csv": args.folds_csv,
            }))?;
        }
        Command::Extract(args) => {
            let net = load_checkpoint(&args.checkpoint)?;
            let records = load_patches(&args.patches)?;
            let mut rows = Vec::with_capacity(records.len());
            for r in &records {
                let patch = Tensor::from_vec(&[PATCH_SIZE, PATCH_SIZE], r.image.clone())?;
                let id = format!("{}_{}", r.patient_id, r.lesion_id);
                rows.push((id, extract_sequence(&net, &patch)?));
            }
            write_sequences_csv(&out.join("sequences.csv"), &rows)?;
            write_run_manifest(&out, "extract", &cfg, serde_json::json!({
                "checkpoint": args.checkpoint,
                "patches": args.patches,
            }))?;
        }
    }
    Ok(())
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    let d = &mut cfg.data;
    set(&mut d.patients, a.patients);
    set(&mut d.lesions_per_patient, a.lesions_per_patient);
    if a.data_seed.is_some() {
        d.seed = a.data_seed;
    }
    set(&mut cfg.evolution.n_folds, a.folds);
    set(&mut cfg.evolution.master_seed, a.seed);
}

fn apply_evolve(cfg: &mut RunConfig, a: &EvolveArgs) {
    apply_data(cfg, &a.data);
    let e = &mut cfg.evolution;
    set(&mut e.n_generations, a.generations);
    set(&mut e.retain_fraction, a.retain);
    set(&mut e.train.epochs, a.epochs);
    set(&mut e.train.batch_size, a.batch_size);
    set(&mut e.train.learning_rate, a.learning_rate);
    set(&mut e.train.momentum, a.momentum);
    set(&mut e.benchmark_samples, a.bench_samples);
    if let Some(law) = a.law {
        e.probability_law = match law {
            LawArg::Exponential => ProbabilityLaw::Exponential,
            LawArg::Linear => ProbabilityLaw::Linear,
        };
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Synthetic data described by `cfg`: generated, augmented, split by
/// patient.
pub fn build_dataset(cfg: &RunConfig) -> Result<PatchDataset> {
    let master = cfg.evolution.master_seed;
    let seed = cfg
        .data
        .seed
        .unwrap_or_else(|| derive_seed(master, 0, 0, Purpose::Dataset));
    let raw = generate_synthetic(
        cfg.data.patients,
        cfg.data.lesions_per_patient,
        seed,
        &cfg.data.synth,
    );
    let records = augment(&raw, &cfg.data.augment)?;
    let split = split_folds(
        &records,
        cfg.evolution.n_folds,
        derive_seed(master, 0, 0, Purpose::Folds),
    )?;
    PatchDataset::new(records, split)
}

fn dataset_for(cfg: &RunConfig, path: Option<&Path>) -> Result<PatchDataset> {
    match path {
        Some(p) => load_manifest(p),
        None => build_dataset(cfg),
    }
}

fn file_crc(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:08x}", crc32fast::hash(&bytes)))
}

fn provenance(command: &str, cfg: &RunConfig, dataset: Option<&Path>) -> Result<serde_json::Value> {
    let dataset = match dataset {
        Some(p) => serde_json::json!({ "file": p, "crc32": file_crc(p)? }),
        None => serde_json::json!("synthetic"),
    };
    Ok(serde_json::json!({
        "command": command,
        "run_config": cfg,
        "dataset": dataset,
    }))
}

fn write_run_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    details: serde_json::Value,
) -> Result<()> {
    let manifest = serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "provenance": {
            "command": command,
            "run_config": cfg,
            "details": details,
        },
    });
    let path = out.join("run_manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn bench(args: &BenchArgs, out: &Path) -> Result<()> {
    let mut found = Vec::new();
    let entries = std::fs::read_dir(&args.checkpoints).map_err(|e| Error::io(&args.checkpoints, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&args.checkpoints, e))?.path();
        if let Some((g, f)) = parse_checkpoint_name(&path) {
            found.push((g, f, path));
        }
    }
    if found.is_empty() {
        return Err(Error::Input {
            path: args.checkpoints.clone(),
            reason: "no gen{g}_fold{f}.edrs checkpoints".into(),
        });
    }
    found.sort();
    let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
    w.write_record(["generation", "fold", "alive_filters", "median_s", "spread_s"])?;
    for (g, f, path) in found {
        let net = load_checkpoint(&path)?;
        let t = time_forward(&net.shrunk(), args.samples, args.batch_size, args.repeats)?;
        w.write_record([
            g.to_string(),
            f.to_string(),
            net.alive_filters().iter().sum::<usize>().to_string(),
            t.median_s.to_string(),
            t.spread_s().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

fn parse_checkpoint_name(path: &Path) -> Option<(usize, usize)> {
    let stem = path.file_name()?.to_str()?.strip_suffix(".edrs")?;
    let (g, f) = stem.strip_prefix("gen")?.split_once("_fold")?;
    Some((g.parse().ok()?, f.parse().ok()?))
}
