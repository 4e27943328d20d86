//! The full experiment: per-fold evolution, evaluation, benchmarking, the
//! trained-from-scratch baseline and report emission.

mod metrics;
mod report;

pub use metrics::{compute_metrics, ConfusionCounts, DiagnosticMetrics};
pub use report::{
    emit_report, read_fold_csv, summarize, write_fold_csv, write_summary_csv, GenerationSummary,
    SUMMARY_COLUMNS,
};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::PatchDataset;
use crate::dna::{
    build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw,
};
use crate::error::{Error, Result};
use crate::nn::{
    predict, time_forward, train, ForwardTiming, SampleView, SequencerNet, TrainConfig, TrainReport,
};
use crate::seed::{derive_seed, Purpose};
use crate::sequencer::{build_initial, compactness_metrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionRunConfig {
    pub n_generations: usize,
    pub retain_fraction: f64,
    pub n_folds: usize,
    pub train: TrainConfig,
    pub master_seed: u64,
    /// Inputs per timed pass; 0 disables benchmarking.
    pub benchmark_samples: usize,
    pub benchmark_repeats: usize,
    pub benchmark_batch: usize,
    pub probability_law: ProbabilityLaw,
}

impl Default for EvolutionRunConfig {
    fn default() -> Self {
        EvolutionRunConfig {
            n_generations: 11,
            retain_fraction: 0.8,
            n_folds: 10,
            train: TrainConfig::default(),
            master_seed: 0,
            benchmark_samples: 1500,
            benchmark_repeats: 5,
            benchmark_batch: 50,
            probability_law: ProbabilityLaw::Exponential,
        }
    }
}

impl EvolutionRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_generations == 0 {
            return Err(Error::Config("n_generations must be >= 1".into()));
        }
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "retain fraction must lie in (0, 1], got {}",
                self.retain_fraction
            )));
        }
        if self.n_folds < 2 {
            return Err(Error::Config("n_folds must be >= 2".into()));
        }
        if self.benchmark_samples > 0 && (self.benchmark_repeats == 0 || self.benchmark_batch == 0)
        {
            return Err(Error::Config(
                "benchmark repeats and batch must be >= 1".into(),
            ));
        }
        self.train.validate()
    }

    fn train_cfg(&self, fold: usize, generation: usize, purpose: Purpose) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.master_seed, fold, generation, purpose),
            ..self.train.clone()
        }
    }
}

/// Outcome of one generation on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub fold: usize,
    pub alive_filters_total: usize,
    pub rsl_table: usize,
    pub rsl_last_layer: usize,
    pub active_synapses: u64,
    pub confusion: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: f64,
    pub forward_time_s: Option<f64>,
}

/// Trained networks and records of one fold, in generation order.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: usize,
    pub records: Vec<GenerationRecord>,
    pub nets: Vec<SequencerNet<f32>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    pub config: EvolutionRunConfig,
    /// Ordered by generation, then fold.
    pub records: Vec<GenerationRecord>,
    pub summary: Vec<GenerationSummary>,
    pub baseline: Option<Vec<GenerationRecord>>,
    /// Caller-supplied run description echoed into the manifest.
    pub provenance: serde_json::Value,
}

/// A finished evolution: the report plus every trained network.
#[derive(Debug, Clone)]
pub struct EvolutionRun {
    pub report: EvolutionReport,
    pub folds: Vec<FoldRun>,
}

pub fn checkpoint_name(generation: usize, fold: usize) -> String {
    format!("gen{generation}_fold{fold}.edrs")
}

impl EvolutionRun {
    /// Writes `gen{g}_fold{f}.edrs` for every trained network.
    pub fn save_checkpoints(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for fold in &self.folds {
            for net in &fold.nets {
                let path = dir.join(checkpoint_name(net.generation as usize, fold.fold));
                save_checkpoint(net, &path)?;
            }
        }
        Ok(())
    }

    /// Last-generation network of each fold.
    pub fn final_nets(&self) -> Vec<SequencerNet<f32>> {
        self.folds
            .iter()
            .map(|f| f.nets.last().expect("at least one generation").clone())
            .collect()
    }
}

/// Trains the physically shrunk network and scatters the result back.
/// Equivalent to training the masked network, minus the dead arithmetic.
pub fn train_compact(
    net: &mut SequencerNet<f32>,
    data: &SampleView<'_>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let mut small = net.shrunk();
    let report = train(&mut small, data, cfg)?;
    net.scatter_from_shrunk(&small)?;
    Ok(report)
}

fn evaluate(
    net: &SequencerNet<f32>,
    data: &PatchDataset,
    test: &[usize],
    generation: usize,
    fold: usize,
) -> Result<GenerationRecord> {
    let view = data.view(test);
    let predictions = predict(&net.shrunk(), &view, 100)?;
    let confusion = ConfusionCounts::from_predictions(&predictions, view.labels());
    let m = compute_metrics(&confusion)?;
    let compact = compactness_metrics(net);
    Ok(GenerationRecord {
        generation,
        fold,
        alive_filters_total: compact.total_alive_filters,
        rsl_table: compact.rsl_table,
        rsl_last_layer: compact.rsl_last_layer,
        active_synapses: net.count_active_synapses(),
        confusion,
        sensitivity: m.sensitivity,
        specificity: m.specificity,
        accuracy: m.accuracy,
        forward_time_s: None,
    })
}

fn check_disjoint(data: &PatchDataset, train: &[usize], test: &[usize], fold: usize) -> Result<()> {
    let train_patients: std::collections::HashSet<&str> = train
        .iter()
        .map(|&i| data.records[i].patient_id.as_str())
        .collect();
    if let Some(&i) = test
        .iter()
        .find(|&&i| train_patients.contains(data.records[i].patient_id.as_str()))
    {
        return Err(Error::Config(format!(
            "fold {fold}: patient {} appears in both train and test sets",
            data.records[i].patient_id
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!("fold {fold} has an empty train or test set")));
    }
    Ok(())
}

/// Evolves one fold: train generation 1, then repeatedly synthesize an
/// offspring from the previous trained network and retrain it. Each
/// generation is evaluated on the held-out fold.
pub fn run_fold(fold: usize, data: &PatchDataset, cfg: &EvolutionRunConfig) -> Result<FoldRun> {
    cfg.validate()?;
    let (train_idx, test_idx) = data.train_test_indices(fold);
    check_disjoint(data, &train_idx, &test_idx, fold)?;
    let train_view = data.view(&train_idx);

    let mut net = build_initial::<f32>(derive_seed(cfg.master_seed, fold, 1, Purpose::Init));
    train_compact(&mut net, &train_view, &cfg.train_cfg(fold, 1, Purpose::Train))?;
    let mut records = vec![evaluate(&net, data, &test_idx, 1, fold)?];
    let mut nets = vec![net];

    for generation in 2..=cfg.n_generations {
        let ancestor = nets.last().expect("previous generation");
        let dna = ProbabilisticDna::from_ancestor(ancestor, cfg.probability_law);
        let env = calibrate_alpha(&dna, cfg.retain_fraction, ancestor.count_active_synapses())?;
        let seed = derive_seed(cfg.master_seed, fold, generation, Purpose::Synthesis);
        let outcome = synthesize_offspring(ancestor, &env, &dna, seed);
        let mut child = build_offspring_net(ancestor, &outcome)?;
        log::info!(
            "fold {fold} gen {generation}: alpha {:.4}, expected {:.1}, realized {} of {}",
            env.alpha,
            env.expected_count,
            child.count_active_synapses(),
            ancestor.count_active_synapses()
        );
        train_compact(&mut child, &train_view, &cfg.train_cfg(fold, generation, Purpose::Train))?;
        records.push(evaluate(&child, data, &test_idx, generation, fold)?);
        nets.push(child);
    }
    Ok(FoldRun {
        fold,
        records,
        nets,
    })
}

/// Median forward time of each network, executed with dead filters and
/// channels physically removed.
pub fn benchmark_generations(
    nets: &[SequencerNet<f32>],
    cfg: &EvolutionRunConfig,
) -> Result<Vec<ForwardTiming>> {
    nets.iter()
        .map(|net| {
            let timing = time_forward(
                &net.shrunk(),
                cfg.benchmark_samples.max(1),
                cfg.benchmark_batch,
                cfg.benchmark_repeats,
            )?;
            log::info!(
                "generation {}: median {:.4}s, spread {:.4}s over {} repeats",
                net.generation,
                timing.median_s,
                timing.spread_s(),
                timing.repeats_s.len()
            );
            Ok(timing)
        })
        .collect()
}

/// Runs every fold (up to `jobs` concurrently), benchmarks the trained
/// networks one at a time, and aggregates the per-generation summary.
pub fn run_evolution(
    data: &PatchDataset,
    cfg: &EvolutionRunConfig,
    jobs: usize,
) -> Result<EvolutionRun> {
    cfg.validate()?;
    if data.n_folds() != cfg.n_folds {
        return Err(Error::Config(format!(
            "dataset is split into {} folds, configuration asks for {}",
            data.n_folds(),
            cfg.n_folds
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut folds: Vec<FoldRun> = pool.install(|| {
        (0..cfg.n_folds)
            .into_par_iter()
            .map(|fold| run_fold(fold, data, cfg))
            .collect::<Result<_>>()
    })?;

    if cfg.benchmark_samples > 0 {
        for fold in &mut folds {
            let timings = benchmark_generations(&fold.nets, cfg)?;
            for (record, t) in fold.records.iter_mut().zip(timings) {
                record.forward_time_s = Some(t.median_s);
            }
        }
    }

    let mut records: Vec<GenerationRecord> =
        folds.iter().flat_map(|f| f.records.iter().cloned()).collect();
    records.sort_by_key(|r| (r.generation, r.fold));
    let summary = summarize(&records);
    Ok(EvolutionRun {
        report: EvolutionReport {
            config: cfg.clone(),
            records,
            summary,
            baseline: None,
            provenance: serde_json::Value::Null,
        },
        folds,
    })
}

/// Re-initializes each fold's final architecture (same masks, fresh random
/// weights) and trains it from scratch with the per-generation budget.
pub fn run_last_generation_baseline(
    data: &PatchDataset,
    cfg: &EvolutionRunConfig,
    final_nets: &[SequencerNet<f32>],
) -> Result<Vec<GenerationRecord>> {
    cfg.validate()?;
    if final_nets.len() != cfg.n_folds {
        return Err(Error::MissingGeneration {
            fold: final_nets.len(),
            generation: cfg.n_generations,
        });
    }
    final_nets
        .iter()
        .enumerate()
        .map(|(fold, evolved)| {
            let generation = evolved.generation as usize;
            let (train_idx, test_idx) = data.train_test_indices(fold);
            check_disjoint(data, &train_idx, &test_idx, fold)?;
            let mut net = scratch_copy(evolved, derive_seed(
                cfg.master_seed,
                fold,
                generation,
                Purpose::BaselineInit,
            ))?;
            train_compact(
                &mut net,
                &data.view(&train_idx),
                &cfg.train_cfg(fold, generation, Purpose::BaselineTrain),
            )?;
            evaluate(&net, data, &test_idx, generation, fold)
        })
        .collect()
}

/// Same structure as `evolved`, freshly initialized weights, pruned
/// positions zeroed.
pub fn scratch_copy(evolved: &SequencerNet<f32>, seed: u64) -> Result<SequencerNet<f32>> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut net = SequencerNet::<f32>::init(&evolved.arch(), &mut rng)?;
    for (dst, src) in net.conv.iter_mut().zip(&evolved.conv) {
        dst.mask.clone_from(&src.mask);
        dst.filter_alive.clone_from(&src.filter_alive);
    }
    for (dst, src) in net.fc.iter_mut().zip(&evolved.fc) {
        dst.input_alive.clone_from(&src.input_alive);
    }
    net.zero_pruned();
    net.generation = evolved.generation;
    net.validate()?;
    Ok(net)
}

/// Loads `gen{generation}_fold{f}.edrs` for every fold.
pub fn load_generation(dir: &Path, generation: usize, n_folds: usize) -> Result<Vec<SequencerNet<f32>>> {
    (0..n_folds)
        .map(|fold| {
            let path = dir.join(checkpoint_name(generation, fold));
            if !path.exists() {
                return Err(Error::MissingGeneration { fold, generation });
            }
            load_checkpoint(&path)
        })
        .collect()
}
