use std::collections::BTreeMap;

use edrs::dataset::{augment, generate_synthetic, split_folds, AugmentConfig, PatchDataset, SynthConfig};
use edrs::harness::{
    checkpoint_name, compute_metrics, emit_report, load_generation, read_fold_csv, run_evolution,
    run_fold, run_last_generation_baseline, summarize, ConfusionCounts, EvolutionRunConfig,
    SUMMARY_COLUMNS,
};
use edrs::nn::TrainConfig;
use edrs::Error;
use proptest::prelude::*;

fn small_data(patients: usize, folds: usize) -> PatchDataset {
    let base = generate_synthetic(patients, 1, 17, &SynthConfig::default());
    let records = augment(&base, &AugmentConfig::default()).unwrap();
    let split = split_folds(&records, folds, 4).unwrap();
    PatchDataset::new(records, split).unwrap()
}

fn small_cfg(generations: usize, folds: usize) -> EvolutionRunConfig {
    EvolutionRunConfig {
        n_generations: generations,
        n_folds: folds,
        train: TrainConfig {
            epochs: 1,
            batch_size: 16,
            ..TrainConfig::default()
        },
        master_seed: 3,
        benchmark_samples: 0,
        ..EvolutionRunConfig::default()
    }
}

#[test]
fn single_generation_is_the_dense_net() {
    let data = small_data(9, 3);
    let run = run_fold(1, &data, &small_cfg(1, 3)).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].active_synapses, 44320);
    assert_eq!(run.records[0].alive_filters_total, 128);
}

#[test]
fn fold_runs_shrink_and_repeat_exactly() {
    let data = small_data(9, 3);
    let cfg = small_cfg(3, 3);
    let a = run_fold(0, &data, &cfg).unwrap();
    let b = run_fold(0, &data, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    let syn: Vec<u64> = a.records.iter().map(|r| r.active_synapses).collect();
    assert!(syn.windows(2).all(|w| w[1] < w[0]), "{syn:?}");
    for r in &a.records {
        let m = compute_metrics(&r.confusion).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.accuracy), (r.sensitivity, r.specificity, r.accuracy));
        assert_eq!(r.rsl_table, 16 * r.alive_filters_total);
    }
}

#[test]
fn evolution_report_aggregates_and_reemits_identically() {
    let data = small_data(12, 3);
    let cfg = small_cfg(3, 3);
    let run = run_evolution(&data, &cfg, 1).unwrap();
    let report = &run.report;
    assert_eq!(report.records.len(), 9);
    assert_eq!(report.summary.len(), 3);

    for s in &report.summary {
        let rows: Vec<_> = report.records.iter().filter(|r| r.generation == s.generation).collect();
        let acc = rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64;
        assert!((acc - s.accuracy_mean).abs() < 1e-12);
        let anf = rows.iter().map(|r| r.alive_filters_total as f64).sum::<f64>() / rows.len() as f64;
        assert_eq!(s.anf, (anf * 10.0).round() / 10.0);
        assert_eq!(s.rsl_table, (s.anf * 16.0 * 10.0).round() / 10.0);
        assert!(s.time_s.is_none());
    }

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    emit_report(report, &a).unwrap();
    emit_report(report, &b).unwrap();
    for f in ["folds.csv", "summary.csv", "run_manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), SUMMARY_COLUMNS.join(","));
    assert_eq!(read_fold_csv(&a.join("folds.csv")).unwrap(), report.records);
    assert_eq!(summarize(&report.records), report.summary);

    let parallel = run_evolution(&data, &cfg, 3).unwrap();
    assert_eq!(parallel.report.records, report.records);
}

#[test]
fn baseline_reuses_final_architecture() {
    let data = small_data(9, 3);
    let cfg = small_cfg(3, 3);
    let run = run_evolution(&data, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run.save_checkpoints(dir.path()).unwrap();
    assert!(dir.path().join(checkpoint_name(3, 2)).exists());

    let finals = load_generation(dir.path(), 3, 3).unwrap();
    assert_eq!(finals, run.final_nets());
    let baseline = run_last_generation_baseline(&data, &cfg, &finals).unwrap();
    assert_eq!(baseline.len(), 3);
    for (b, evolved) in baseline.iter().zip(&finals) {
        assert_eq!(b.generation, 3);
        assert_eq!(b.active_synapses, evolved.count_active_synapses());
        assert_eq!(b.alive_filters_total, evolved.alive_filters().iter().sum::<usize>());
    }

    let fresh = edrs::harness::scratch_copy(&finals[0], 99).unwrap();
    for (f, e) in fresh.conv.iter().zip(&finals[0].conv) {
        assert_eq!(f.mask, e.mask);
        assert_eq!(f.filter_alive, e.filter_alive);
        for (w, &m) in f.weights.data().iter().zip(&f.mask) {
            if !m {
                assert_eq!(*w, 0.0);
            }
        }
    }
    assert_ne!(fresh.conv[0].weights, finals[0].conv[0].weights);

    std::fs::remove_file(dir.path().join(checkpoint_name(3, 1))).unwrap();
    assert!(matches!(
        load_generation(dir.path(), 3, 3),
        Err(Error::MissingGeneration { fold: 1, generation: 3 })
    ));
}

#[test]
fn invalid_run_configs_are_rejected() {
    let data = small_data(9, 3);
    for cfg in [
        EvolutionRunConfig { retain_fraction: 1.5, ..small_cfg(2, 3) },
        EvolutionRunConfig { retain_fraction: 0.0, ..small_cfg(2, 3) },
        EvolutionRunConfig { n_generations: 0, ..small_cfg(2, 3) },
        small_cfg(2, 4),
    ] {
        assert!(matches!(run_evolution(&data, &cfg, 1), Err(Error::Config(_))));
    }
}

fn brute_force(pred: &[usize], truth: &[usize]) -> ConfusionCounts {
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *cells.entry((p, t)).or_default() += 1;
    }
    let get = |p, t| cells.get(&(p, t)).copied().unwrap_or(0);
    ConfusionCounts {
        tp: get(1, 1),
        fp: get(1, 0),
        tn: get(0, 0),
        fn_: get(0, 1),
    }
}

proptest! {
    #[test]
    fn metrics_match_brute_force(pairs in prop::collection::vec((0usize..2, 0usize..2), 1..200)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let c = ConfusionCounts::from_predictions(&pred, &truth);
        prop_assert_eq!(c, brute_force(&pred, &truth));
        let m = compute_metrics(&c).unwrap();
        let n = pred.len() as f64;
        let hits = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64;
        prop_assert_eq!(m.accuracy, hits / n);
        let pos = truth.iter().filter(|&&t| t == 1).count();
        let tp = pred.iter().zip(&truth).filter(|(p, t)| **p == 1 && **t == 1).count();
        prop_assert_eq!(m.sensitivity, (pos > 0).then(|| tp as f64 / pos as f64));
    }
}
