//! A short cross-validated evolution, followed by the last-generation
//! baseline. Writes the report into `target/evolve-example` (or $EDRS_OUT).

use std::path::PathBuf;

use edrs::dataset::{augment, generate_synthetic, split_folds, AugmentConfig, PatchDataset, SynthConfig};
use edrs::harness::{emit_report, run_evolution, run_last_generation_baseline, EvolutionRunConfig};
use edrs::nn::TrainConfig;

fn main() -> edrs::Result<()> {
    let raw = generate_synthetic(40, 1, 3, &SynthConfig::default());
    let records = augment(&raw, &AugmentConfig::default())?;
    let split = split_folds(&records, 3, 3)?;
    let data = PatchDataset::new(records, split)?;

    let cfg = EvolutionRunConfig {
        n_generations: 5,
        n_folds: 3,
        train: TrainConfig {
            epochs: 4,
            batch_size: 16,
            learning_rate: 0.01,
            ..TrainConfig::default()
        },
        benchmark_samples: 200,
        benchmark_repeats: 3,
        ..EvolutionRunConfig::default()
    };
    let mut run = run_evolution(&data, &cfg, 3)?;
    run.report.baseline = Some(run_last_generation_baseline(&data, &cfg, &run.final_nets())?);

    println!("gen   anf     rsl  accuracy       time_s");
    for s in &run.report.summary {
        println!(
            "{:>3} {:>5.1} {:>7.1}  {:.3}±{:.3}  {:.4}",
            s.generation,
            s.anf,
            s.rsl_table,
            s.accuracy_mean,
            s.accuracy_std,
            s.time_s.unwrap_or(f64::NAN)
        );
    }
    for b in run.report.baseline.as_deref().unwrap_or_default() {
        println!("baseline fold {}: accuracy {:.3}", b.fold, b.accuracy);
    }

    let out = std::env::var_os("EDRS_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/evolve-example"));
    emit_report(&run.report, &out)?;
    println!("report written to {}", out.display());
    Ok(())
}
