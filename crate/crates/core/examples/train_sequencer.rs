//! Train a generation-1 sequencer on the synthetic cohort and score it on
//! a held-out fold.

use edrs::dataset::{augment, generate_synthetic, split_folds, AugmentConfig, PatchDataset, SynthConfig};
use edrs::harness::{compute_metrics, ConfusionCounts};
use edrs::nn::{predict, train, TrainConfig};
use edrs::sequencer::build_initial;

fn main() -> edrs::Result<()> {
    let raw = generate_synthetic(93, 1, 5, &SynthConfig::default());
    let records = augment(&raw, &AugmentConfig::default())?;
    let split = split_folds(&records, 10, 1)?;
    let data = PatchDataset::new(records, split)?;
    let (train_idx, test_idx) = data.train_test_indices(0);

    let mut net = build_initial::<f32>(7);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 16,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let report = train(&mut net, &data.view(&train_idx), &cfg)?;
    for (epoch, loss) in report.loss_trace.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", epoch + 1);
    }

    let test = data.view(&test_idx);
    let counts = ConfusionCounts::from_predictions(&predict(&net, &test, 100)?, test.labels());
    let m = compute_metrics(&counts)?;
    println!("{counts:?}");
    println!(
        "sensitivity {:?}  specificity {:?}  accuracy {:.3}",
        m.sensitivity, m.specificity, m.accuracy
    );
    Ok(())
}
