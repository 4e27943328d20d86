//! Generate a synthetic cohort, rotate it into an augmented set and split
//! it into patient-disjoint folds.

use edrs::dataset::{augment, generate_synthetic, split_folds, AugmentConfig, Label, SynthConfig};

fn main() -> edrs::Result<()> {
    let raw = generate_synthetic(30, 2, 11, &SynthConfig::default());
    let augmented = augment(&raw, &AugmentConfig::default())?;
    let malignant = augmented.iter().filter(|r| r.label == Label::Malignant).count();
    println!(
        "{} lesions -> {} patches ({} malignant, {} benign)",
        raw.len(),
        augmented.len(),
        malignant,
        augmented.len() - malignant
    );

    let split = split_folds(&augmented, 5, 3)?;
    for (fold, size) in split.fold_sizes().iter().enumerate() {
        let patients: Vec<_> = split.patients_in(fold).into_iter().collect();
        println!("fold {fold}: {size} patients: {}", patients.join(" "));
    }
    Ok(())
}
