//! Radiomic sequences from an evolved sequencer: only alive last-layer
//! filters contribute, 16 positions each.

use edrs::dataset::{generate_synthetic, SynthConfig};
use edrs::dna::{build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw};
use edrs::sequencer::{build_initial, extract_sequence, PATCH_SIZE};
use edrs::tensor::Tensor;

fn main() -> edrs::Result<()> {
    let mut net = build_initial::<f32>(2);
    for generation in 0..3 {
        let dna = ProbabilisticDna::from_ancestor(&net, ProbabilityLaw::Exponential);
        let env = calibrate_alpha(&dna, 0.8, net.count_active_synapses())?;
        let outcome = synthesize_offspring(&net, &env, &dna, generation);
        net = build_offspring_net(&net, &outcome)?;
    }

    for record in generate_synthetic(3, 1, 9, &SynthConfig::default()) {
        let patch = Tensor::from_vec(&[PATCH_SIZE, PATCH_SIZE], record.image)?;
        let seq = extract_sequence(&net, &patch)?;
        let head: Vec<String> = seq.values.iter().take(6).map(|v| format!("{v:.3}")).collect();
        println!(
            "{} {:?}: length {} (generation {}), starts [{}]",
            record.patient_id,
            record.label,
            seq.values.len(),
            seq.generation,
            head.join(", ")
        );
    }
    Ok(())
}
