//! One evolutionary step: encode an ancestor as probabilistic DNA, calibrate
//! the environmental factor to an 80% synapse budget and sample offspring.

use edrs::dna::{
    build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw,
};
use edrs::sequencer::{build_initial, compactness_metrics};

fn main() -> edrs::Result<()> {
    let ancestor = build_initial::<f32>(1);
    let active = ancestor.count_active_synapses();
    let dna = ProbabilisticDna::from_ancestor(&ancestor, ProbabilityLaw::Exponential);
    let env = calibrate_alpha(&dna, 0.8, active)?;
    println!(
        "ancestor: {active} synapses; alpha {:.4}, target {}, expected {:.1}",
        env.alpha, env.target_count, env.expected_count
    );

    for seed in 0..5 {
        let outcome = synthesize_offspring(&ancestor, &env, &dna, seed);
        let child = build_offspring_net(&ancestor, &outcome)?;
        let c = compactness_metrics(&child);
        println!(
            "seed {seed}: {} synapses ({:.3}), filters per layer {:?}, sequence length {}",
            child.count_active_synapses(),
            child.count_active_synapses() as f64 / active as f64,
            child.alive_filters(),
            c.rsl_last_layer
        );
    }
    Ok(())
}
