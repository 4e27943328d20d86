//! Forward-pass timing along an evolutionary chain, executed on the
//! physically shrunk networks.

use edrs::dna::{build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw};
use edrs::nn::time_forward;
use edrs::sequencer::build_initial;

fn main() -> edrs::Result<()> {
    let samples = 500;
    let mut net = build_initial::<f32>(3);
    for generation in 1..=11u64 {
        if generation > 1 {
            let dna = ProbabilisticDna::from_ancestor(&net, ProbabilityLaw::Exponential);
            let env = calibrate_alpha(&dna, 0.8, net.count_active_synapses())?;
            net = build_offspring_net(&net, &synthesize_offspring(&net, &env, &dna, generation))?;
        }
        let t = time_forward(&net.shrunk(), samples, 50, 3)?;
        println!(
            "gen {generation:>2}: {:>5} synapses, filters {:?}, median {:.1} ms / {samples} samples",
            net.count_active_synapses(),
            net.alive_filters(),
            t.median_s * 1e3
        );
    }
    Ok(())
}
