//! Save an evolved network, load it back, and show that corruption is
//! caught on load.

use edrs::checkpoint::{load_checkpoint, save_checkpoint};
use edrs::dna::{build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw};
use edrs::sequencer::build_initial;

fn main() -> edrs::Result<()> {
    let ancestor = build_initial::<f32>(4);
    let dna = ProbabilisticDna::from_ancestor(&ancestor, ProbabilityLaw::Exponential);
    let env = calibrate_alpha(&dna, 0.8, ancestor.count_active_synapses())?;
    let net = build_offspring_net(&ancestor, &synthesize_offspring(&ancestor, &env, &dna, 1))?;

    let path = std::env::temp_dir().join("edrs_example_gen2.edrs");
    save_checkpoint(&net, &path)?;
    let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    let loaded = load_checkpoint(&path)?;
    println!("{} bytes, identical after reload: {}", size, loaded == net);

    let mut bytes = std::fs::read(&path).expect("just written");
    bytes[40] ^= 0x01;
    std::fs::write(&path, bytes).expect("temp dir is writable");
    match load_checkpoint(&path) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    let _ = std::fs::remove_file(&path);
    Ok(())
}
