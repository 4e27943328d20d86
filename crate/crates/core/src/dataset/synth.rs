use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use serde::{Deserialize, Serialize};

use super::{Label, PatchRecord};
use crate::sequencer::PATCH_SIZE;

/// Knobs of the synthetic nodule generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub malignant_fraction: f64,
    /// Range of the lesion's mean radius in pixels.
    pub radius: (f64, f64),
    /// Range of lesion contrast above background.
    pub contrast: (f64, f64),
    /// Range of additive Gaussian noise standard deviation.
    pub noise: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            malignant_fraction: 0.5,
            radius: (4.5, 9.0),
            contrast: (0.3, 0.65),
            noise: (0.03, 0.08),
        }
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

fn render(label: Label, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = PATCH_SIZE;
    let c = (n as f64 - 1.0) / 2.0;
    let cx = c + rng.gen_range(-2.0..=2.0);
    let cy = c + rng.gen_range(-2.0..=2.0);
    let radius = rng.gen_range(cfg.radius.0..=cfg.radius.1);
    let contrast = rng.gen_range(cfg.contrast.0..=cfg.contrast.1);
    let background = rng.gen_range(0.05..=0.2);
    let noise_sd = rng.gen_range(cfg.noise.0..=cfg.noise.1);
    let orientation = rng.gen_range(0.0..PI);
    let malignant = label == Label::Malignant;

    // Shape: malignant lesions are elongated with sharp radial spikes,
    // benign ones round with a gently undulating rim.
    let elongation = if malignant {
        rng.gen_range(0.55..=0.8)
    } else {
        rng.gen_range(0.9..=1.0)
    };
    let (lobes, lobe_amp, sharpness) = if malignant {
        (rng.gen_range(5..=9) as f64, rng.gen_range(0.35..=0.6), 6)
    } else {
        (rng.gen_range(2..=3) as f64, rng.gen_range(0.0..=0.08), 1)
    };
    let lobe_phase = rng.gen_range(0.0..2.0 * PI);
    let edge_width = if malignant { 0.6 } else { 1.2 };

    // Interior texture: zero-mean sum of plane waves.
    let (freq, tex_amp) = if malignant {
        ((0.9, 1.6), 0.3)
    } else {
        ((0.15, 0.4), 0.08)
    };
    let waves: Vec<Wave> = (0..4)
        .map(|_| {
            let f = rng.gen_range(freq.0..=freq.1);
            let dir = rng.gen_range(0.0..2.0 * PI);
            Wave {
                fx: f * dir.cos(),
                fy: f * dir.sin(),
                phase: rng.gen_range(0.0..2.0 * PI),
                amp: tex_amp / 2.0,
            }
        })
        .collect();

    let noise = Normal::new(0.0, noise_sd).expect("positive sd");
    let (s, co) = orientation.sin_cos();
    let mut img = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let u = dx * co + dy * s;
            let v = (-dx * s + dy * co) / elongation;
            let dist = (u * u + v * v).sqrt();
            let angle = v.atan2(u);
            let lobe = (lobes * angle + lobe_phase).cos().max(0.0).powi(sharpness);
            let rim = radius * (1.0 + lobe_amp * lobe);
            let inside = 1.0 / (1.0 + ((dist - rim) / edge_width).exp());
            let texture: f64 = waves
                .iter()
                .map(|w| w.amp * (w.fx * x as f64 + w.fy * y as f64 + w.phase).sin())
                .sum();
            let value = background
                + contrast * inside * (1.0 + texture)
                + noise.sample(rng);
            img.push(value.clamp(0.0, 1.0) as f32);
        }
    }
    img
}

/// Deterministic synthetic lesion set: `n_patients * lesions_per_patient`
/// unaugmented records, patients named `p001`, `p002`, ...
pub fn generate_synthetic(
    n_patients: usize,
    lesions_per_patient: usize,
    seed: u64,
    cfg: &SynthConfig,
) -> Vec<PatchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_patients * lesions_per_patient);
    for p in 0..n_patients {
        for l in 0..lesions_per_patient {
            let label = if rng.gen::<f64>() < cfg.malignant_fraction {
                Label::Malignant
            } else {
                Label::Benign
            };
            out.push(PatchRecord {
                image: render(label, cfg, &mut rng),
                label,
                patient_id: format!("p{:03}", p + 1),
                lesion_id: format!("l{}", l + 1),
                rotation_deg: 0.0,
                is_augmented: false,
            });
        }
    }
    out
}
