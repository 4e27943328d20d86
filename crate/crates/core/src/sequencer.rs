//! The generation-1 radiomic sequencer, sequence extraction and compactness
//! metrics.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{ArchSpec, ConvSpec, InputSpec, SequencerNet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PATCH_SIZE: usize = 32;

/// Length contributed to a radiomic sequence by each alive last-stage filter
/// (4 x 4 pooled positions).
pub const POSITIONS_PER_FILTER: usize = 16;

/// Three `conv -> ReLU -> 2x2 pool` stages (32 @ 3x3, 32 @ 5x5, 64 @ 3x3,
/// "same" padding) on a 32x32 grayscale patch, then fc 64 and fc 2.
pub fn sequencer_arch() -> ArchSpec {
    ArchSpec {
        input: InputSpec {
            channels: 1,
            height: PATCH_SIZE,
            width: PATCH_SIZE,
        },
        conv: vec![
            ConvSpec {
                filters: 32,
                kernel: (3, 3),
            },
            ConvSpec {
                filters: 32,
                kernel: (5, 5),
            },
            ConvSpec {
                filters: 64,
                kernel: (3, 3),
            },
        ],
        fc: vec![64, 2],
    }
}

/// Dense generation-1 sequencer with seeded Glorot-uniform weights.
pub fn build_initial<T: Scalar>(seed: u64) -> SequencerNet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SequencerNet::init(&sequencer_arch(), &mut rng).expect("sequencer architecture is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiomicSequence {
    pub values: Vec<f64>,
    pub generation: u32,
}

fn patch_batch<T: Scalar>(net: &SequencerNet<T>, patch: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = (net.input.channels, net.input.height, net.input.width);
    let ok = match patch.shape() {
        [ph, pw] => c == 1 && *ph == h && *pw == w,
        [pc, ph, pw] => *pc == c && *ph == h && *pw == w,
        _ => false,
    };
    if !ok {
        return Err(Error::shape(format!(
            "patch must be {h}x{w} with {c} channel(s), got {:?}",
            patch.shape()
        )));
    }
    Tensor::from_vec(&[1, c, h, w], patch.data().to_vec())
}

/// Flattened post-pool last-stage activation, restricted to alive filters.
pub fn extract_sequence<T: Scalar>(
    net: &SequencerNet<T>,
    patch: &Tensor<T>,
) -> Result<RadiomicSequence> {
    let batch = patch_batch(net, patch)?;
    let features = net.forward(&batch)?.features();
    let last = net.conv.last().expect("sequencer has conv stages");
    let positions = features.len() / last.filters;
    let values = features
        .data()
        .chunks(positions)
        .zip(&last.filter_alive)
        .filter(|(_, &alive)| alive)
        .flat_map(|(chunk, _)| chunk.iter().map(|v| v.to_f64_lossy()))
        .collect();
    Ok(RadiomicSequence {
        values,
        generation: net.generation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompactnessMetrics {
    pub total_alive_filters: usize,
    /// Sixteen sequence positions per alive filter, over all conv layers.
    pub rsl_table: usize,
    /// Length of the sequence the last conv stage actually emits.
    pub rsl_last_layer: usize,
}

pub fn compactness_metrics<T: Scalar>(net: &SequencerNet<T>) -> CompactnessMetrics {
    let total_alive_filters = net.alive_filters().iter().sum();
    let last = net.conv.last().map_or(0, |c| c.alive_filters());
    CompactnessMetrics {
        total_alive_filters,
        rsl_table: POSITIONS_PER_FILTER * total_alive_filters,
        rsl_last_layer: POSITIONS_PER_FILTER * last,
    }
}

/// Writes one CSV row per patch: `patch_id, generation, v0, v1, ...`.
pub fn write_sequences_csv(path: &Path, rows: &[(String, RadiomicSequence)]) -> Result<()> {
    let mut out = Vec::new();
    for (id, seq) in rows {
        write!(out, "{id},{}", seq.generation).expect("write to vec");
        for v in &seq.values {
            write!(out, ",{v}").expect("write to vec");
        }
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
