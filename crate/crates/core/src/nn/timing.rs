use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::SequencerNet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardTiming {
    pub median_s: f64,
    /// Wall-clock seconds of each full pass, in run order.
    pub repeats_s: Vec<f64>,
}

impl ForwardTiming {
    pub fn spread_s(&self) -> f64 {
        let max = self.repeats_s.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.repeats_s.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock time of `repeats` forward passes over `n_samples`
/// random inputs. Input generation happens before the clock starts.
pub fn time_forward<T: Scalar>(
    net: &SequencerNet<T>,
    n_samples: usize,
    batch_size: usize,
    repeats: usize,
) -> Result<ForwardTiming> {
    if n_samples == 0 || batch_size == 0 || repeats == 0 {
        return Err(Error::Config(
            "n_samples, batch_size and repeats must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7469_6d65);
    let len = net.input.channels * net.input.height * net.input.width;
    let mut batches = Vec::new();
    let mut remaining = n_samples;
    while remaining > 0 {
        let b = remaining.min(batch_size);
        let data = (0..b * len)
            .map(|_| T::from_f64_lossy(rng.gen::<f64>()))
            .collect();
        batches.push(Tensor::from_vec(
            &[b, net.input.channels, net.input.height, net.input.width],
            data,
        )?);
        remaining -= b;
    }

    let mut repeats_s = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for batch in &batches {
            let pass = net.forward(batch)?;
            std::hint::black_box(pass.logits());
        }
        repeats_s.push(start.elapsed().as_secs_f64());
    }
    log::debug!("forward timing over {n_samples} samples: {repeats_s:?}");
    Ok(ForwardTiming {
        median_s: median(&repeats_s),
        repeats_s,
    })
}
