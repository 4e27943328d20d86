use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{Gradients, SequencerNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Borrowed, immutable view of labelled samples (each `C * H * W` values).
#[derive(Debug, Clone, Default)]
pub struct SampleView<'a> {
    images: Vec<&'a [f32]>,
    labels: Vec<usize>,
}

impl<'a> SampleView<'a> {
    pub fn new(images: Vec<&'a [f32]>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(SampleView { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &'a [f32] {
        self.images[i]
    }

    /// Stacks the selected samples into a `[B, C, H, W]` batch.
    pub fn batch<T: Scalar>(&self, indices: &[usize], shape: [usize; 3]) -> Result<Tensor<T>> {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            let img = self.images[i];
            if img.len() != len {
                return Err(Error::shape(format!(
                    "sample {i} has {} values, network expects {len}",
                    img.len()
                )));
            }
            data.extend(img.iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        Tensor::from_vec(&[indices.len(), shape[0], shape[1], shape[2]], data)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

fn input_shape<T>(net: &SequencerNet<T>) -> [usize; 3] {
    [net.input.channels, net.input.height, net.input.width]
}

/// Mini-batch SGD with momentum on softmax cross-entropy. Masks are left
/// untouched; only surviving synapses move.
pub fn train<T: Scalar>(
    net: &mut SequencerNet<T>,
    data: &SampleView<'_>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    net.validate()?;
    let shape = input_shape(net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr = T::from_f64_lossy(cfg.learning_rate);
    let mu = T::from_f64_lossy(cfg.momentum);
    let mut velocity = Gradients {
        conv: net
            .conv
            .iter()
            .map(|c| super::ParamGrad {
                weights: vec![T::zero(); c.weights.len()],
                biases: vec![T::zero(); c.filters],
            })
            .collect(),
        fc: net
            .fc
            .iter()
            .map(|f| super::ParamGrad {
                weights: vec![T::zero(); f.weights.len()],
                biases: vec![T::zero(); f.out_dim],
            })
            .collect(),
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch::<T>(chunk, shape)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(&batch, &labels)?;
            epoch_loss += loss * chunk.len() as f64;

            let conv = net.conv.iter_mut().map(|c| (c.weights.data_mut(), &mut c.biases[..]));
            let fc = net.fc.iter_mut().map(|f| (f.weights.data_mut(), &mut f.biases[..]));
            let params = conv.chain(fc);
            let steps = velocity.conv.iter_mut().chain(velocity.fc.iter_mut());
            let grads = grads.conv.iter().chain(&grads.fc);
            for (((w, b), v), g) in params.zip(steps).zip(grads) {
                sgd_step(w, &mut v.weights, &g.weights, lr, mu);
                sgd_step(b, &mut v.biases, &g.biases, lr, mu);
            }
        }
        report.loss_trace.push(epoch_loss / data.len() as f64);
    }
    Ok(report)
}

fn sgd_step<T: Scalar>(params: &mut [T], velocity: &mut [T], grad: &[T], lr: T, mu: T) {
    for ((p, v), &g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = mu * *v + g;
        *p = *p - lr * *v;
    }
}

/// Argmax class predictions for every sample in the view.
pub fn predict<T: Scalar>(
    net: &SequencerNet<T>,
    data: &SampleView<'_>,
    batch_size: usize,
) -> Result<Vec<usize>> {
    let shape = input_shape(net);
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.batch::<T>(chunk, shape)?;
        out.extend(net.forward(&batch)?.predictions());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchSpec, ConvSpec, InputSpec};

    #[test]
    fn rejects_empty_data_and_bad_config() {
        let arch = ArchSpec {
            input: InputSpec {
                channels: 1,
                height: 2,
                width: 2,
            },
            conv: vec![ConvSpec {
                filters: 1,
                kernel: (1, 1),
            }],
            fc: vec![2],
        };
        let mut net =
            SequencerNet::<f64>::init(&arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let empty = SampleView::default();
        assert!(matches!(
            train(&mut net, &empty, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
