//! Dense convolutional network core with per-synapse masks.
//!
//! A [`SequencerNet`] is a chain of `conv -> ReLU -> 2x2 max-pool` stages
//! followed by fully-connected layers (ReLU between them, raw logits at the
//! end). Every conv weight carries a mask bit; the forward pass uses
//! `weights * mask`, and gradients of masked-out synapses are zero, so a
//! pruned synapse never contributes and never revives.

mod forward;
mod timing;
mod train;

pub use forward::{ForwardPass, Gradients, ParamGrad};
pub use timing::{time_forward, ForwardTiming};
pub use train::{predict, train, SampleView, TrainConfig, TrainReport};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shape of one input sample (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: (usize, usize),
}

/// Layer sizes used to build a fresh, fully dense network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub input: InputSpec,
    pub conv: Vec<ConvSpec>,
    /// Output width of each fully-connected layer; the last one is the class count.
    pub fc: Vec<usize>,
}

impl ArchSpec {
    /// Spatial size of the last conv stage's pooled output.
    pub fn final_spatial(&self) -> (usize, usize) {
        let shift = self.conv.len() as u32;
        (self.input.height >> shift, self.input.width >> shift)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.is_empty() || self.fc.is_empty() {
            return Err(Error::Config(
                "architecture needs at least one conv and one fc layer".into(),
            ));
        }
        let (mut h, mut w) = (self.input.height, self.input.width);
        for (i, c) in self.conv.iter().enumerate() {
            if c.filters == 0 || c.kernel.0 % 2 == 0 || c.kernel.1 % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv layer {i}: need >= 1 filter and odd kernel, got {c:?}"
                )));
            }
            if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
                return Err(Error::Config(format!(
                    "conv layer {i}: spatial size {h}x{w} cannot be 2x2 pooled"
                )));
            }
            h /= 2;
            w /= 2;
        }
        if self.fc.contains(&0) {
            return Err(Error::Config("fc layers need non-zero width".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    /// `[filters, in_channels, kh, kw]`
    pub weights: Tensor<T>,
    pub biases: Vec<T>,
    /// One bit per weight, same layout as `weights`.
    pub mask: Vec<bool>,
    pub filter_alive: Vec<bool>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn dense(filters: usize, in_channels: usize, kernel: (usize, usize)) -> Self {
        let n = filters * in_channels * kernel.0 * kernel.1;
        ConvLayer {
            filters,
            in_channels,
            kernel,
            weights: Tensor::zeros(&[filters, in_channels, kernel.0, kernel.1]),
            biases: vec![T::zero(); filters],
            mask: vec![true; n],
            filter_alive: vec![true; filters],
        }
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Synapses owned by one filter (`in_channels * kh * kw`).
    pub fn synapses_per_filter(&self) -> usize {
        self.in_channels * self.kernel_area()
    }

    pub fn active_synapses(&self) -> u64 {
        self.mask.iter().filter(|&&m| m).count() as u64
    }

    pub fn alive_filters(&self) -> usize {
        self.filter_alive.iter().filter(|&&a| a).count()
    }

    pub fn filter_mask(&self, f: usize) -> &[bool] {
        let n = self.synapses_per_filter();
        &self.mask[f * n..(f + 1) * n]
    }

    pub fn filter_weights(&self, f: usize) -> &[T] {
        let n = self.synapses_per_filter();
        &self.weights.data()[f * n..(f + 1) * n]
    }

    pub fn effective_weights(&self) -> Vec<T> {
        self.weights
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&w, &m)| if m { w } else { T::zero() })
            .collect()
    }

    pub fn effective_biases(&self) -> Vec<T> {
        self.biases
            .iter()
            .zip(&self.filter_alive)
            .map(|(&b, &a)| if a { b } else { T::zero() })
            .collect()
    }

    /// Zeroes stored weights at masked positions and biases of dead filters.
    pub fn zero_pruned(&mut self) {
        for (w, &m) in self.weights.data_mut().iter_mut().zip(&self.mask) {
            if !m {
                *w = T::zero();
            }
        }
        for (b, &a) in self.biases.iter_mut().zip(&self.filter_alive) {
            if !a {
                *b = T::zero();
            }
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        let n = self.filters * self.synapses_per_filter();
        if self.weights.shape()
            != [self.filters, self.in_channels, self.kernel.0, self.kernel.1]
            || self.mask.len() != n
            || self.biases.len() != self.filters
            || self.filter_alive.len() != self.filters
        {
            return Err(Error::shape(format!(
                "conv layer {index}: inconsistent parameter shapes"
            )));
        }
        for f in 0..self.filters {
            if !self.filter_alive[f] && self.filter_mask(f).iter().any(|&m| m) {
                return Err(Error::shape(format!(
                    "conv layer {index}: dead filter {f} still has active synapses"
                )));
            }
        }
        if self.alive_filters() == 0 {
            return Err(Error::shape(format!("conv layer {index}: no alive filter")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim, in_dim]`
    pub weights: Tensor<T>,
    pub biases: Vec<T>,
    /// Input features that are frozen at zero weight (dead upstream filters).
    pub input_alive: Vec<bool>,
}

impl<T: Scalar> FcLayer<T> {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        FcLayer {
            in_dim,
            out_dim,
            weights: Tensor::zeros(&[out_dim, in_dim]),
            biases: vec![T::zero(); out_dim],
            input_alive: vec![true; in_dim],
        }
    }

    pub fn effective_weights(&self) -> Vec<T> {
        let mut w = self.weights.data().to_vec();
        for row in w.chunks_mut(self.in_dim) {
            for (v, &a) in row.iter_mut().zip(&self.input_alive) {
                if !a {
                    *v = T::zero();
                }
            }
        }
        w
    }

    pub fn zero_pruned(&mut self) {
        let in_dim = self.in_dim;
        let alive = &self.input_alive;
        for row in self.weights.data_mut().chunks_mut(in_dim) {
            for (v, &a) in row.iter_mut().zip(alive) {
                if !a {
                    *v = T::zero();
                }
            }
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        if self.weights.shape() != [self.out_dim, self.in_dim]
            || self.biases.len() != self.out_dim
            || self.input_alive.len() != self.in_dim
        {
            return Err(Error::shape(format!(
                "fc layer {index}: inconsistent parameter shapes"
            )));
        }
        Ok(())
    }
}

/// A radiomic sequencer at one generation: conv stages, classifier head,
/// and the masks that define which synapses exist.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencerNet<T> {
    pub input: InputSpec,
    pub conv: Vec<ConvLayer<T>>,
    pub fc: Vec<FcLayer<T>>,
    pub generation: u32,
}

fn glorot<T: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, out: &mut [T], rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = T::from_f64_lossy(rng.gen_range(-limit..=limit));
    }
}

impl<T: Scalar> SequencerNet<T> {
    /// Builds a dense generation-1 network with Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &ArchSpec, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut conv = Vec::with_capacity(arch.conv.len());
        let mut channels = arch.input.channels;
        for spec in &arch.conv {
            let mut layer = ConvLayer::dense(spec.filters, channels, spec.kernel);
            let area = layer.kernel_area();
            glorot(
                channels * area,
                spec.filters * area,
                layer.weights.data_mut(),
                rng,
            );
            channels = spec.filters;
            conv.push(layer);
        }
        let (h, w) = arch.final_spatial();
        let mut in_dim = channels * h * w;
        let mut fc = Vec::with_capacity(arch.fc.len());
        for &out_dim in &arch.fc {
            let mut layer = FcLayer::dense(in_dim, out_dim);
            glorot(in_dim, out_dim, layer.weights.data_mut(), rng);
            in_dim = out_dim;
            fc.push(layer);
        }
        let net = SequencerNet {
            input: arch.input,
            conv,
            fc,
            generation: 1,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            input: self.input,
            conv: self
                .conv
                .iter()
                .map(|c| ConvSpec {
                    filters: c.filters,
                    kernel: c.kernel,
                })
                .collect(),
            fc: self.fc.iter().map(|f| f.out_dim).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch().validate()?;
        let mut channels = self.input.channels;
        for (i, layer) in self.conv.iter().enumerate() {
            if layer.in_channels != channels {
                return Err(Error::shape(format!(
                    "conv layer {i} expects {} input channels, previous stage yields {channels}",
                    layer.in_channels
                )));
            }
            layer.check(i)?;
            channels = layer.filters;
        }
        let mut dim = self.feature_len();
        for (i, layer) in self.fc.iter().enumerate() {
            if layer.in_dim != dim {
                return Err(Error::shape(format!(
                    "fc layer {i} expects {} inputs, previous stage yields {dim}",
                    layer.in_dim
                )));
            }
            layer.check(i)?;
            dim = layer.out_dim;
        }
        Ok(())
    }

    /// Spatial size of the last conv stage's pooled output.
    pub fn final_spatial(&self) -> (usize, usize) {
        let shift = self.conv.len() as u32;
        (self.input.height >> shift, self.input.width >> shift)
    }

    /// Length of the flattened last-conv output, dead filters included.
    pub fn feature_len(&self) -> usize {
        let (h, w) = self.final_spatial();
        self.conv.last().map_or(0, |c| c.filters) * h * w
    }

    pub fn n_classes(&self) -> usize {
        self.fc.last().map_or(0, |f| f.out_dim)
    }

    /// Conv-layer synapses with a set mask bit. FC weights are not counted.
    pub fn count_active_synapses(&self) -> u64 {
        self.conv.iter().map(ConvLayer::active_synapses).sum()
    }

    pub fn total_conv_synapses(&self) -> u64 {
        self.conv.iter().map(|c| c.mask.len() as u64).sum()
    }

    pub fn alive_filters(&self) -> Vec<usize> {
        self.conv.iter().map(ConvLayer::alive_filters).collect()
    }

    pub fn cast<U: Scalar>(&self) -> SequencerNet<U> {
        SequencerNet {
            input: self.input,
            conv: self
                .conv
                .iter()
                .map(|c| ConvLayer {
                    filters: c.filters,
                    in_channels: c.in_channels,
                    kernel: c.kernel,
                    weights: c.weights.cast(),
                    biases: cast_vec(&c.biases),
                    mask: c.mask.clone(),
                    filter_alive: c.filter_alive.clone(),
                })
                .collect(),
            fc: self
                .fc
                .iter()
                .map(|f| FcLayer {
                    in_dim: f.in_dim,
                    out_dim: f.out_dim,
                    weights: f.weights.cast(),
                    biases: cast_vec(&f.biases),
                    input_alive: f.input_alive.clone(),
                })
                .collect(),
            generation: self.generation,
        }
    }

    /// Zeroes every stored parameter that the masks exclude.
    pub fn zero_pruned(&mut self) {
        self.conv.iter_mut().for_each(ConvLayer::zero_pruned);
        self.fc.iter_mut().for_each(FcLayer::zero_pruned);
    }

    /// Physically removes dead filters, the input channels they fed, and the
    /// classifier inputs of dead last-stage filters. The result computes the
    /// same function with smaller dense kernels.
    pub fn shrunk(&self) -> SequencerNet<T> {
        let mut conv = Vec::with_capacity(self.conv.len());
        let mut kept_inputs: Vec<usize> = (0..self.input.channels).collect();
        for layer in &self.conv {
            let kept: Vec<usize> = (0..layer.filters)
                .filter(|&f| layer.filter_alive[f])
                .collect();
            let area = layer.kernel_area();
            let per_filter = layer.synapses_per_filter();
            let mut weights = Vec::with_capacity(kept.len() * kept_inputs.len() * area);
            let mut mask = Vec::with_capacity(weights.capacity());
            for &f in &kept {
                for &c in &kept_inputs {
                    let start = f * per_filter + c * area;
                    weights.extend_from_slice(&layer.weights.data()[start..start + area]);
                    mask.extend_from_slice(&layer.mask[start..start + area]);
                }
            }
            conv.push(ConvLayer {
                filters: kept.len(),
                in_channels: kept_inputs.len(),
                kernel: layer.kernel,
                weights: Tensor::from_vec(
                    &[kept.len(), kept_inputs.len(), layer.kernel.0, layer.kernel.1],
                    weights,
                )
                .expect("gathered weights match shape"),
                biases: kept.iter().map(|&f| layer.biases[f]).collect(),
                mask,
                filter_alive: vec![true; kept.len()],
            });
            kept_inputs = kept;
        }
        let (h, w) = self.final_spatial();
        let positions = h * w;
        let kept_features: Vec<usize> = kept_inputs
            .iter()
            .flat_map(|&f| (0..positions).map(move |p| f * positions + p))
            .collect();
        let mut fc = self.fc.clone();
        if let Some(first) = fc.first_mut() {
            let old = &self.fc[0];
            let mut weights = Vec::with_capacity(old.out_dim * kept_features.len());
            for o in 0..old.out_dim {
                let row = &old.weights.data()[o * old.in_dim..(o + 1) * old.in_dim];
                weights.extend(kept_features.iter().map(|&i| row[i]));
            }
            first.in_dim = kept_features.len();
            first.weights = Tensor::from_vec(&[old.out_dim, kept_features.len()], weights)
                .expect("gathered weights match shape");
            first.input_alive = kept_features.iter().map(|&i| old.input_alive[i]).collect();
        }
        SequencerNet {
            input: self.input,
            conv,
            fc,
            generation: self.generation,
        }
    }

    /// Inverse of [`shrunk`](Self::shrunk): writes the parameters of a
    /// shrunk copy of this network back into their original positions.
    pub fn scatter_from_shrunk(&mut self, small: &SequencerNet<T>) -> Result<()> {
        if small.conv.len() != self.conv.len() || small.fc.len() != self.fc.len() {
            return Err(Error::shape("shrunk network has a different layer count"));
        }
        let mut kept_inputs: Vec<usize> = (0..self.input.channels).collect();
        for (layer, s) in self.conv.iter_mut().zip(&small.conv) {
            let kept: Vec<usize> = (0..layer.filters).filter(|&f| layer.filter_alive[f]).collect();
            if s.filters != kept.len() || s.in_channels != kept_inputs.len() {
                return Err(Error::shape("shrunk conv layer does not match alive filters"));
            }
            let area = layer.kernel_area();
            let per_filter = layer.synapses_per_filter();
            let src = s.weights.data();
            let mut k = 0;
            for (i, &f) in kept.iter().enumerate() {
                for &c in &kept_inputs {
                    let start = f * per_filter + c * area;
                    layer.weights.data_mut()[start..start + area].copy_from_slice(&src[k..k + area]);
                    k += area;
                }
                layer.biases[f] = s.biases[i];
            }
            kept_inputs = kept;
        }
        let (h, w) = self.final_spatial();
        let positions = h * w;
        for (idx, (layer, s)) in self.fc.iter_mut().zip(&small.fc).enumerate() {
            if idx == 0 {
                if s.in_dim != kept_inputs.len() * positions || s.out_dim != layer.out_dim {
                    return Err(Error::shape("shrunk FC layer does not match alive features"));
                }
                let in_dim = layer.in_dim;
                let dst = layer.weights.data_mut();
                for o in 0..s.out_dim {
                    let row = &s.weights.data()[o * s.in_dim..(o + 1) * s.in_dim];
                    let mut j = 0;
                    for &f in &kept_inputs {
                        let base = o * in_dim + f * positions;
                        dst[base..base + positions].copy_from_slice(&row[j..j + positions]);
                        j += positions;
                    }
                }
                layer.biases.clone_from(&s.biases);
            } else {
                if s.weights.shape() != layer.weights.shape() {
                    return Err(Error::shape("shrunk FC layer shape mismatch"));
                }
                layer.clone_from(s);
            }
        }
        Ok(())
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect()
}
