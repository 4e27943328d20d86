use crate::error::{Error, Result};
use crate::scalar::{MatRef, Scalar};
use crate::tensor::Tensor;

use super::{ConvLayer, SequencerNet};

// Conv activations are kept channel-major, `[C, B, H, W]`, so that one GEMM
// covers the whole batch per layer.

struct ConvCache<T> {
    height: usize,
    width: usize,
    cols: Vec<T>,
    weights: Vec<T>,
    activated: Vec<T>,
    argmax: Vec<usize>,
    pooled: Vec<T>,
}

struct FcCache<T> {
    weights: Vec<T>,
    input: Vec<T>,
    pre: Vec<T>,
}

/// Activations retained from one forward pass, needed for backprop and
/// sequence extraction.
pub struct ForwardPass<T> {
    batch: usize,
    conv: Vec<ConvCache<T>>,
    fc: Vec<FcCache<T>>,
    logits: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

/// Gradients with the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub conv: Vec<ParamGrad<T>>,
    pub fc: Vec<ParamGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn norm(&self) -> f64 {
        self.conv
            .iter()
            .chain(&self.fc)
            .flat_map(|g| g.weights.iter().chain(&g.biases))
            .map(|v| v.to_f64_lossy().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Scalar> ForwardPass<T> {
    pub fn logits(&self) -> &Tensor<T> {
        &self.logits
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Post-pool output of conv stage `layer` as `[B, F, h, w]`.
    pub fn conv_output(&self, layer: usize) -> Tensor<T> {
        let cache = &self.conv[layer];
        let (h, w) = (cache.height / 2, cache.width / 2);
        let filters = cache.pooled.len() / (self.batch * h * w);
        let plane = h * w;
        let mut out = vec![T::zero(); cache.pooled.len()];
        for f in 0..filters {
            for b in 0..self.batch {
                let src = (f * self.batch + b) * plane;
                let dst = (b * filters + f) * plane;
                out[dst..dst + plane].copy_from_slice(&cache.pooled[src..src + plane]);
            }
        }
        Tensor::from_vec(&[self.batch, filters, h, w], out).expect("conv output shape")
    }

    /// Flattened last-conv output per sample, `[B, F * h * w]`.
    pub fn features(&self) -> Tensor<T> {
        let out = self.conv_output(self.conv.len() - 1);
        let b = out.shape()[0];
        let len = out.len() / b;
        Tensor::from_vec(&[b, len], out.into_data()).expect("feature shape")
    }

    /// Class predictions by argmax over the logits.
    pub fn predictions(&self) -> Vec<usize> {
        let classes = self.logits.shape()[1];
        self.logits
            .data()
            .chunks(classes)
            .map(|row| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

fn im2col<T: Scalar>(
    input: &[T],
    channels: usize,
    batch: usize,
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    cols: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let n = batch * h * w;
    for c in 0..channels {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &mut cols[((c * kh + dy) * kw + dx) * n..][..n];
                for b in 0..batch {
                    let plane = &input[(c * batch + b) * h * w..][..h * w];
                    for y in 0..h {
                        let dst = &mut row[(b * h + y) * w..][..w];
                        let sy = y as isize + dy as isize - ph as isize;
                        if sy < 0 || sy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * w..][..w];
                        let shift = dx as isize - pw as isize;
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x as isize + shift;
                            *d = if sx < 0 || sx >= w as isize {
                                T::zero()
                            } else {
                                src[sx as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(
    cols: &[T],
    channels: usize,
    batch: usize,
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    out: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let n = batch * h * w;
    out.fill(T::zero());
    for c in 0..channels {
        for dy in 0..kh {
            for dx in 0..kw {
                let row = &cols[((c * kh + dy) * kw + dx) * n..][..n];
                for b in 0..batch {
                    let plane = &mut out[(c * batch + b) * h * w..][..h * w];
                    for y in 0..h {
                        let sy = y as isize + dy as isize - ph as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &row[(b * h + y) * w..][..w];
                        let dst = &mut plane[sy as usize * w..][..w];
                        let shift = dx as isize - pw as isize;
                        for (x, &v) in src.iter().enumerate() {
                            let sx = x as isize + shift;
                            if sx >= 0 && sx < w as isize {
                                dst[sx as usize] = dst[sx as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Scalar>(
    layer: &ConvLayer<T>,
    input: &[T],
    batch: usize,
    (h, w): (usize, usize),
) -> ConvCache<T> {
    let k = layer.synapses_per_filter();
    let n = batch * h * w;
    let mut cols = vec![T::zero(); k * n];
    im2col(input, layer.in_channels, batch, (h, w), layer.kernel, &mut cols);
    let weights = layer.effective_weights();
    let biases = layer.effective_biases();
    let mut activated = vec![T::zero(); layer.filters * n];
    T::gemm(
        MatRef::new(&weights, layer.filters, k),
        MatRef::new(&cols, k, n),
        T::zero(),
        &mut activated,
    );
    for (row, &b) in activated.chunks_mut(n).zip(&biases) {
        for v in row {
            let z = *v + b;
            *v = if z > T::zero() { z } else { T::zero() };
        }
    }
    let (oh, ow) = (h / 2, w / 2);
    let planes = layer.filters * batch;
    let mut pooled = vec![T::zero(); planes * oh * ow];
    let mut argmax = vec![0usize; pooled.len()];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if activated[idx] > activated[best] {
                        best = idx;
                    }
                }
                let o = (p * oh + y) * ow + x;
                pooled[o] = activated[best];
                argmax[o] = best;
            }
        }
    }
    ConvCache {
        height: h,
        width: w,
        cols,
        weights,
        activated,
        argmax,
        pooled,
    }
}

impl<T: Scalar> SequencerNet<T> {
    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let want = [self.input.channels, self.input.height, self.input.width];
        let shape = batch.shape();
        if shape.len() != 4 || shape[1..] != want || shape[0] == 0 {
            return Err(Error::shape(format!(
                "batch must be [B >= 1, {}, {}, {}], got {shape:?}",
                want[0], want[1], want[2]
            )));
        }
        Ok(shape[0])
    }

    /// Runs the network on a `[B, C, H, W]` batch.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<ForwardPass<T>> {
        let b = self.check_batch(batch)?;
        let (c, h, w) = (self.input.channels, self.input.height, self.input.width);
        // NCHW -> CNHW
        let mut x = vec![T::zero(); batch.len()];
        for s in 0..b {
            for ch in 0..c {
                let src = &batch.data()[(s * c + ch) * h * w..][..h * w];
                x[(ch * b + s) * h * w..][..h * w].copy_from_slice(src);
            }
        }

        let mut conv = Vec::with_capacity(self.conv.len());
        let (mut hh, mut ww) = (h, w);
        for layer in &self.conv {
            let cache = conv_forward(layer, &x, b, (hh, ww));
            x = cache.pooled.clone();
            hh /= 2;
            ww /= 2;
            conv.push(cache);
        }

        // CNHW -> [B, C*h*w]
        let last = self.conv.last().expect("at least one conv layer");
        let plane = hh * ww;
        let feat = last.filters * plane;
        let mut input = vec![T::zero(); b * feat];
        for f in 0..last.filters {
            for s in 0..b {
                input[s * feat + f * plane..][..plane]
                    .copy_from_slice(&x[(f * b + s) * plane..][..plane]);
            }
        }

        let mut fc = Vec::with_capacity(self.fc.len());
        for (i, layer) in self.fc.iter().enumerate() {
            let weights = layer.effective_weights();
            let mut pre = vec![T::zero(); b * layer.out_dim];
            T::gemm(
                MatRef::new(&input, b, layer.in_dim),
                MatRef::t(&weights, layer.out_dim, layer.in_dim),
                T::zero(),
                &mut pre,
            );
            for row in pre.chunks_mut(layer.out_dim) {
                for (v, &bias) in row.iter_mut().zip(&layer.biases) {
                    *v = *v + bias;
                }
            }
            let next = if i + 1 < self.fc.len() {
                pre.iter()
                    .map(|&v| if v > T::zero() { v } else { T::zero() })
                    .collect()
            } else {
                pre.clone()
            };
            fc.push(FcCache {
                weights,
                input,
                pre,
            });
            input = next;
        }
        let logits = Tensor::from_vec(&[b, self.n_classes()], input)?;
        Ok(ForwardPass {
            batch: b,
            conv,
            fc,
            logits,
        })
    }

    /// Mean softmax cross-entropy and its gradients for a completed forward pass.
    pub fn backward(&self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<(f64, Gradients<T>)> {
        let b = pass.batch;
        if labels.len() != b {
            return Err(Error::shape(format!(
                "{} labels for a batch of {b}",
                labels.len()
            )));
        }
        let classes = self.n_classes();
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes.min(2)) {
            return Err(Error::InvalidLabel { index, label });
        }

        let scale = T::from_f64_lossy(1.0 / b as f64);
        let mut loss = 0.0;
        let mut delta = pass.logits.data().to_vec();
        for (row, &y) in delta.chunks_mut(classes).zip(labels) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
            loss -= row[y].to_f64_lossy().max(f64::MIN_POSITIVE).ln();
            row[y] = row[y] - T::one();
            row.iter_mut().for_each(|v| *v = *v * scale);
        }
        loss /= b as f64;

        let mut fc_grads = Vec::with_capacity(self.fc.len());
        for (i, layer) in self.fc.iter().enumerate().rev() {
            let cache = &pass.fc[i];
            let mut dw = vec![T::zero(); layer.out_dim * layer.in_dim];
            T::gemm(
                MatRef::t(&delta, b, layer.out_dim),
                MatRef::new(&cache.input, b, layer.in_dim),
                T::zero(),
                &mut dw,
            );
            for row in dw.chunks_mut(layer.in_dim) {
                for (v, &a) in row.iter_mut().zip(&layer.input_alive) {
                    if !a {
                        *v = T::zero();
                    }
                }
            }
            let mut db = vec![T::zero(); layer.out_dim];
            for row in delta.chunks(layer.out_dim) {
                for (g, &d) in db.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            let mut dx = vec![T::zero(); b * layer.in_dim];
            T::gemm(
                MatRef::new(&delta, b, layer.out_dim),
                MatRef::new(&cache.weights, layer.out_dim, layer.in_dim),
                T::zero(),
                &mut dx,
            );
            if i > 0 {
                for (d, &z) in dx.iter_mut().zip(&pass.fc[i - 1].pre) {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            fc_grads.push(ParamGrad {
                weights: dw,
                biases: db,
            });
            delta = dx;
        }
        fc_grads.reverse();

        // [B, C*h*w] -> CNHW
        let last = self.conv.last().expect("at least one conv layer");
        let (fh, fw) = self.final_spatial();
        let plane = fh * fw;
        let feat = last.filters * plane;
        let mut dpooled = vec![T::zero(); delta.len()];
        for f in 0..last.filters {
            for s in 0..b {
                dpooled[(f * b + s) * plane..][..plane]
                    .copy_from_slice(&delta[s * feat + f * plane..][..plane]);
            }
        }

        let mut conv_grads = Vec::with_capacity(self.conv.len());
        for (i, layer) in self.conv.iter().enumerate().rev() {
            let cache = &pass.conv[i];
            let (h, w) = (cache.height, cache.width);
            let n = b * h * w;
            let k = layer.synapses_per_filter();
            let mut dz = vec![T::zero(); cache.activated.len()];
            for (&idx, &g) in cache.argmax.iter().zip(&dpooled) {
                if cache.activated[idx] > T::zero() {
                    dz[idx] = dz[idx] + g;
                }
            }
            let mut dw = vec![T::zero(); layer.filters * k];
            T::gemm(
                MatRef::new(&dz, layer.filters, n),
                MatRef::t(&cache.cols, k, n),
                T::zero(),
                &mut dw,
            );
            for (v, &m) in dw.iter_mut().zip(&layer.mask) {
                if !m {
                    *v = T::zero();
                }
            }
            let db = dz
                .chunks(n)
                .zip(&layer.filter_alive)
                .map(|(row, &alive)| {
                    if alive {
                        row.iter().fold(T::zero(), |acc, &v| acc + v)
                    } else {
                        T::zero()
                    }
                })
                .collect();
            if i > 0 {
                let mut dcols = vec![T::zero(); k * n];
                T::gemm(
                    MatRef::t(&cache.weights, layer.filters, k),
                    MatRef::new(&dz, layer.filters, n),
                    T::zero(),
                    &mut dcols,
                );
                let mut dx = vec![T::zero(); layer.in_channels * n];
                col2im(&dcols, layer.in_channels, b, (h, w), layer.kernel, &mut dx);
                dpooled = dx;
            }
            conv_grads.push(ParamGrad {
                weights: dw,
                biases: db,
            });
        }
        conv_grads.reverse();

        Ok((
            loss,
            Gradients {
                conv: conv_grads,
                fc: fc_grads,
            },
        ))
    }

    /// Forward + backward in one call.
    pub fn loss_and_gradients(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<(f64, Gradients<T>)> {
        let pass = self.forward(batch)?;
        self.backward(&pass, labels)
    }

    /// Mean cross-entropy without computing gradients.
    pub fn loss(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let pass = self.forward(batch)?;
        let classes = self.n_classes();
        if labels.len() != pass.batch {
            return Err(Error::shape("label count differs from batch size"));
        }
        let mut total = 0.0;
        for (row, &y) in pass.logits.data().chunks(classes).zip(labels) {
            if y >= classes {
                return Err(Error::InvalidLabel {
                    index: 0,
                    label: y,
                });
            }
            let row: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        Ok(total / pass.batch as f64)
    }
}
