#![allow(dead_code)]

use edrs::dna::{build_offspring_net, calibrate_alpha, synthesize_offspring, ProbabilisticDna, ProbabilityLaw};
use edrs::nn::{ArchSpec, ConvSpec, InputSpec, SequencerNet};
use edrs::tensor::Tensor;
use rand::Rng;

/// Random architecture with at most `max_params` parameters.
pub fn random_small_arch<R: Rng>(rng: &mut R, max_params: usize) -> ArchSpec {
    loop {
        let n_conv = rng.gen_range(1..=2);
        let side = [4usize, 8][rng.gen_range(0..2)].max(1 << n_conv);
        let channels = rng.gen_range(1..=2);
        let mut conv = Vec::new();
        for _ in 0..n_conv {
            let k = [1usize, 3, 5][rng.gen_range(0..3)];
            let kw = [1usize, 3][rng.gen_range(0..2)];
            conv.push(ConvSpec {
                filters: rng.gen_range(1..=4),
                kernel: (k, kw),
            });
        }
        let mut fc = Vec::new();
        if rng.gen_bool(0.5) {
            fc.push(rng.gen_range(2..=5));
        }
        fc.push(2);
        let arch = ArchSpec {
            input: InputSpec {
                channels,
                height: side,
                width: side,
            },
            conv,
            fc,
        };
        if arch.validate().is_ok() && param_count(&arch) <= max_params {
            return arch;
        }
    }
}

pub fn param_count(arch: &ArchSpec) -> usize {
    let mut n = 0;
    let mut c = arch.input.channels;
    for l in &arch.conv {
        n += l.filters * c * l.kernel.0 * l.kernel.1 + l.filters;
        c = l.filters;
    }
    let (h, w) = arch.final_spatial();
    let mut d = c * h * w;
    for &o in &arch.fc {
        n += d * o + o;
        d = o;
    }
    n
}

/// Random mask bits and dead filters; at least one filter per layer stays
/// alive.
pub fn randomize_masks<R: Rng>(net: &mut SequencerNet<f64>, rng: &mut R) {
    for layer in &mut net.conv {
        for m in &mut layer.mask {
            *m = rng.gen_bool(0.75);
        }
        for a in &mut layer.filter_alive {
            *a = rng.gen_bool(0.8);
        }
        if !layer.filter_alive.iter().any(|&a| a) {
            let f = rng.gen_range(0..layer.filters);
            layer.filter_alive[f] = true;
        }
        let per_filter = layer.synapses_per_filter();
        for (f, &alive) in layer.filter_alive.iter().enumerate() {
            if !alive {
                layer.mask[f * per_filter..(f + 1) * per_filter].fill(false);
            }
        }
    }
    for layer in &mut net.fc {
        for a in &mut layer.input_alive {
            *a = rng.gen_bool(0.9);
        }
    }
}

pub fn random_batch<R: Rng>(net: &SequencerNet<f64>, batch: usize, rng: &mut R) -> Tensor<f64> {
    let (c, h, w) = (net.input.channels, net.input.height, net.input.width);
    let data = (0..batch * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[batch, c, h, w], data).unwrap()
}

/// Logits of one sample by explicit loops over the definition: same-padded
/// convolution with masked weights, ReLU, 2x2 max-pool, then dense layers.
pub fn direct_forward(net: &SequencerNet<f64>, image: &[f64]) -> Vec<f64> {
    let (mut c, mut h, mut w) = (net.input.channels, net.input.height, net.input.width);
    let mut x = image.to_vec();
    for layer in &net.conv {
        let (kh, kw) = layer.kernel;
        let (ph, pw) = (kh / 2, kw / 2);
        let mut y = vec![0.0; layer.filters * h * w];
        for f in 0..layer.filters {
            if !layer.filter_alive[f] {
                continue;
            }
            for r in 0..h {
                for col in 0..w {
                    let mut s = layer.biases[f];
                    for ch in 0..c {
                        for a in 0..kh {
                            for b in 0..kw {
                                let (ir, ic) = (r + a, col + b);
                                if ir < ph || ic < pw || ir - ph >= h || ic - pw >= w {
                                    continue;
                                }
                                let idx = ((f * c + ch) * kh + a) * kw + b;
                                if layer.mask[idx] {
                                    s += layer.weights.data()[idx]
                                        * x[(ch * h + ir - ph) * w + ic - pw];
                                }
                            }
                        }
                    }
                    y[(f * h + r) * w + col] = s.max(0.0);
                }
            }
        }
        let (h2, w2) = (h / 2, w / 2);
        let mut p = vec![0.0; layer.filters * h2 * w2];
        for f in 0..layer.filters {
            for r in 0..h2 {
                for col in 0..w2 {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..2 {
                        for b in 0..2 {
                            m = m.max(y[(f * h + 2 * r + a) * w + 2 * col + b]);
                        }
                    }
                    p[(f * h2 + r) * w2 + col] = m;
                }
            }
        }
        x = p;
        c = layer.filters;
        h = h2;
        w = w2;
    }
    for (i, layer) in net.fc.iter().enumerate() {
        let mut out = layer.biases.clone();
        for (o, v) in out.iter_mut().enumerate() {
            for j in 0..layer.in_dim {
                if layer.input_alive[j] {
                    *v += layer.weights.data()[o * layer.in_dim + j] * x[j];
                }
            }
        }
        if i + 1 < net.fc.len() {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        x = out;
    }
    x
}

/// Central-difference derivative of the mean batch loss with respect to
/// every parameter, in the same layout as `Gradients`.
pub fn finite_difference(
    net: &SequencerNet<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    step: f64,
) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<(Vec<f64>, Vec<f64>)>) {
    let mut probe = net.clone();
    let mut diff = |get: &dyn Fn(&mut SequencerNet<f64>) -> &mut f64| -> f64 {
        let orig = *get(&mut probe);
        *get(&mut probe) = orig + step;
        let up = probe.loss(batch, labels).unwrap();
        *get(&mut probe) = orig - step;
        let down = probe.loss(batch, labels).unwrap();
        *get(&mut probe) = orig;
        (up - down) / (2.0 * step)
    };
    let mut conv = Vec::new();
    for l in 0..net.conv.len() {
        let w = (0..net.conv[l].weights.len())
            .map(|i| diff(&|n| &mut n.conv[l].weights.data_mut()[i]))
            .collect();
        let b = (0..net.conv[l].biases.len())
            .map(|i| diff(&|n| &mut n.conv[l].biases[i]))
            .collect();
        conv.push((w, b));
    }
    let mut fc = Vec::new();
    for l in 0..net.fc.len() {
        let w = (0..net.fc[l].weights.len())
            .map(|i| diff(&|n| &mut n.fc[l].weights.data_mut()[i]))
            .collect();
        let b = (0..net.fc[l].biases.len())
            .map(|i| diff(&|n| &mut n.fc[l].biases[i]))
            .collect();
        fc.push((w, b));
    }
    (conv, fc)
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps exact zeros from
/// turning round-off into unbounded relative error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and numeric gradients of a
/// random net, plus the number of entries compared.
pub fn gradient_check<R: Rng>(rng: &mut R) -> (f64, usize) {
    let arch = random_small_arch(rng, 500);
    let mut net = SequencerNet::<f64>::init(&arch, rng).unwrap();
    for layer in &mut net.conv {
        layer.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
    }
    randomize_masks(&mut net, rng);
    let batch = random_batch(&net, 3, rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..2)).collect();
    let (_, grads) = net.loss_and_gradients(&batch, &labels).unwrap();
    let (conv, fc) = finite_difference(&net, &batch, &labels, 1e-5);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let pairs = grads.conv.iter().zip(&conv).chain(grads.fc.iter().zip(&fc));
    for (g, (w, b)) in pairs {
        for (a, e) in g.weights.iter().zip(w).chain(g.biases.iter().zip(b)) {
            worst = worst.max(rel_err(*a, *e));
            n += 1;
        }
    }
    (worst, n)
}

/// Evolves `generations` offspring from `net` without training.
pub fn evolve_untrained(
    mut net: SequencerNet<f64>,
    generations: usize,
    seed: u64,
) -> SequencerNet<f64> {
    for g in 0..generations {
        let dna = ProbabilisticDna::from_ancestor(&net, ProbabilityLaw::Exponential);
        let env = calibrate_alpha(&dna, 0.8, net.count_active_synapses()).unwrap();
        let outcome = synthesize_offspring(&net, &env, &dna, seed.wrapping_mul(31).wrapping_add(g as u64));
        net = build_offspring_net(&net, &outcome).unwrap();
    }
    net
}

/// Largest absolute difference between masked-dense and shrunk logits.
pub fn shrunk_gap(net: &SequencerNet<f64>, batch: &Tensor<f64>) -> f64 {
    let dense = net.forward(batch).unwrap();
    let small = net.shrunk().forward(batch).unwrap();
    dense
        .logits()
        .data()
        .iter()
        .zip(small.logits().data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
