//! Probabilistic DNA, environmental-factor calibration and offspring
//! synthesis.
//!
//! A conv filter is a cluster of synapses. Each cluster and each synapse
//! gets a survival probability that grows with the ancestor's trained weight
//! magnitude. One global scale `alpha` (probabilities clamped at 1) is tuned
//! so that the expected number of surviving synapses meets the retain
//! budget; offspring masks are then drawn as independent Bernoulli trials,
//! filter first and member synapses second.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SequencerNet;
use crate::scalar::Scalar;

/// Maps a weight magnitude relative to the layer maximum to a probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbabilityLaw {
    /// `exp(|w| / Z - 1)`, in `[1/e, 1]`
    #[default]
    Exponential,
    /// `|w| / Z`
    Linear,
}

impl ProbabilityLaw {
    pub fn apply(self, relative: f64) -> f64 {
        match self {
            ProbabilityLaw::Exponential => (relative - 1.0).exp(),
            ProbabilityLaw::Linear => relative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGeometry {
    pub filters: usize,
    pub in_channels: usize,
    pub kernel_area: usize,
}

impl LayerGeometry {
    pub fn synapses_per_filter(&self) -> usize {
        self.in_channels * self.kernel_area
    }
}

/// Survival probabilities of one conv layer's filters and synapses.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDna {
    pub geometry: LayerGeometry,
    pub cluster_probs: Vec<f64>,
    /// Same layout as the layer's weights.
    pub synapse_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticDna {
    pub layers: Vec<LayerDna>,
}

fn layer_max_abs<T: Scalar>(weights: &[T], mask: &[bool]) -> f64 {
    weights
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(w, _)| w.to_f64_lossy().abs())
        .fold(0.0, f64::max)
}

/// Per-synapse probabilities, `law(|w| / Z)` for active synapses where `Z`
/// is the layer's largest active magnitude; zero for inactive synapses and
/// for layers whose active weights are all zero.
pub fn compute_synapse_probs<T: Scalar>(
    ancestor: &SequencerNet<T>,
    law: ProbabilityLaw,
) -> Vec<Vec<f64>> {
    ancestor
        .conv
        .iter()
        .map(|layer| {
            let z = layer_max_abs(layer.weights.data(), &layer.mask);
            layer
                .weights
                .data()
                .iter()
                .zip(&layer.mask)
                .map(|(w, &m)| {
                    if !m || z == 0.0 {
                        0.0
                    } else {
                        law.apply(w.to_f64_lossy().abs() / z)
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-filter probabilities, `law(m_c / Z)` with `m_c` the mean magnitude of
/// the filter's active synapses; zero for filters without active synapses.
pub fn compute_cluster_probs<T: Scalar>(
    ancestor: &SequencerNet<T>,
    law: ProbabilityLaw,
) -> Vec<Vec<f64>> {
    ancestor
        .conv
        .iter()
        .map(|layer| {
            let z = layer_max_abs(layer.weights.data(), &layer.mask);
            (0..layer.filters)
                .map(|f| {
                    let (sum, n) = layer
                        .filter_weights(f)
                        .iter()
                        .zip(layer.filter_mask(f))
                        .filter(|(_, &m)| m)
                        .fold((0.0, 0usize), |(s, n), (w, _)| {
                            (s + w.to_f64_lossy().abs(), n + 1)
                        });
                    if n == 0 || z == 0.0 || !layer.filter_alive[f] {
                        0.0
                    } else {
                        law.apply(sum / n as f64 / z)
                    }
                })
                .collect()
        })
        .collect()
}

impl ProbabilisticDna {
    pub fn from_ancestor<T: Scalar>(ancestor: &SequencerNet<T>, law: ProbabilityLaw) -> Self {
        let clusters = compute_cluster_probs(ancestor, law);
        let synapses = compute_synapse_probs(ancestor, law);
        let layers = ancestor
            .conv
            .iter()
            .zip(clusters.into_iter().zip(synapses))
            .map(|(layer, (cluster_probs, synapse_probs))| LayerDna {
                geometry: LayerGeometry {
                    filters: layer.filters,
                    in_channels: layer.in_channels,
                    kernel_area: layer.kernel_area(),
                },
                cluster_probs,
                synapse_probs,
            })
            .collect();
        ProbabilisticDna { layers }
    }

    /// Synapses with non-zero synthesis probability.
    pub fn candidate_synapses(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.synapse_probs.iter().filter(|&&p| p > 0.0).count() as u64)
            .sum()
    }

    /// Expected surviving synapses at scale `alpha`.
    ///
    /// A synapse survives when its filter, its own draw and the upstream
    /// filter producing its input channel all survive, so the expectation
    /// is `sum_c q_c * sum_{i in c} q_i * u_ch(i)` with `q = min(1, alpha p)`
    /// and `u` the upstream filter's `q_c` (1 for the network input).
    pub fn expected_active(&self, alpha: f64) -> f64 {
        let q = |p: f64| (alpha * p).min(1.0);
        let mut upstream: Option<Vec<f64>> = None;
        let mut total = 0.0;
        for layer in &self.layers {
            let g = layer.geometry;
            let per_filter = g.synapses_per_filter();
            for (f, &pc) in layer.cluster_probs.iter().enumerate() {
                let qc = q(pc);
                if qc == 0.0 {
                    continue;
                }
                let probs = &layer.synapse_probs[f * per_filter..(f + 1) * per_filter];
                let inner: f64 = probs
                    .chunks(g.kernel_area)
                    .enumerate()
                    .map(|(ch, taps)| {
                        let u = upstream.as_ref().map_or(1.0, |u| u[ch]);
                        u * taps.iter().map(|&p| q(p)).sum::<f64>()
                    })
                    .sum();
                total += qc * inner;
            }
            upstream = Some(layer.cluster_probs.iter().map(|&p| q(p)).collect());
        }
        total
    }
}

/// The retain budget and the calibrated probability scale that meets it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentalFactor {
    pub retain_fraction: f64,
    pub alpha: f64,
    pub target_count: u64,
    /// Expected surviving synapses at `alpha`.
    pub expected_count: f64,
}

/// Finds `alpha` whose expected surviving-synapse count is
/// `round(retain_fraction * ancestor_active)`, by bracketing and bisection
/// (the expectation is non-decreasing in `alpha`).
pub fn calibrate_alpha(
    dna: &ProbabilisticDna,
    retain_fraction: f64,
    ancestor_active: u64,
) -> Result<EnvironmentalFactor> {
    if !(retain_fraction > 0.0 && retain_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "retain fraction must lie in (0, 1], got {retain_fraction}"
        )));
    }
    let target_count = (retain_fraction * ancestor_active as f64).round() as u64;
    let available = dna.candidate_synapses();
    if target_count > available {
        return Err(Error::BudgetExceedsAncestor {
            target: target_count,
            available,
        });
    }
    let target = target_count as f64;

    let mut hi = 1.0;
    let mut doublings = 0;
    while dna.expected_active(hi) < target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 {
            return Err(Error::Config(format!(
                "retain budget of {target_count} synapses is unreachable"
            )));
        }
    }
    // Invariant: E(lo) < target <= E(hi).
    let mut lo = 0.0;
    for _ in 0..256 {
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dna.expected_active(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = hi;
    Ok(EnvironmentalFactor {
        retain_fraction,
        alpha,
        target_count,
        expected_count: dna.expected_active(alpha),
    })
}

/// Offspring masks drawn from the DNA.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub offspring_mask: Vec<Vec<bool>>,
    pub offspring_filter_alive: Vec<Vec<bool>>,
    pub realized_active_count: u64,
    pub rng_seed: u64,
}

/// Samples an offspring structure. Filters survive with probability
/// `min(1, alpha p_c)`; a surviving filter keeps each synapse with
/// probability `min(1, alpha p_i)`, provided the synapse's input channel
/// comes from a surviving upstream filter. A layer left without filters
/// gets its most probable filter back.
pub fn synthesize_offspring<T: Scalar>(
    ancestor: &SequencerNet<T>,
    env: &EnvironmentalFactor,
    dna: &ProbabilisticDna,
    seed: u64,
) -> SynthesisOutcome {
    debug_assert_eq!(ancestor.conv.len(), dna.layers.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = env.alpha;
    let mut masks = Vec::with_capacity(dna.layers.len());
    let mut alive_all: Vec<Vec<bool>> = Vec::with_capacity(dna.layers.len());

    for (layer, ancestor_layer) in dna.layers.iter().zip(&ancestor.conv) {
        let g = layer.geometry;
        let per_filter = g.synapses_per_filter();
        let upstream = alive_all.last();
        let mut mask = vec![false; g.filters * per_filter];
        let mut alive = vec![false; g.filters];

        let sample_filter = |f: usize, mask: &mut [bool], rng: &mut ChaCha8Rng| {
            let probs = &layer.synapse_probs[f * per_filter..(f + 1) * per_filter];
            let bits = &mut mask[f * per_filter..(f + 1) * per_filter];
            for (i, (&p, bit)) in probs.iter().zip(bits.iter_mut()).enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let keep = rng.gen::<f64>() < (alpha * p).min(1.0);
                let channel_alive = upstream.is_none_or(|u| u[i / g.kernel_area]);
                *bit = keep && channel_alive && ancestor_layer.mask[f * per_filter + i];
            }
        };

        for (f, &pc) in layer.cluster_probs.iter().enumerate() {
            if pc > 0.0 && rng.gen::<f64>() < (alpha * pc).min(1.0) {
                alive[f] = true;
                sample_filter(f, &mut mask, &mut rng);
            }
        }
        if !alive.iter().any(|&a| a) {
            let strongest = layer
                .cluster_probs
                .iter()
                .enumerate()
                .fold(0, |best, (f, &p)| {
                    if p > layer.cluster_probs[best] {
                        f
                    } else {
                        best
                    }
                });
            alive[strongest] = true;
            sample_filter(strongest, &mut mask, &mut rng);
        }
        masks.push(mask);
        alive_all.push(alive);
    }

    let realized_active_count = masks
        .iter()
        .map(|m| m.iter().filter(|&&b| b).count() as u64)
        .sum();
    SynthesisOutcome {
        offspring_mask: masks,
        offspring_filter_alive: alive_all,
        realized_active_count,
        rng_seed: seed,
    }
}

/// Assembles the offspring network: ancestor weights at surviving synapses,
/// synapses reading a dead channel removed, classifier inputs fed by dead
/// last-stage filters frozen at zero, generation incremented.
pub fn build_offspring_net<T: Scalar>(
    ancestor: &SequencerNet<T>,
    outcome: &SynthesisOutcome,
) -> Result<SequencerNet<T>> {
    if outcome.offspring_mask.len() != ancestor.conv.len()
        || outcome.offspring_filter_alive.len() != ancestor.conv.len()
    {
        return Err(Error::shape("outcome layer count differs from ancestor"));
    }
    let mut net = ancestor.clone();
    let mut upstream: Option<Vec<bool>> = None;
    for (i, layer) in net.conv.iter_mut().enumerate() {
        let mask = &outcome.offspring_mask[i];
        let alive = &outcome.offspring_filter_alive[i];
        if mask.len() != layer.mask.len() || alive.len() != layer.filters {
            return Err(Error::shape(format!(
                "outcome layer {i} does not match ancestor layer shape"
            )));
        }
        if mask.iter().zip(&layer.mask).any(|(&new, &old)| new && !old) {
            return Err(Error::shape(format!(
                "outcome layer {i} activates synapses absent from the ancestor"
            )));
        }
        let per_filter = layer.synapses_per_filter();
        let area = layer.kernel_area();
        for (j, (bit, &new)) in layer.mask.iter_mut().zip(mask).enumerate() {
            let f = j / per_filter;
            let ch = (j % per_filter) / area;
            let channel_alive = upstream.as_ref().is_none_or(|u| u[ch]);
            *bit = new && alive[f] && channel_alive;
        }
        layer.filter_alive.clone_from(alive);
        upstream = Some(alive.clone());
    }
    let (h, w) = net.final_spatial();
    let positions = h * w;
    let last_alive = upstream.expect("at least one conv layer");
    if let Some(fc) = net.fc.first_mut() {
        for (k, flag) in fc.input_alive.iter_mut().enumerate() {
            *flag = *flag && last_alive[k / positions];
        }
    }
    net.zero_pruned();
    net.generation = ancestor.generation + 1;
    net.validate()?;
    Ok(net)
}
