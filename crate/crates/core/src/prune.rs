//! Pruning with frozen zeros.
//!
//! Two ways to pick what to remove:
//!
//! - [`Strategy::Threshold`]: every weight or coefficient is judged on its own
//!   magnitude, ignoring which Chebyshev expansion it belongs to.
//! - [`Strategy::Group`]: the `k+1` coefficients feeding output `o` from input
//!   `i` are judged together by their Euclidean norm and removed as a unit.
//!
//! [`forward_prune`] applies either strategy layer by layer, fine-tuning the
//! surviving parameters of the whole network after each layer. Masked
//! positions are held at exactly zero by zeroing both the parameter and its
//! gradient on every step, so freezing works with any optimizer. Biases are
//! never pruned.

use serde::{Deserialize, Serialize};

use crate::network::{ChebyLayer, GradientSet, Layer, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Threshold,
    Group,
}

/// One boolean per weight (or coefficient) of each layer; `false` means
/// zeroed and frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    pub layers: Vec<Vec<bool>>,
}

impl MaskSet {
    pub fn all_active(net: &Network) -> Self {
        MaskSet {
            layers: net
                .layers()
                .iter()
                .map(|l| vec![true; l.weights().len()])
                .collect(),
        }
    }

    fn check(&self, net: &Network) -> Result<()> {
        if self.layers.len() != net.layers().len()
            || self
                .layers
                .iter()
                .zip(net.layers())
                .any(|(m, l)| m.len() != l.weights().len())
        {
            return Err(Error::dims(
                "mask shape",
                "network parameter shapes",
                "other",
            ));
        }
        Ok(())
    }

    /// Sets masked parameters to zero.
    pub fn apply(&self, net: &mut Network) -> Result<()> {
        self.check(net)?;
        for (mask, layer) in self.layers.iter().zip(net.layers_mut()) {
            for (w, &keep) in layer.weights_mut().iter_mut().zip(mask) {
                if !keep {
                    *w = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Sets gradients of masked parameters to zero.
    pub fn apply_to_grads(&self, grads: &mut GradientSet) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::dims(
                "mask layer count",
                self.layers.len(),
                grads.layers.len(),
            ));
        }
        for (mask, g) in self.layers.iter().zip(&mut grads.layers) {
            if mask.len() != g.weights.len() {
                return Err(Error::dims("mask length", mask.len(), g.weights.len()));
            }
            for (gv, &keep) in g.weights.iter_mut().zip(mask) {
                if !keep {
                    *gv = 0.0;
                }
            }
        }
        Ok(())
    }

    pub fn masked_count(&self) -> usize {
        self.layers.iter().flatten().filter(|&&k| !k).count()
    }
}

/// `true` where `|param| >= tau`.
pub fn threshold_prune(params: &[f64], tau: f64) -> Vec<bool> {
    params.iter().map(|p| !(p.abs() < tau)).collect()
}

/// `sqrt(sum_j c_oij^2)`, independent of any input.
pub fn group_norm(layer: &ChebyLayer, o: usize, i: usize) -> Result<f64> {
    if o >= layer.outputs() || i >= layer.inputs() {
        return Err(Error::IndexOutOfRange(format!(
            "group ({o}, {i}) in a {}x{} layer",
            layer.outputs(),
            layer.inputs()
        )));
    }
    Ok(layer.group(o, i).iter().map(|c| c * c).sum::<f64>().sqrt())
}

/// Masks whole coefficient groups whose norm is below `tau`.
pub fn group_prune(layer: &ChebyLayer, tau: f64) -> Vec<bool> {
    let k1 = layer.order() + 1;
    let mut mask = Vec::with_capacity(layer.coeffs.as_slice().len());
    for o in 0..layer.outputs() {
        for i in 0..layer.inputs() {
            let keep = !(group_norm(layer, o, i).expect("in range") < tau);
            mask.extend(std::iter::repeat_n(keep, k1));
        }
    }
    mask
}

/// Magnitudes the strategy compares against a threshold: per-parameter
/// absolute values, or one norm per coefficient group. Dense layers always
/// use per-weight magnitudes (a dense weight is a group of one).
pub fn prune_scores(layer: &Layer, strategy: Strategy) -> Vec<f64> {
    match (strategy, layer) {
        (Strategy::Group, Layer::Cheby(c)) => (0..c.outputs())
            .flat_map(|o| (0..c.inputs()).map(move |i| (o, i)))
            .map(|(o, i)| group_norm(c, o, i).expect("in range"))
            .collect(),
        _ => layer.weights().iter().map(|w| w.abs()).collect(),
    }
}

pub fn layer_mask(layer: &Layer, strategy: Strategy, tau: f64) -> Vec<bool> {
    match (strategy, layer) {
        (Strategy::Group, Layer::Cheby(c)) => group_prune(c, tau),
        _ => threshold_prune(layer.weights(), tau),
    }
}

/// Smallest threshold that removes the lowest `ceil(p% * n)` scores. Ties
/// with the last removed score are removed too. `p` lies in `[0, 100]`.
pub fn percentile_tau(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("percentile of no values"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let rank = (p / 100.0 * scores.len() as f64).ceil() as usize;
    if rank == 0 {
        return Ok(0.0);
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[rank - 1].next_up())
}

/// How a layer's threshold is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Absolute(f64),
    /// Percentile of the layer's scores, taken when the layer is pruned.
    Percentile(f64),
}

impl Threshold {
    pub fn resolve(self, layer: &Layer, strategy: Strategy) -> Result<f64> {
        match self {
            Threshold::Absolute(t) if t >= 0.0 => Ok(t),
            Threshold::Absolute(t) => Err(Error::InvalidArgument(format!(
                "threshold must be >= 0, got {t}"
            ))),
            Threshold::Percentile(p) => percentile_tau(&prune_scores(layer, strategy), p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPruneStats {
    pub layer: usize,
    pub tau: f64,
    /// Weights or coefficients; biases are not counted.
    pub params: usize,
    pub zeroed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub strategy: Strategy,
    /// All parameters, biases included.
    pub total_params: usize,
    /// Weights and coefficients, the pool pruning draws from.
    pub prunable_params: usize,
    pub zeroed: usize,
    /// `100 * zeroed / prunable_params`.
    pub compression: f64,
    pub layers: Vec<LayerPruneStats>,
    pub accuracy_before: Option<f64>,
    pub accuracy_after: Option<f64>,
}

impl PruneReport {
    pub fn new(net: &Network, masks: &MaskSet, strategy: Strategy, taus: &[f64]) -> Self {
        let layers: Vec<LayerPruneStats> = masks
            .layers
            .iter()
            .enumerate()
            .map(|(l, mask)| LayerPruneStats {
                layer: l,
                tau: taus.get(l).copied().unwrap_or(0.0),
                params: mask.len(),
                zeroed: mask.iter().filter(|&&k| !k).count(),
            })
            .collect();
        let prunable_params = masks.layers.iter().map(Vec::len).sum();
        let zeroed = masks.masked_count();
        PruneReport {
            strategy,
            total_params: net.param_count(),
            prunable_params,
            zeroed,
            compression: compression(zeroed, prunable_params),
            layers,
            accuracy_before: None,
            accuracy_after: None,
        }
    }
}

pub fn compression(zeroed: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * zeroed as f64 / total as f64
    }
}

/// Prunes the layers in `order` (sorted ascending, duplicates dropped) one at
/// a time, resolving each layer's threshold from its current parameters just
/// before it is pruned. After each layer is masked, `fine_tune` trains the unmasked
/// parameters of the whole network under the accumulated mask; positions
/// masked earlier stay masked. A layer whose threshold removes nothing new is
/// not fine-tuned.
///
/// If fine-tuning fails (e.g. the loss diverges) the network is restored to
/// the state it had right after that layer was masked and the error is
/// returned.
pub fn forward_prune<F>(
    net: &mut Network,
    strategy: Strategy,
    thresholds: &[Threshold],
    order: &[usize],
    mut fine_tune: F,
) -> Result<(MaskSet, PruneReport)>
where
    F: FnMut(&mut Network, &MaskSet) -> Result<()>,
{
    if thresholds.len() != net.layers().len() {
        return Err(Error::dims(
            "one threshold per layer",
            net.layers().len(),
            thresholds.len(),
        ));
    }
    let mut order = order.to_vec();
    order.sort_unstable();
    order.dedup();
    if let Some(&bad) = order.iter().find(|&&l| l >= net.layers().len()) {
        return Err(Error::IndexOutOfRange(format!("layer {bad}")));
    }

    let mut masks = MaskSet::all_active(net);
    let mut taus = vec![0.0; thresholds.len()];
    for &l in &order {
        taus[l] = thresholds[l].resolve(&net.layers()[l], strategy)?;
        let fresh = layer_mask(&net.layers()[l], strategy, taus[l]);
        let mut changed = false;
        for (m, f) in masks.layers[l].iter_mut().zip(fresh) {
            changed |= *m && !f;
            *m &= f;
        }
        if !changed {
            continue;
        }
        masks.apply(net)?;
        let checkpoint = net.clone();
        if let Err(e) = fine_tune(net, &masks) {
            *net = checkpoint;
            return Err(e);
        }
        masks.apply(net)?;
    }
    let report = PruneReport::new(net, &masks, strategy, &taus);
    Ok((masks, report))
}
