use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, train_network, TrainConfig};
use crate::data::Dataset;
use crate::network::Network;
use crate::prune::{forward_prune, MaskSet, PruneReport, Strategy, Threshold};
use crate::{Error, Result};

pub const DEFAULT_PERCENTILES: [f64; 4] = [50.0, 70.0, 80.0, 90.0];
pub const FINE_TUNE_EPOCHS: usize = 100;

/// How thresholds are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauSpec {
    /// One threshold for every layer.
    Absolute(f64),
    /// Per-layer percentile of the pruning scores, taken as each layer is
    /// pruned.
    Percentile(f64),
    /// Tries each percentile and keeps the best accuracy-preserving result.
    Sweep(Vec<f64>),
}

impl Default for TauSpec {
    fn default() -> Self {
        TauSpec::Sweep(DEFAULT_PERCENTILES.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// A candidate preserves accuracy when it loses at most this many points.
    pub tolerance: f64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            lr: crate::optim::DEFAULT_LR,
            epochs: FINE_TUNE_EPOCHS,
            batch_size: None,
            seed: 0,
            tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneCandidate {
    /// Percentile used, when thresholds came from one.
    pub percentile: Option<f64>,
    pub report: PruneReport,
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub candidates: Vec<PruneCandidate>,
    /// Index of the chosen candidate: the most compressed one within
    /// tolerance, or the most accurate one if none is.
    pub chosen: usize,
    pub network: Network,
    pub masks: MaskSet,
}

impl PruneOutcome {
    pub fn chosen_report(&self) -> &PruneReport {
        &self.candidates[self.chosen].report
    }
}

fn candidate(
    net: &Network,
    strategy: Strategy,
    threshold: Threshold,
    train: &Dataset,
    test: &Dataset,
    ft: &FineTuneConfig,
    before: f64,
) -> Result<(PruneCandidate, Network, MaskSet)> {
    let mut net = net.clone();
    let order: Vec<usize> = (0..net.layers().len()).collect();
    let tc = TrainConfig {
        lr: ft.lr,
        epochs: ft.epochs,
        batch_size: ft.batch_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ft.seed);
    let thresholds = vec![threshold; order.len()];
    let (masks, mut report) = forward_prune(&mut net, strategy, &thresholds, &order, |n, m| {
        train_network(n, &train.x, &train.y, &tc, &mut rng, Some(m)).map(|_| ())
    })?;
    report.accuracy_before = Some(before);
    report.accuracy_after = Some(accuracy(&net.predict(&test.x)?, &test.y)?);
    let percentile = match threshold {
        Threshold::Percentile(p) => Some(p),
        Threshold::Absolute(_) => None,
    };
    Ok((PruneCandidate { percentile, report }, net, masks))
}

/// Prunes every layer of a trained network and fine-tunes between layers on
/// `train`; accuracies are measured on `test`. Sweep candidates run in
/// parallel on clones.
pub fn prune_run(
    net: &Network,
    strategy: Strategy,
    spec: &TauSpec,
    ft: &FineTuneConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<PruneOutcome> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::EmptyInput("pruning needs train and test samples"));
    }
    let before = accuracy(&net.predict(&test.x)?, &test.y)?;
    let plans: Vec<Threshold> = match spec {
        TauSpec::Absolute(t) => vec![Threshold::Absolute(*t)],
        TauSpec::Percentile(p) => vec![Threshold::Percentile(*p)],
        TauSpec::Sweep(ps) if ps.is_empty() => {
            return Err(Error::EmptyInput(
                "percentile sweep needs at least one value",
            ))
        }
        TauSpec::Sweep(ps) => ps.iter().map(|&p| Threshold::Percentile(p)).collect(),
    };
    let results: Vec<(PruneCandidate, Network, MaskSet)> = plans
        .into_par_iter()
        .map(|t| candidate(net, strategy, t, train, test, ft, before))
        .collect::<Result<_>>()?;

    let after = |c: &PruneCandidate| c.report.accuracy_after.unwrap_or(0.0);
    let within: Vec<usize> = (0..results.len())
        .filter(|&i| after(&results[i].0) >= before - ft.tolerance)
        .collect();
    let chosen = if within.is_empty() {
        (0..results.len()).reduce(|b, i| {
            if after(&results[i].0) > after(&results[b].0) {
                i
            } else {
                b
            }
        })
    } else {
        within.into_iter().reduce(|b, i| {
            if results[i].0.report.compression > results[b].0.report.compression {
                i
            } else {
                b
            }
        })
    }
    .expect("at least one candidate");

    let mut candidates = Vec::with_capacity(results.len());
    let mut kept = None;
    for (i, (c, n, m)) in results.into_iter().enumerate() {
        candidates.push(c);
        if i == chosen {
            kept = Some((n, m));
        }
    }
    let (network, masks) = kept.expect("chosen index in range");
    Ok(PruneOutcome {
        candidates,
        chosen,
        network,
        masks,
    })
}

/// `"wdbc: mlp 98.246, pruned-cheby 99.123, compression 89.2"`.
pub fn prune_row(name: &str, mlp_accuracy: f64, report: &PruneReport) -> String {
    format!(
        "{name}: mlp {:.3}, pruned-cheby {:.3}, compression {:.1}",
        mlp_accuracy,
        report.accuracy_after.unwrap_or(0.0),
        report.compression
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_xor;
    use crate::harness::prepare;
    use crate::network::ChebyMode;

    fn trained(k: usize) -> (Network, Dataset, Dataset) {
        let ds = make_xor(120, 5).unwrap();
        let prep = prepare(&ds, 0.8, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::cheby(2, &[4, 2], 2, k, ChebyMode::WeightForm, &mut rng);
        let tc = TrainConfig {
            lr: 0.01,
            epochs: 60,
            batch_size: None,
        };
        train_network(&mut net, &prep.train.x, &prep.train.y, &tc, &mut rng, None).unwrap();
        (net, prep.train, prep.test)
    }

    fn quick() -> FineTuneConfig {
        FineTuneConfig {
            epochs: 5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_tau_changes_nothing() {
        let (net, train, test) = trained(3);
        let out = prune_run(
            &net,
            Strategy::Threshold,
            &TauSpec::Absolute(0.0),
            &quick(),
            &train,
            &test,
        )
        .unwrap();
        let r = out.chosen_report();
        assert_eq!(r.compression, 0.0);
        assert_eq!(r.accuracy_before, r.accuracy_after);
        assert_eq!(out.network, net);
    }

    #[test]
    fn group_equals_threshold_at_order_zero() {
        let (net, train, test) = trained(0);
        let spec = TauSpec::Absolute(0.3);
        let a = prune_run(&net, Strategy::Threshold, &spec, &quick(), &train, &test).unwrap();
        let b = prune_run(&net, Strategy::Group, &spec, &quick(), &train, &test).unwrap();
        let (mut ra, rb) = (a.chosen_report().clone(), b.chosen_report().clone());
        ra.strategy = Strategy::Group;
        assert_eq!(ra, rb);
        assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn sweep_reports_every_percentile() {
        let (net, train, test) = trained(3);
        let out = prune_run(
            &net,
            Strategy::Group,
            &TauSpec::default(),
            &quick(),
            &train,
            &test,
        )
        .unwrap();
        assert_eq!(out.candidates.len(), 4);
        let comp: Vec<f64> = out
            .candidates
            .iter()
            .map(|c| c.report.compression)
            .collect();
        assert!(comp.windows(2).all(|w| w[0] <= w[1]), "{comp:?}");
        for (w, keep) in out
            .network
            .layers()
            .iter()
            .flat_map(|l| l.weights())
            .zip(out.masks.layers.iter().flatten())
        {
            if !keep {
                assert_eq!(*w, 0.0);
            }
        }
    }

    #[test]
    fn row_format() {
        let report = PruneReport {
            strategy: Strategy::Threshold,
            total_params: 1010,
            prunable_params: 1000,
            zeroed: 892,
            compression: 89.2,
            layers: vec![],
            accuracy_before: Some(98.0),
            accuracy_after: Some(99.123),
        };
        assert_eq!(
            prune_row("wdbc", 98.246, &report),
            "wdbc: mlp 98.246, pruned-cheby 99.123, compression 89.2"
        );
    }
}
