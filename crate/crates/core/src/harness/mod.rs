//! The MLP-versus-Chebyshev experiment protocol and its companions.
//!
//! [`run_experiment`] splits a dataset once, fits the scaler on the training
//! part, then trains both architectures `repeats` times with the per-repeat
//! seed `seed + r` and records the best test accuracy of each. Repeats run in
//! parallel; results are gathered in repeat order so documents are
//! reproducible byte for byte.

mod bench;
mod export;
mod metrics;
mod prune_run;

pub use bench::{bench_timing, timing_csv, BenchConfig, TimingRow, BENCH_REPETITIONS};
pub use export::{
    boundary_csv, export_boundary_grid, export_weight_curves, weight_curves_csv, BoundaryGrid,
    CurveRow, LatticeRow, PointRow,
};
pub use metrics::{accuracy, macro_f1, param_count, Decomposition};
pub use prune_run::{
    prune_row, prune_run, FineTuneConfig, PruneCandidate, PruneOutcome, TauSpec,
    DEFAULT_PERCENTILES, FINE_TUNE_EPOCHS,
};

use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaler, fit_scaler, stratified_split, Dataset, ScalerParams, Split};
use crate::matrix::Matrix;
use crate::network::{ChebyMode, Network};
use crate::optim::{Adam, Optimizer};
use crate::prune::MaskSet;
use crate::{Error, Result};

pub const RESULTS_SCHEMA: &str = "chebynet.results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub repeats: usize,
    pub k: usize,
    pub mode: ChebyMode,
    pub seed: u64,
    pub train_fraction: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hidden: vec![4, 2],
            lr: crate::optim::DEFAULT_LR,
            epochs: 500,
            repeats: 10,
            k: 3,
            mode: ChebyMode::WeightForm,
            seed: 0,
            train_fraction: crate::data::DEFAULT_TRAIN_FRACTION,
            batch_size: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        if self.epochs == 0 || self.repeats == 0 {
            return bad("epochs and repeats must be positive".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
}

/// Trains with Adam. Mini-batches are reshuffled every epoch from `rng`. With
/// `masks`, masked gradients and parameters are zeroed on every step. Returns
/// the mean loss of the last epoch.
pub fn train_network(
    net: &mut Network,
    x: &Matrix,
    y: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    masks: Option<&MaskSet>,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("training on zero samples"));
    }
    let mut adam = Adam::new(cfg.lr);
    let n = x.rows();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        if batch < n {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let (loss, mut grads) = if batch < n {
                let xb = x.select_rows(chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                net.loss_and_grads(&xb, &yb)?
            } else {
                net.loss_and_grads(x, y)?
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if let Some(m) = masks {
                m.apply_to_grads(&mut grads)?;
            }
            adam.step(&mut net.param_tensors_mut(), &grads.tensors())?;
            if let Some(m) = masks {
                m.apply(net)?;
            }
            epoch_loss += loss * chunk.len() as f64;
        }
        last = epoch_loss / n as f64;
    }
    Ok(last)
}

/// Split plus scaler fitted on the training rows; both parts are scaled.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    pub scaler: ScalerParams,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Prepared> {
    let split = stratified_split(ds, train_fraction, seed)?;
    if split.test.is_empty() {
        return Err(Error::InvalidArgument("test split is empty".into()));
    }
    let train_raw = ds.subset(&split.train);
    let test_raw = ds.subset(&split.test);
    let scaler = fit_scaler(&train_raw.x)?;
    let train = train_raw.with_features(apply_scaler(&scaler, &train_raw.x)?);
    let test = test_raw.with_features(apply_scaler(&scaler, &test_raw.x)?);
    Ok(Prepared {
        split,
        scaler,
        train,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    Cheby,
}

impl ModelKind {
    pub fn build(
        self,
        cfg: &ExperimentConfig,
        inputs: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Network {
        match self {
            ModelKind::Mlp => Network::mlp(inputs, &cfg.hidden, classes, rng),
            ModelKind::Cheby => Network::cheby(inputs, &cfg.hidden, classes, cfg.k, cfg.mode, rng),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cheby => "cheby",
        }
    }
}

/// Outcome of one training repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    /// `None` when training diverged.
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub repeats: Vec<RepeatOutcome>,
    /// Best test accuracy over successful repeats (0 when none succeeded).
    pub best: f64,
    pub mean: f64,
    pub std: f64,
    pub best_repeat: Option<usize>,
    /// Macro-F1 of the best repeat.
    pub macro_f1: f64,
    pub param_count: usize,
    pub failed: usize,
    /// Wall-clock seconds; kept out of result documents so they stay
    /// reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl RunResult {
    fn from_repeats(
        model: ModelKind,
        k: Option<usize>,
        repeats: Vec<RepeatOutcome>,
        param_count: usize,
        wall_time_s: f64,
    ) -> Self {
        let ok: Vec<(usize, f64)> = repeats
            .iter()
            .filter_map(|r| r.accuracy.map(|a| (r.repeat, a)))
            .collect();
        let failed = repeats.len() - ok.len();
        // first repeat wins ties
        let best = ok
            .iter()
            .copied()
            .fold(None, |acc: Option<(usize, f64)>, (r, a)| match acc {
                Some((_, b)) if b >= a => acc,
                _ => Some((r, a)),
            });
        let (mean, std) = if ok.is_empty() {
            (0.0, 0.0)
        } else {
            let n = ok.len() as f64;
            let mean = ok.iter().map(|(_, a)| a).sum::<f64>() / n;
            let var = ok.iter().map(|(_, a)| (a - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let macro_f1 = best
            .and_then(|(r, _)| repeats.iter().find(|o| o.repeat == r))
            .and_then(|o| o.macro_f1)
            .unwrap_or(0.0);
        RunResult {
            model,
            k,
            best: best.map_or(0.0, |(_, a)| a),
            best_repeat: best.map(|(r, _)| r),
            mean,
            std,
            macro_f1,
            param_count,
            failed,
            repeats,
            wall_time_s,
        }
    }
}

fn evaluate(net: &Network, test: &Dataset) -> Result<(f64, f64)> {
    let preds = net.predict(&test.x)?;
    Ok((
        accuracy(&preds, &test.y)?,
        macro_f1(&preds, &test.y, test.n_classes)?,
    ))
}

fn train_one(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    prep: &Prepared,
    repeat: usize,
) -> (RepeatOutcome, Option<Network>) {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = kind.build(cfg, prep.train.n_features(), prep.train.n_classes, &mut rng);
    let result = train_network(
        &mut net,
        &prep.train.x,
        &prep.train.y,
        &cfg.train_config(),
        &mut rng,
        None,
    )
    .and_then(|_| evaluate(&net, &prep.test));
    match result {
        Ok((acc, f1)) => (
            RepeatOutcome {
                repeat,
                seed,
                accuracy: Some(acc),
                macro_f1: Some(f1),
                error: None,
            },
            Some(net),
        ),
        Err(e) => {
            warn!("{} repeat {repeat} failed: {e}", kind.name());
            (
                RepeatOutcome {
                    repeat,
                    seed,
                    accuracy: None,
                    macro_f1: None,
                    error: Some(e.to_string()),
                },
                None,
            )
        }
    }
}

/// Trains one architecture `cfg.repeats` times on a prepared split. Returns the
/// summary and the network of the best repeat.
pub fn run_architecture(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    prep: &Prepared,
) -> Result<(RunResult, Option<Network>)> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<(RepeatOutcome, Option<Network>)> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| train_one(kind, cfg, prep, r))
        .collect();
    let param_count = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        kind.build(cfg, prep.train.n_features(), prep.train.n_classes, &mut rng)
            .param_count()
    };
    let (repeats, nets): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let k = (kind == ModelKind::Cheby).then_some(cfg.k);
    let result =
        RunResult::from_repeats(kind, k, repeats, param_count, start.elapsed().as_secs_f64());
    let best_net = result
        .best_repeat
        .and_then(|r| nets.into_iter().nth(r).flatten());
    Ok((result, best_net))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mlp: RunResult,
    pub cheby: RunResult,
    /// `cheby.best - mlp.best`.
    pub diff: f64,
}

/// Both architectures on the same split with the same per-repeat seeds.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Comparison> {
    cfg.validate()?;
    let prep = prepare(ds, cfg.train_fraction, cfg.seed)?;
    run_experiment_prepared(cfg, &prep)
}

pub fn run_experiment_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Comparison> {
    let (mlp, _) = run_architecture(ModelKind::Mlp, cfg, prep)?;
    let (cheby, _) = run_architecture(ModelKind::Cheby, cfg, prep)?;
    Ok(Comparison {
        diff: cheby.best - mlp.best,
        mlp,
        cheby,
    })
}

/// `"<name>: cheby 75.61, mlp 48.78, diff 26.829"`.
pub fn comparison_row(name: &str, cmp: &Comparison) -> String {
    format!(
        "{name}: cheby {:.2}, mlp {:.2}, diff {:.3}",
        cmp.cheby.best, cmp.mlp.best, cmp.diff
    )
}

/// Head-to-head count of best accuracies over several datasets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinTally {
    pub cheby: usize,
    pub mlp: usize,
    pub ties: usize,
}

impl WinTally {
    pub fn from_comparisons<'a>(cmps: impl IntoIterator<Item = &'a Comparison>) -> Self {
        let mut t = WinTally::default();
        for c in cmps {
            match c.cheby.best.partial_cmp(&c.mlp.best) {
                Some(std::cmp::Ordering::Greater) => t.cheby += 1,
                Some(std::cmp::Ordering::Less) => t.mlp += 1,
                _ => t.ties += 1,
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.cheby + self.mlp + self.ties
    }
}

/// `"wins: cheby 3, mlp 1, ties 0 of 4"`.
pub fn wins_row(t: &WinTally) -> String {
    format!(
        "wins: cheby {}, mlp {}, ties {} of {}",
        t.cheby,
        t.mlp,
        t.ties,
        t.total()
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub cheby: RunResult,
    pub mlp: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `k` with the highest Chebyshev macro-F1 (first on ties).
    pub best_k: usize,
}

/// Runs the comparison at every `k` in `ks` (duplicates dropped, first
/// occurrence kept). The MLP does not depend on `k`, so it is trained once and
/// repeated in every row.
pub fn k_sweep(cfg: &ExperimentConfig, ds: &Dataset, ks: &[usize]) -> Result<SweepResult> {
    if ks.is_empty() {
        return Err(Error::EmptyInput("k sweep needs at least one k"));
    }
    let mut unique = Vec::with_capacity(ks.len());
    for &k in ks {
        if unique.contains(&k) {
            warn!("duplicate k = {k} dropped from sweep");
        } else {
            unique.push(k);
        }
    }
    cfg.validate()?;
    let prep = prepare(ds, cfg.train_fraction, cfg.seed)?;
    let (mlp, _) = run_architecture(ModelKind::Mlp, cfg, &prep)?;
    let mut rows = Vec::with_capacity(unique.len());
    for k in unique {
        let kcfg = ExperimentConfig { k, ..cfg.clone() };
        let (cheby, _) = run_architecture(ModelKind::Cheby, &kcfg, &prep)?;
        rows.push(SweepRow {
            k,
            cheby,
            mlp: mlp.clone(),
        });
    }
    let best_k = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.cheby.macro_f1 >= r.cheby.macro_f1 => Some(b),
            _ => Some(r),
        })
        .map(|r| r.k)
        .expect("non-empty sweep");
    Ok(SweepResult { rows, best_k })
}

pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out =
        String::from("k,cheby_params,cheby_best_acc,cheby_f1,mlp_params,mlp_best_acc,mlp_f1\n");
    for r in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.k,
            r.cheby.param_count,
            r.cheby.best,
            r.cheby.macro_f1,
            r.mlp.param_count,
            r.mlp.best,
            r.mlp.macro_f1
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
}

impl DatasetSummary {
    pub fn new(name: &str, ds: &Dataset, split: &Split) -> Self {
        DatasetSummary {
            name: name.to_owned(),
            samples: ds.len(),
            features: ds.n_features(),
            classes: ds.n_classes,
            train: split.train.len(),
            test: split.test.len(),
        }
    }
}

/// Build stamp recorded in result documents. Holds nothing run-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

/// Versioned results document written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument<T> {
    pub schema: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub results: T,
    pub environment: Environment,
}

impl<T: Serialize> ResultsDocument<T> {
    pub fn new(
        command: &str,
        config: ExperimentConfig,
        dataset: DatasetSummary,
        results: T,
    ) -> Self {
        ResultsDocument {
            schema: RESULTS_SCHEMA.into(),
            command: command.into(),
            config,
            dataset,
            results,
            environment: Environment::current(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_xor;

    fn outcome(repeat: usize, acc: Option<f64>) -> RepeatOutcome {
        RepeatOutcome {
            repeat,
            seed: repeat as u64,
            accuracy: acc,
            macro_f1: acc.map(|a| a / 2.0),
            error: acc.is_none().then(|| "diverged".into()),
        }
    }

    #[test]
    fn best_ignores_failures() {
        let r = RunResult::from_repeats(
            ModelKind::Mlp,
            None,
            vec![
                outcome(0, Some(70.0)),
                outcome(1, None),
                outcome(2, Some(90.0)),
                outcome(3, Some(90.0)),
            ],
            10,
            0.0,
        );
        assert_eq!(r.best, 90.0);
        assert_eq!(r.best_repeat, Some(2));
        assert_eq!(r.failed, 1);
        assert_eq!(r.macro_f1, 45.0);
        assert_close!(r.mean, 250.0 / 3.0, 1e-12);
    }

    #[test]
    fn single_repeat_best_is_mean() {
        let r = RunResult::from_repeats(
            ModelKind::Cheby,
            Some(3),
            vec![outcome(0, Some(81.5))],
            10,
            0.0,
        );
        assert_eq!(r.best, 81.5);
        assert_eq!(r.mean, 81.5);
        assert_eq!(r.std, 0.0);
    }

    #[test]
    fn row_format() {
        let mut cmp = Comparison {
            mlp: RunResult::from_repeats(
                ModelKind::Mlp,
                None,
                vec![outcome(0, Some(48.78))],
                1,
                0.0,
            ),
            cheby: RunResult::from_repeats(
                ModelKind::Cheby,
                Some(3),
                vec![outcome(0, Some(75.61))],
                1,
                0.0,
            ),
            diff: 0.0,
        };
        cmp.diff = 26.829;
        assert_eq!(
            comparison_row("auto", &cmp),
            "auto: cheby 75.61, mlp 48.78, diff 26.829"
        );
    }

    fn pair(cheby: f64, mlp: f64) -> Comparison {
        let run =
            |kind, acc| RunResult::from_repeats(kind, None, vec![outcome(0, Some(acc))], 1, 0.0);
        Comparison {
            mlp: run(ModelKind::Mlp, mlp),
            cheby: run(ModelKind::Cheby, cheby),
            diff: cheby - mlp,
        }
    }

    #[test]
    fn wins_are_counted_per_dataset() {
        let cmps = [
            pair(90.0, 80.0),
            pair(70.0, 75.0),
            pair(60.0, 60.0),
            pair(99.0, 98.0),
        ];
        let t = WinTally::from_comparisons(&cmps);
        assert_eq!((t.cheby, t.mlp, t.ties), (2, 1, 1));
        assert_eq!(wins_row(&t), "wins: cheby 2, mlp 1, ties 1 of 4");
    }

    #[test]
    fn order_zero_sweep_matches_mlp() {
        let ds = make_xor(80, 3).unwrap();
        let cfg = ExperimentConfig {
            epochs: 40,
            repeats: 3,
            lr: 0.01,
            ..Default::default()
        };
        let sweep = k_sweep(&cfg, &ds, &[0, 0]).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        let row = &sweep.rows[0];
        assert!((row.cheby.best - row.mlp.best).abs() <= 1e-9);
        assert_eq!(row.cheby.param_count, row.mlp.param_count);
    }

    #[test]
    fn invalid_configs() {
        let ds = make_xor(40, 1).unwrap();
        for cfg in [
            ExperimentConfig {
                repeats: 0,
                ..Default::default()
            },
            ExperimentConfig {
                train_fraction: 1.0,
                ..Default::default()
            },
            ExperimentConfig {
                hidden: vec![4, 0],
                ..Default::default()
            },
        ] {
            assert!(run_experiment(&cfg, &ds).is_err());
        }
        assert!(k_sweep(&ExperimentConfig::default(), &ds, &[]).is_err());
    }

    #[test]
    fn diverged_training_is_reported() {
        let ds = make_xor(40, 1).unwrap();
        let prep = prepare(&ds, 0.8, 0).unwrap();
        let cfg = ExperimentConfig {
            lr: 1e300,
            epochs: 50,
            repeats: 2,
            k: 6,
            ..Default::default()
        };
        let (r, net) = run_architecture(ModelKind::Cheby, &cfg, &prep).unwrap();
        // a failed repeat never contributes to best
        if r.failed == 2 {
            assert_eq!(r.best, 0.0);
            assert!(net.is_none());
        }
        assert!(r.best <= 100.0);
    }
}
