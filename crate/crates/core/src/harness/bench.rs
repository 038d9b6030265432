use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::matrix::Matrix;
use crate::network::{ChebyMode, Network};
use crate::optim::{Adam, Optimizer};
use crate::{Error, Result};

pub const BENCH_REPETITIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub features: Vec<usize>,
    pub ks: Vec<usize>,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub mode: ChebyMode,
    pub lr: f64,
    pub warmup: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            features: vec![10, 30, 90],
            ks: vec![1, 2, 4, 8],
            batch: 256,
            hidden: vec![4, 2],
            classes: 2,
            mode: ChebyMode::WeightForm,
            lr: crate::optim::DEFAULT_LR,
            warmup: 3,
            repetitions: BENCH_REPETITIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: ModelKind,
    pub features: usize,
    /// `None` for the MLP.
    pub k: Option<usize>,
    pub train_s_per_batch: f64,
    pub infer_s_per_batch: f64,
}

fn mean_secs(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    Ok(start.elapsed().as_secs_f64() / reps as f64)
}

fn time_network(
    net: &mut Network,
    x: &Matrix,
    y: &[usize],
    cfg: &BenchConfig,
) -> Result<(f64, f64)> {
    let infer = |net: &Network| -> Result<()> {
        black_box(net.logits(black_box(x))?);
        Ok(())
    };
    for _ in 0..cfg.warmup {
        infer(net)?;
    }
    let infer_s = mean_secs(cfg.repetitions, || infer(net))?;

    let mut adam = Adam::new(cfg.lr);
    let mut train = |net: &mut Network| -> Result<()> {
        let (_, grads) = net.loss_and_grads(black_box(x), y)?;
        adam.step(&mut net.param_tensors_mut(), &grads.tensors())
    };
    for _ in 0..cfg.warmup {
        train(net)?;
    }
    let train_s = mean_secs(cfg.repetitions, || train(net))?;
    Ok((train_s, infer_s))
}

/// Mean per-batch training step (forward, backward, Adam update) and
/// inference time on a random batch in `[-1, 1]`, for the MLP and for the
/// Chebyshev network at each `k`. Runs on the calling thread.
pub fn bench_timing(cfg: &BenchConfig) -> Result<Vec<TimingRow>> {
    if cfg.batch == 0 || cfg.repetitions == 0 || cfg.classes < 2 {
        return Err(Error::InvalidArgument(
            "bench needs a positive batch, repetitions and at least 2 classes".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in &cfg.features {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "feature count must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(n as u64));
        let data: Vec<f64> = (0..cfg.batch * n)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let x = Matrix::from_vec(cfg.batch, n, data)?;
        let y: Vec<usize> = (0..cfg.batch)
            .map(|_| rng.random_range(0..cfg.classes))
            .collect();

        let mut mlp = Network::mlp(n, &cfg.hidden, cfg.classes, &mut rng);
        let (train_s, infer_s) = time_network(&mut mlp, &x, &y, cfg)?;
        rows.push(TimingRow {
            model: ModelKind::Mlp,
            features: n,
            k: None,
            train_s_per_batch: train_s,
            infer_s_per_batch: infer_s,
        });
        for &k in &cfg.ks {
            let mut net = Network::cheby(n, &cfg.hidden, cfg.classes, k, cfg.mode, &mut rng);
            let (train_s, infer_s) = time_network(&mut net, &x, &y, cfg)?;
            rows.push(TimingRow {
                model: ModelKind::Cheby,
                features: n,
                k: Some(k),
                train_s_per_batch: train_s,
                infer_s_per_batch: infer_s,
            });
        }
    }
    Ok(rows)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("model,features,k,train_s_per_batch,infer_s_per_batch\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model.name(),
            r.features,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.train_s_per_batch,
            r.infer_s_per_batch
        ));
    }
    out
}
