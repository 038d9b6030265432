//! End-to-end acceptance checks, one line per criterion.
//!
//! Everything runs inside a single test so the criteria execute one after
//! another; the timing criterion in particular must not share the machine
//! with other training runs.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use chebynet::basis::{deriv_all, eval_all, roots};
use chebynet::data::{make_rings, make_xor, write_csv, Dataset};
use chebynet::harness::{
    bench_timing, k_sweep, param_count, prepare, prune_run, run_architecture,
    run_experiment_prepared, BenchConfig, Decomposition, ExperimentConfig, FineTuneConfig,
    ModelKind, TauSpec,
};
use chebynet::matrix::Matrix;
use chebynet::multicheb::{eval_pairwise, fit_pairwise, fit_tensor};
use chebynet::network::{ChebyLayer, ChebyMode, DenseLayer, InputMap, Layer, Network};
use chebynet::prune::Strategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Writes to the stderr handle directly; the test harness only captures the
/// print macros, so these lines show up without `--nocapture`.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, limit: Duration, check: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            })
            .and_then(|detail| {
                let took = start.elapsed();
                if took <= limit {
                    Ok(detail)
                } else {
                    Err(format!("{detail}; took {took:.2?}, limit {limit:?}"))
                }
            });
        let took = start.elapsed();
        match result {
            Ok(detail) => say(&format!("PASS  {id:>2} {name}: {detail} [{took:.2?}]")),
            Err(detail) => {
                say(&format!("FAIL  {id:>2} {name}: {detail} [{took:.2?}]"));
                self.failed.push(id);
            }
        }
    }
}

fn basis_exactness() -> Outcome {
    let mut worst = [0.0f64; 4];
    for i in 0..200 {
        let x = -1.0 + 2.0 * i as f64 / 199.0;
        let t = eval_all(10, x);
        for j in 0..=10 {
            worst[0] = worst[0].max((t[j] - (j as f64 * x.acos()).cos()).abs());
        }
        let xi = x * 0.999;
        let (h, d) = (1e-6, deriv_all(10, xi));
        let (up, down) = (eval_all(10, xi + h), eval_all(10, xi - h));
        for j in 0..=10 {
            worst[3] = worst[3].max((d[j] - (up[j] - down[j]) / (2.0 * h)).abs());
        }
    }
    for j in 1..=10 {
        for r in roots(j) {
            worst[1] = worst[1].max(eval_all(j, r)[j].abs());
        }
    }
    let n = 11;
    let nodes = roots(n);
    for a in 0..n {
        for b in 0..n {
            let s: f64 = nodes
                .iter()
                .map(|&x| eval_all(n, x)[a] * eval_all(n, x)[b])
                .sum();
            let expected = match (a, b) {
                (0, 0) => n as f64,
                _ if a == b => n as f64 / 2.0,
                _ => 0.0,
            };
            worst[2] = worst[2].max((s - expected).abs());
        }
    }
    ensure(worst[0] <= 1e-10, || {
        format!("recurrence vs trig {:e}", worst[0])
    })?;
    ensure(worst[1] <= 1e-10, || {
        format!("root residual {:e}", worst[1])
    })?;
    ensure(worst[2] <= 1e-8, || format!("orthogonality {:e}", worst[2]))?;
    ensure(worst[3] <= 1e-4, || format!("derivative {:e}", worst[3]))?;
    Ok(format!(
        "trig {:.1e}, roots {:.1e}, orthogonality {:.1e}, derivative {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, s: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect(),
    )
    .unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn mlp_generalisation() -> Outcome {
    let (mut out_err, mut grad_err) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_matrix(&mut rng, 4, 6, 0.15);
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-0.15..=0.15)).collect();
        let x = random_matrix(&mut rng, 8, 6, 1.0);
        let dout = random_matrix(&mut rng, 8, 4, 1.0);
        let dense = Layer::Dense(DenseLayer::new(w.clone(), b.clone()).unwrap());
        let cheby = Layer::Cheby(
            ChebyLayer::new(6, 0, w, b, ChebyMode::WeightForm, InputMap::Identity).unwrap(),
        );
        let (yd, td) = dense.forward_traced(&x).unwrap();
        let (yc, tc) = cheby.forward_traced(&x).unwrap();
        out_err = out_err.max(max_diff(yd.as_slice(), yc.as_slice()));
        let (gd, xd) = dense.backward(&td, &dout, true).unwrap();
        let (gc, xc) = cheby.backward(&tc, &dout, true).unwrap();
        grad_err = grad_err
            .max(max_diff(&gd.weights, &gc.weights))
            .max(max_diff(&gd.bias, &gc.bias))
            .max(max_diff(xd.unwrap().as_slice(), xc.unwrap().as_slice()));
    }
    ensure(out_err <= 1e-12, || {
        format!("output difference {out_err:e}")
    })?;
    ensure(grad_err <= 1e-10, || {
        format!("gradient difference {grad_err:e}")
    })?;
    Ok(format!(
        "20 seeds, outputs {out_err:.1e}, gradients {grad_err:.1e}"
    ))
}

fn gradient_chain() -> Outcome {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for mode in [ChebyMode::WeightForm, ChebyMode::ExpansionForm] {
        for first in [InputMap::Identity, InputMap::Squash] {
            for k in [1, 3, 6] {
                let mut found = false;
                for seed in 0..50u64 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64);
                    let mut net = Network::cheby_with_maps(
                        4,
                        &[4, 2],
                        3,
                        k,
                        mode,
                        first,
                        InputMap::Squash,
                        &mut rng,
                    );
                    for (t, tensor) in net.param_tensors_mut().into_iter().enumerate() {
                        if t % 2 == 1 {
                            tensor
                                .iter_mut()
                                .for_each(|b| *b = rng.random_range(-0.2..0.2));
                        }
                    }
                    let x = random_matrix(&mut rng, 10, 4, 0.9);
                    let y: Vec<usize> = (0..10).map(|_| rng.random_range(0..3)).collect();
                    // skip draws that sit on a ReLU kink
                    let (_, trace) = net.forward(&x).unwrap();
                    let hidden = &trace.pre_activations[..trace.pre_activations.len() - 1];
                    if hidden
                        .iter()
                        .any(|z| z.as_slice().iter().any(|v| v.abs() <= 1e-3))
                    {
                        continue;
                    }
                    let (_, grads) = net.loss_and_grads(&x, &y).unwrap();
                    let analytic: Vec<Vec<f64>> =
                        grads.tensors().iter().map(|t| t.to_vec()).collect();
                    for (t, g) in analytic.iter().enumerate() {
                        for (e, &a) in g.iter().enumerate() {
                            let mut plus = net.clone();
                            plus.param_tensors_mut()[t][e] += H;
                            let mut minus = net.clone();
                            minus.param_tensors_mut()[t][e] -= H;
                            let fd = (plus.loss(&x, &y).unwrap() - minus.loss(&x, &y).unwrap())
                                / (2.0 * H);
                            worst = worst.max((a - fd).abs() / a.abs().max(1.0));
                        }
                    }
                    found = true;
                    cases += 1;
                    break;
                }
                ensure(found, || {
                    format!("no kink-free draw for {mode:?} {first:?} k={k}")
                })?;
            }
        }
    }
    ensure(worst <= 1e-4, || format!("relative error {worst:e}"))?;
    Ok(format!(
        "{cases} networks, worst relative error {worst:.1e}"
    ))
}

fn parameter_table() -> Outcome {
    let rows = [
        (Decomposition::Chebyshev, 20, 3, 80),
        (Decomposition::Gaussian, 20, 3, 240),
        (Decomposition::Fourier, 20, 3, 160),
        (Decomposition::Legendre, 20, 3, 80),
        (Decomposition::Fourier, 1, 0, 2),
        (Decomposition::Dense, 20, 3, 20),
    ];
    for (d, n, k, expected) in rows {
        let got = param_count(d, n, k);
        ensure(got == expected, || {
            format!("{d:?} n={n} k={k}: {got} != {expected}")
        })?;
    }
    Ok("80/240/160/80 at n=20, k=3".into())
}

fn boundary_property() -> Outcome {
    let cfg = ExperimentConfig::default();
    let rings = make_rings(600, 0.03, 11).map_err(|e| e.to_string())?;
    let prep = prepare(&rings, cfg.train_fraction, cfg.seed).map_err(|e| e.to_string())?;
    let r = run_experiment_prepared(&cfg, &prep).map_err(|e| e.to_string())?;
    let xor = make_xor(400, 7).map_err(|e| e.to_string())?;
    let prep = prepare(&xor, cfg.train_fraction, cfg.seed).map_err(|e| e.to_string())?;
    let x = run_experiment_prepared(&cfg, &prep).map_err(|e| e.to_string())?;
    let detail = format!(
        "rings cheby {:.2} mlp {:.2}; xor cheby {:.2} mlp {:.2}",
        r.cheby.best, r.mlp.best, x.cheby.best, x.mlp.best
    );
    ensure(r.cheby.best >= 95.0, || detail.clone())?;
    ensure(r.cheby.best >= r.mlp.best - 2.0, || detail.clone())?;
    ensure(x.cheby.best >= 95.0 && x.mlp.best >= 95.0, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn k_overfitting() -> Outcome {
    let rings = make_rings(100, 0.03, 11).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig::default();
    let train = prepare(&rings, cfg.train_fraction, cfg.seed)
        .map_err(|e| e.to_string())?
        .train
        .len();
    ensure(train == 80, || format!("train size {train}"))?;
    let sweep = k_sweep(&cfg, &rings, &[0, 1, 3, 6, 10]).map_err(|e| e.to_string())?;
    let params: Vec<usize> = sweep.rows.iter().map(|r| r.cheby.param_count).collect();
    ensure(params.windows(2).all(|w| w[0] < w[1]), || {
        format!("params {params:?}")
    })?;
    let f1 = |k: usize| sweep.rows.iter().find(|r| r.k == k).unwrap().cheby.macro_f1;
    let curve: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("{}:{:.1}", r.k, r.cheby.macro_f1))
        .collect();
    let detail = format!(
        "params {params:?}, F1 {}, best k {}",
        curve.join(" "),
        sweep.best_k
    );
    ensure(f1(sweep.best_k) >= f1(10), || detail.clone())?;
    Ok(detail)
}

fn pruning() -> Outcome {
    let cfg = ExperimentConfig::default();
    let rings = make_rings(600, 0.03, 11).map_err(|e| e.to_string())?;
    let prep = prepare(&rings, cfg.train_fraction, cfg.seed).map_err(|e| e.to_string())?;
    let (_, net) = run_architecture(ModelKind::Cheby, &cfg, &prep).map_err(|e| e.to_string())?;
    let net = net.ok_or("no trained model")?;
    let ft = FineTuneConfig::default();

    let out = prune_run(
        &net,
        Strategy::Threshold,
        &TauSpec::default(),
        &ft,
        &prep.train,
        &prep.test,
    )
    .map_err(|e| e.to_string())?;
    let frontier: Vec<String> = out
        .candidates
        .iter()
        .map(|c| {
            format!(
                "p{}:{:.1}%/{:.2}",
                c.percentile.unwrap_or(f64::NAN),
                c.report.compression,
                c.report.accuracy_after.unwrap_or(0.0)
            )
        })
        .collect();
    let r = out.chosen_report();
    let (before, after) = (r.accuracy_before.unwrap(), r.accuracy_after.unwrap());
    let detail = format!(
        "chosen {:.1}% at {after:.2} (unpruned {before:.2}); frontier {}",
        r.compression,
        frontier.join(" ")
    );
    ensure(r.compression >= 50.0 && after >= before - 1.0, || {
        detail.clone()
    })?;
    for (layer, mask) in out.network.layers().iter().zip(&out.masks.layers) {
        for (w, keep) in layer.weights().iter().zip(mask) {
            ensure(*keep || w.to_bits() == 0, || {
                format!("masked weight {w} is not zero")
            })?;
        }
    }

    let grouped = prune_run(
        &net,
        Strategy::Group,
        &TauSpec::default(),
        &ft,
        &prep.train,
        &prep.test,
    )
    .map_err(|e| e.to_string())?;
    for (layer, mask) in grouped.network.layers().iter().zip(&grouped.masks.layers) {
        if let Some(c) = layer.as_cheby() {
            let atomic = mask
                .chunks(c.order() + 1)
                .all(|g| g.iter().all(|&m| m == g[0]));
            ensure(atomic, || "group mask split a coefficient group".into())?;
        }
    }
    Ok(detail)
}

fn multivariate_fit() -> Outcome {
    let sq = fit_tensor(|p| p[0] * p[0], &[2]).map_err(|e| e.to_string())?;
    let e1 = max_diff(&sq.coeffs, &[0.5, 0.0, 0.5]);
    ensure(e1 <= 1e-12, || format!("x^2 coefficients {:?}", sq.coeffs))?;
    let bi = fit_tensor(|p| p[0] * p[0] * p[1], &[2, 1]).map_err(|e| e.to_string())?;
    // (m, n) lexicographic: c01 = c21 = 0.5
    let e2 = max_diff(&bi.coeffs, &[0.0, 0.5, 0.0, 0.0, 0.0, 0.5]);
    ensure(e2 <= 1e-12, || {
        format!("x^2 y coefficients {:?}", bi.coeffs)
    })?;
    let pw = fit_pairwise(
        |p| p[0] * p[1] + p[1] * p[2],
        3,
        1,
        &[(0, 1), (0, 2), (1, 2)],
    )
    .map_err(|e| e.to_string())?;
    let v = eval_pairwise(&pw, &[0.5, 0.5, -1.0]).map_err(|e| e.to_string())?;
    let e3 = (v + 0.25).abs();
    ensure(e3 <= 1e-8, || format!("pairwise value {v}"))?;
    Ok(format!("x^2 {e1:.1e}, x^2 y {e2:.1e}, pairwise {e3:.1e}"))
}

fn write_dataset(ds: &Dataset, dir: &std::path::Path, name: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    write_csv(ds, &path).unwrap();
    path
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = write_dataset(&make_rings(600, 0.03, 11).unwrap(), dir.path(), "rings.csv");
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_chebynet"))
            .args(["compare", "--seed", "5", "--k", "3", "--repeats", "10"])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join("results.json")).map_err(|e| e.to_string())
    };
    let (a, b) = (run("first")?, run("second")?);
    ensure(a == b, || "results documents differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn timing_direction() -> Outcome {
    let cfg = BenchConfig {
        features: vec![90],
        ks: vec![1, 2, 4, 8],
        ..Default::default()
    };
    let rows = bench_timing(&cfg).map_err(|e| e.to_string())?;
    let mlp = rows
        .iter()
        .find(|r| r.model == ModelKind::Mlp)
        .unwrap()
        .infer_s_per_batch;
    let cheby: Vec<(usize, f64)> = rows
        .iter()
        .filter_map(|r| r.k.map(|k| (k, r.infer_s_per_batch)))
        .collect();
    let detail = format!(
        "mlp {:.2e} s; {}",
        mlp,
        cheby
            .iter()
            .map(|(k, t)| format!("k={k} {t:.2e} s"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    ensure(cheby.windows(2).all(|w| w[0].1 <= w[1].1), || {
        detail.clone()
    })?;
    let k2 = cheby.iter().find(|(k, _)| *k == 2).unwrap().1;
    ensure(mlp <= k2, || detail.clone())?;
    Ok(detail)
}

#[test]
fn acceptance() {
    let mut report = Report { failed: Vec::new() };
    let s = Duration::from_secs;
    report.run(1, "basis exactness", s(1), basis_exactness);
    report.run(
        2,
        "order-0 layer equals dense layer",
        s(1),
        mlp_generalisation,
    );
    report.run(
        3,
        "gradient chain vs finite differences",
        s(10),
        gradient_chain,
    );
    report.run(
        4,
        "decomposition parameter counts",
        Duration::from_millis(1),
        parameter_table,
    );
    report.run(5, "non-linear boundaries", s(120), boundary_property);
    report.run(6, "k-sweep shape", s(180), k_overfitting);
    report.run(7, "pruning frontier", s(120), pruning);
    report.run(8, "multivariate fitting", s(1), multivariate_fit);
    report.run(9, "compare determinism", s(120), determinism);
    report.run(10, "timing direction", s(60), timing_direction);
    say(&format!(
        "acceptance: {} of 10 passed{}",
        10 - report.failed.len(),
        if report.failed.is_empty() {
            String::new()
        } else {
            format!(", failed {:?}", report.failed)
        }
    ));
    assert!(
        report.failed.is_empty(),
        "failed criteria: {:?}",
        report.failed
    );
}
