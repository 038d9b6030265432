use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chebynet::data::{
    apply_scaler, load_csv, make_rings, make_xor, write_csv, Dataset, ScalerParams,
};
use chebynet::harness::{
    bench_timing, boundary_csv, comparison_row, export_boundary_grid, export_weight_curves,
    k_sweep, prepare, prune_row, prune_run, run_architecture, run_experiment_prepared, sweep_csv,
    timing_csv, weight_curves_csv, wins_row, BenchConfig, Comparison, DatasetSummary, Environment,
    ExperimentConfig, FineTuneConfig, ModelKind, PruneCandidate, ResultsDocument, TauSpec,
    WinTally, DEFAULT_PERCENTILES, FINE_TUNE_EPOCHS, RESULTS_SCHEMA,
};
use chebynet::multicheb::{
    cheb_nodes, eval_pairwise, eval_tensor, fit_pairwise, fit_tensor, MAX_DIMS,
};
use chebynet::network::{ChebyMode, ModelFile};
use chebynet::prune::Strategy;
use clap::{Args, Parser, Subcommand, ValueEnum};
use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Value,
};
use log::info;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "chebynet",
    version,
    about = "Chebyshev adaptive-weight networks versus MLPs"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one architecture best-of-N and save the best model.
    Train(TrainArgs),
    /// Train MLP and Chebyshev networks on the same split and compare.
    Compare(CompareArgs),
    /// Compare across several Chebyshev orders.
    SweepK(SweepArgs),
    /// Prune a saved Chebyshev model and fine-tune it.
    Prune(PruneArgs),
    /// Export a decision-boundary grid for a saved model.
    Boundary(BoundaryArgs),
    /// Export adaptive-weight curves of one layer of a saved model.
    Curves(CurvesArgs),
    /// Time training steps and inference per batch.
    Bench(BenchArgs),
    /// Fit a multivariate Chebyshev series to an expression.
    Fit(FitArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    WeightForm,
    ExpansionForm,
}

impl From<ModeArg> for ChebyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WeightForm => ChebyMode::WeightForm,
            ModeArg::ExpansionForm => ChebyMode::ExpansionForm,
        }
    }
}

#[derive(Args)]
struct ExpArgs {
    /// Headed CSV with a `target` column (or labels in the last column).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chebyshev order.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_enum, default_value = "weight-form")]
    mode: ModeArg,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "4,2")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// More datasets, compared with the same settings. Each gets its own
    /// subdirectory of --out and the run ends with a win count.
    #[arg(long, value_delimiter = ',')]
    extra_data: Vec<PathBuf>,
}

impl ExpArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            hidden: self.hidden.clone(),
            lr: self.lr,
            epochs: self.epochs,
            repeats: self.repeats,
            k: self.k,
            mode: self.mode.into(),
            seed: self.seed,
            train_fraction: self.train_fraction,
            batch_size: self.batch,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Cheby,
    Mlp,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long, value_enum, default_value = "cheby")]
    model: ModelArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// Orders to try.
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,6,10")]
    ks: Vec<usize>,
}

/// Recreates the split a model was trained on.
#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Threshold,
    Group,
}

#[derive(Args)]
struct PruneArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_enum, default_value = "threshold")]
    strategy: StrategyArg,
    /// Absolute threshold for every layer.
    #[arg(long, conflicts_with_all = ["percentile", "sweep"])]
    tau: Option<f64>,
    /// Per-layer percentile of parameter magnitudes.
    #[arg(long, conflicts_with = "sweep")]
    percentile: Option<f64>,
    /// Percentiles to sweep (the default when no threshold is given).
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = FINE_TUNE_EPOCHS)]
    fine_tune_epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long)]
    batch: Option<usize>,
    /// Accuracy points a candidate may lose and still count as preserving.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    /// Baseline MLP accuracy to print alongside the pruned model.
    #[arg(long)]
    baseline: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Feature indices to plot when the data has more than two features.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pair: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    layer: usize,
    #[arg(long, default_value_t = 101)]
    samples: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,30,90")]
    features: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, value_delimiter = ',', default_value = "4,2")]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value = "weight-form")]
    mode: ModeArg,
    #[arg(long, default_value_t = 30)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Expression in x, y, z, w (e.g. "x^2*y" or "math::exp(x)").
    #[arg(long)]
    expr: String,
    /// Series order per variable; the count sets the dimension.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    orders: Vec<usize>,
    /// Fit a sum of bivariate series over all variable pairs instead, using
    /// the first order for every variable.
    #[arg(long)]
    pairwise: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Rings,
    Xor,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 600)]
    n: usize,
    /// Radial noise standard deviation (rings only).
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::SweepK(a) => sweep(a),
        Command::Prune(a) => prune(a),
        Command::Boundary(a) => boundary(a),
        Command::Curves(a) => curves(a),
        Command::Bench(a) => bench(a),
        Command::Fit(a) => fit(a),
        Command::Synth(a) => synth(a),
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn load(path: &Path) -> Result<Dataset> {
    Ok(load_csv(path)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.exp.config();
    cfg.validate()?;
    let ds = load(&a.exp.data)?;
    let prep = prepare(&ds, cfg.train_fraction, cfg.seed)?;
    let kind = match a.model {
        ModelArg::Cheby => ModelKind::Cheby,
        ModelArg::Mlp => ModelKind::Mlp,
    };
    let (result, net) = run_architecture(kind, &cfg, &prep)?;
    let Some(net) = net else {
        bail!("every repeat failed; no model to save");
    };
    let name = dataset_name(&a.exp.data);
    let summary = DatasetSummary::new(&name, &ds, &prep.split);
    let model = ModelFile::from_network(&net, Some(prep.scaler.clone()));
    write_out(&a.exp.out, "model.json", &model.to_json()?)?;
    let doc = ResultsDocument::new("train", cfg, summary, &result);
    write_out(&a.exp.out, "results.json", &doc.to_json()?)?;
    println!(
        "{name}: {} best {:.2} (repeat {}), mean {:.2}, params {}, failed {}",
        kind.name(),
        result.best,
        result.best_repeat.unwrap_or(0),
        result.mean,
        result.param_count,
        result.failed
    );
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg = a.exp.config();
    cfg.validate()?;
    if a.extra_data.is_empty() {
        let cmp = compare_one(&cfg, &a.exp.data, &a.exp.out)?;
        println!(
            "params: cheby {}, mlp {}; failed repeats: cheby {}, mlp {}",
            cmp.cheby.param_count, cmp.mlp.param_count, cmp.cheby.failed, cmp.mlp.failed
        );
        return Ok(());
    }
    let paths: Vec<&PathBuf> = std::iter::once(&a.exp.data).chain(&a.extra_data).collect();
    let mut names: Vec<String> = paths.iter().map(|p| dataset_name(p)).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!(
            "two datasets share the name {:?}; output directories would collide",
            w[0]
        );
    }
    let mut cmps = Vec::new();
    for path in paths {
        let name = dataset_name(path);
        let cmp = compare_one(&cfg, path, &a.exp.out.join(&name))?;
        cmps.push((name, cmp));
    }
    let tally = WinTally::from_comparisons(cmps.iter().map(|(_, c)| c));
    let rows = cmps
        .into_iter()
        .map(|(dataset, c)| WinRow {
            dataset,
            cheby: c.cheby.best,
            mlp: c.mlp.best,
            diff: c.diff,
            cheby_params: c.cheby.param_count,
            mlp_params: c.mlp.param_count,
        })
        .collect();
    let summary = WinSummary {
        schema: RESULTS_SCHEMA,
        rows,
        tally,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_out(&a.exp.out, "wins.json", &json)?;
    println!("{}", wins_row(&tally));
    Ok(())
}

#[derive(Serialize)]
struct WinRow {
    dataset: String,
    cheby: f64,
    mlp: f64,
    diff: f64,
    cheby_params: usize,
    mlp_params: usize,
}

#[derive(Serialize)]
struct WinSummary {
    schema: &'static str,
    rows: Vec<WinRow>,
    tally: WinTally,
}

fn compare_one(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<Comparison> {
    let ds = load(data)?;
    let prep = prepare(&ds, cfg.train_fraction, cfg.seed)?;
    let cmp = run_experiment_prepared(cfg, &prep)?;
    let name = dataset_name(data);
    let doc = ResultsDocument::new(
        "compare",
        cfg.clone(),
        DatasetSummary::new(&name, &ds, &prep.split),
        &cmp,
    );
    write_out(out, "results.json", &doc.to_json()?)?;
    println!("{}", comparison_row(&name, &cmp));
    Ok(cmp)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.exp.config();
    let ds = load(&a.exp.data)?;
    let result = k_sweep(&cfg, &ds, &a.ks)?;
    let prep = prepare(&ds, cfg.train_fraction, cfg.seed)?;
    let name = dataset_name(&a.exp.data);
    let doc = ResultsDocument::new(
        "sweep-k",
        cfg,
        DatasetSummary::new(&name, &ds, &prep.split),
        &result,
    );
    write_out(&a.exp.out, "results.json", &doc.to_json()?)?;
    write_out(&a.exp.out, "sweep.csv", &sweep_csv(&result))?;
    for r in &result.rows {
        println!(
            "k={}: cheby acc {:.2} f1 {:.2} params {}; mlp acc {:.2} f1 {:.2} params {}",
            r.k,
            r.cheby.best,
            r.cheby.macro_f1,
            r.cheby.param_count,
            r.mlp.best,
            r.mlp.macro_f1,
            r.mlp.param_count
        );
    }
    println!("best k by macro-F1: {}", result.best_k);
    Ok(())
}

/// Train and test parts of the split, scaled with the model's own scaler when
/// it carries one.
fn split_for_model(s: &SplitArgs, scaler: Option<&ScalerParams>) -> Result<(Dataset, Dataset)> {
    let ds = load(&s.data)?;
    let prep = prepare(&ds, s.train_fraction, s.seed)?;
    match scaler {
        None => Ok((prep.train, prep.test)),
        Some(sc) => {
            let train = ds.subset(&prep.split.train);
            let test = ds.subset(&prep.split.test);
            Ok((
                train.with_features(apply_scaler(sc, &train.x)?),
                test.with_features(apply_scaler(sc, &test.x)?),
            ))
        }
    }
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

#[derive(Serialize)]
struct PruneDocument<'a> {
    schema: &'static str,
    command: &'static str,
    strategy: Strategy,
    spec: &'a TauSpec,
    fine_tune: &'a FineTuneConfig,
    candidates: &'a [PruneCandidate],
    chosen: usize,
    environment: Environment,
}

fn prune(a: PruneArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let net = file.to_network()?;
    let (train, test) = split_for_model(&a.split, file.scaler.as_ref())?;
    let strategy = match a.strategy {
        StrategyArg::Threshold => Strategy::Threshold,
        StrategyArg::Group => Strategy::Group,
    };
    let spec = match (a.tau, a.percentile, a.sweep) {
        (Some(t), _, _) => TauSpec::Absolute(t),
        (_, Some(p), _) => TauSpec::Percentile(p),
        (_, _, Some(ps)) => TauSpec::Sweep(ps),
        _ => TauSpec::Sweep(DEFAULT_PERCENTILES.to_vec()),
    };
    let ft = FineTuneConfig {
        lr: a.lr,
        epochs: a.fine_tune_epochs,
        batch_size: a.batch,
        seed: a.split.seed,
        tolerance: a.tolerance,
    };
    let outcome = prune_run(&net, strategy, &spec, &ft, &train, &test)?;
    let doc = PruneDocument {
        schema: RESULTS_SCHEMA,
        command: "prune",
        strategy,
        spec: &spec,
        fine_tune: &ft,
        candidates: &outcome.candidates,
        chosen: outcome.chosen,
        environment: Environment::current(),
    };
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    write_out(&a.out, "prune.json", &json)?;
    let pruned = ModelFile::from_network(&outcome.network, file.scaler.clone());
    write_out(&a.out, "pruned-model.json", &pruned.to_json()?)?;

    for c in &outcome.candidates {
        let r = &c.report;
        println!(
            "{}compression {:.1}%, accuracy {:.2} -> {:.2}",
            c.percentile.map(|p| format!("p{p}: ")).unwrap_or_default(),
            r.compression,
            r.accuracy_before.unwrap_or(0.0),
            r.accuracy_after.unwrap_or(0.0)
        );
    }
    let name = dataset_name(&a.split.data);
    let chosen = outcome.chosen_report();
    match a.baseline {
        Some(b) => println!("{}", prune_row(&name, b, chosen)),
        None => println!(
            "{name}: before {:.3}, pruned-cheby {:.3}, compression {:.1}",
            chosen.accuracy_before.unwrap_or(0.0),
            chosen.accuracy_after.unwrap_or(0.0),
            chosen.compression
        ),
    }
    Ok(())
}

fn boundary(a: BoundaryArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let net = file.to_network()?;
    let (_, test) = split_for_model(&a.split, file.scaler.as_ref())?;
    let pair = a.pair.map(|p| (p[0], p[1]));
    let grid = export_boundary_grid(&net, &test, a.resolution, pair)?;
    let path = write_out(&a.out, "boundary.csv", &boundary_csv(&grid))?;
    let wrong = grid.points.iter().filter(|p| p.misclassified).count();
    println!(
        "{} lattice rows, {} test rows ({} misclassified) -> {}",
        grid.lattice.len(),
        grid.points.len(),
        wrong,
        path.display()
    );
    Ok(())
}

fn curves(a: CurvesArgs) -> Result<()> {
    let net = load_model(&a.model)?.to_network()?;
    let rows = export_weight_curves(&net, a.layer, a.samples)?;
    let path = write_out(&a.out, "curves.csv", &weight_curves_csv(&rows))?;
    println!("{} curve rows -> {}", rows.len(), path.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        features: a.features,
        ks: a.ks,
        batch: a.batch,
        hidden: a.hidden,
        mode: a.mode.into(),
        repetitions: a.repetitions,
        seed: a.seed,
        ..Default::default()
    };
    let rows = bench_timing(&cfg)?;
    write_out(&a.out, "timing.csv", &timing_csv(&rows))?;
    for r in &rows {
        println!(
            "{:5} n={:3} k={:>2}: train {:.3e} s, infer {:.3e} s",
            r.model.name(),
            r.features,
            r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            r.train_s_per_batch,
            r.infer_s_per_batch
        );
    }
    Ok(())
}

const VARS: [&str; MAX_DIMS] = ["x", "y", "z", "w"];

fn expression(expr: &str, dims: usize) -> Result<impl Fn(&[f64]) -> f64> {
    let node = build_operator_tree::<DefaultNumericTypes>(expr)
        .with_context(|| format!("parsing expression {expr:?}"))?;
    let eval =
        move |p: &[f64]| -> std::result::Result<f64, evalexpr::EvalexprError<DefaultNumericTypes>> {
            let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
            for (name, &v) in VARS.iter().zip(p) {
                ctx.set_value((*name).into(), Value::Float(v))?;
            }
            node.eval_number_with_context(&ctx)
        };
    // surface unknown variables and type errors before fitting
    eval(&vec![0.0; dims]).with_context(|| format!("evaluating {expr:?}"))?;
    Ok(move |p: &[f64]| eval(p).unwrap_or(f64::NAN))
}

fn fit(a: FitArgs) -> Result<()> {
    let dims = a.orders.len();
    if dims == 0 || dims > MAX_DIMS {
        bail!("between 1 and {MAX_DIMS} orders are required, got {dims}");
    }
    let f = expression(&a.expr, dims)?;
    // check points: node grid of one order higher, so they differ from the fit nodes
    let check: Vec<Vec<f64>> = {
        let axes: Vec<Vec<f64>> = a.orders.iter().map(|&m| cheb_nodes(m + 1)).collect();
        let mut pts = vec![Vec::new()];
        for axis in &axes {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        pts
    };
    let (json, max_err) = if a.pairwise {
        if dims < 2 {
            bail!("a pairwise fit needs at least two variables");
        }
        let pairs: Vec<(usize, usize)> = (0..dims)
            .flat_map(|i| (i + 1..dims).map(move |j| (i, j)))
            .collect();
        let model = fit_pairwise(&f, dims, a.orders[0], &pairs)?;
        let err = check
            .iter()
            .map(|p| Ok((eval_pairwise(&model, p)? - f(p)).abs()))
            .collect::<chebynet::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        (serde_json::to_string_pretty(&model)?, err)
    } else {
        let coeffs = fit_tensor(&f, &a.orders)?;
        let err = check
            .iter()
            .map(|p| Ok((eval_tensor(&coeffs, p)? - f(p)).abs()))
            .collect::<chebynet::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        (serde_json::to_string_pretty(&coeffs)?, err)
    };
    let path = write_out(&a.out, "fit.json", &(json + "\n"))?;
    println!(
        "max error on check grid {max_err:.3e} -> {}",
        path.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let (ds, name) = match a.kind {
        SynthKind::Rings => (make_rings(a.n, a.noise, a.seed)?, "rings.csv"),
        SynthKind::Xor => (make_xor(a.n, a.seed)?, "xor.csv"),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let path = a.out.join(name);
    write_csv(&ds, &path)?;
    println!("{} samples -> {}", ds.len(), path.display());
    Ok(())
}
