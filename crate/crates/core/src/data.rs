//! Tabular datasets: CSV ingestion, min-max scaling into `[-1, 1]`,
//! stratified splitting and two synthetic benchmarks.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::affine_to_unit;
use crate::matrix::Matrix;
use crate::{Error, Result};

pub const TARGET_COLUMN: &str = "target";
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Contiguous labels in `0..n_classes`.
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    /// Original label text for each class index, in sorted order.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Validates that labels are in range and every class occurs.
    pub fn new(
        x: Matrix,
        y: Vec<usize>,
        n_classes: usize,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims("labels per sample", x.rows(), y.len()));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::dims("feature names", x.cols(), feature_names.len()));
        }
        if class_names.len() != n_classes {
            return Err(Error::dims("class names", n_classes, class_names.len()));
        }
        let mut seen = vec![false; n_classes];
        for &label in &y {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: n_classes,
                });
            }
            seen[label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(Dataset {
            x,
            y,
            n_classes,
            feature_names,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }

    /// Rows by index. Keeps the parent's class list, so a subset may lack
    /// some classes.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Replaces the feature matrix (e.g. with its scaled version).
    pub fn with_features(&self, x: Matrix) -> Dataset {
        Dataset { x, ..self.clone() }
    }
}

fn numeric_key(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed CSV. The `target` column (or the last column when there is
/// none) holds labels, remapped to `0..C` by sorted original value: numeric
/// order when every label parses as a number, lexical order otherwise.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput("csv file has no header"));
    }
    if headers.len() < 2 {
        return Err(Error::InvalidArgument(
            "csv needs at least one feature column and a target column".into(),
        ));
    }
    let target = headers
        .iter()
        .position(|h| h == TARGET_COLUMN)
        .unwrap_or(headers.len() - 1);
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == target {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: headers[c].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: headers[c].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            features.push(v);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyInput("csv file has no data rows"));
    }

    let mut classes: Vec<String> = raw_labels.clone();
    classes.sort();
    classes.dedup();
    let all_numeric = classes.iter().all(|c| numeric_key(c).is_some());
    if all_numeric {
        classes.sort_by(|a, b| numeric_key(a).unwrap().total_cmp(&numeric_key(b).unwrap()));
    }
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let y = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let n_classes = classes.len();
    let x = Matrix::from_vec(raw_labels.len(), feature_names.len(), features)?;
    Dataset::new(x, y, n_classes, feature_names, classes)
}

/// Writes features and the original label text; [`parse_csv`] reads it back
/// to an identical dataset.
pub fn to_csv_string(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(TARGET_COLUMN);
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.row(r).iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[ds.y[r]].clone());
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv flush: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)?).map_err(|e| Error::io(path, e))
}

/// Per-feature range fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn is_constant(&self, feature: usize) -> bool {
        !(self.max[feature] > self.min[feature])
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.min.len())
            .filter(|&f| self.is_constant(f))
            .collect()
    }
}

pub fn fit_scaler(train: &Matrix) -> Result<ScalerParams> {
    if train.rows() == 0 {
        return Err(Error::EmptyInput("scaler fitted on zero rows"));
    }
    let mut min = train.row(0).to_vec();
    let mut max = min.clone();
    for r in 1..train.rows() {
        for (c, &v) in train.row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// Maps each feature into `[-1, 1]` using the fitted range. Constant features
/// go to 0 and values outside the training range are clamped.
pub fn apply_scaler(params: &ScalerParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.min.len() {
        return Err(Error::dims(
            "scaler feature count",
            params.min.len(),
            x.cols(),
        ));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = if params.is_constant(c) {
                0.0
            } else {
                affine_to_unit(*v, params.min[c], params.max[c])?.clamp(-1.0, 1.0)
            };
        }
    }
    Ok(out)
}

/// Train/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class split. Each class contributes `floor(fraction * count)` training
/// rows, with leftover rows handed out by largest remainder so the training
/// total is `round(fraction * n)`. Classes with two or more rows keep at least
/// one row on each side; a single-row class goes to training.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.y.iter().enumerate() {
        by_class[l].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let ideal: Vec<f64> = counts.iter().map(|&c| train_fraction * c as f64).collect();
    let mut take: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();

    let target = (train_fraction * ds.len() as f64).round() as usize;
    let assigned: usize = take.iter().sum();
    let mut order: Vec<usize> = (0..ds.n_classes).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        if take[c] < counts[c] {
            take[c] += 1;
        }
    }
    for (c, t) in take.iter_mut().enumerate() {
        match counts[c] {
            0 => {}
            1 => {
                warn!("class {c} has a single sample; it goes to the training split");
                *t = 1;
            }
            n => *t = (*t).clamp(1, n - 1),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::with_capacity(target),
        test: Vec::with_capacity(ds.len() - target.min(ds.len())),
    };
    for (members, &t) in by_class.iter_mut().zip(&take) {
        members.shuffle(&mut rng);
        split.train.extend_from_slice(&members[..t]);
        split.test.extend_from_slice(&members[t..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn synthetic(x: Vec<f64>, y: Vec<usize>) -> Dataset {
    let n = y.len();
    Dataset::new(
        Matrix::from_vec(n, 2, x).expect("two features per point"),
        y,
        2,
        vec!["x1".into(), "x2".into()],
        vec!["0".into(), "1".into()],
    )
    .expect("both classes are generated")
}

pub const RING_RADII: [f64; 2] = [0.4, 0.85];

/// Two concentric rings (label 0 inner, label 1 outer) with Gaussian radial
/// noise; alternating labels, so classes differ in size by at most one.
pub fn make_rings(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "make_rings needs n >= 8, got {n}"
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sd must be >= 0, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sd > 0.0).then(|| Normal::new(0.0, noise_sd).expect("positive sd"));
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let r = RING_RADII[label] + noise.map_or(0.0, |d| d.sample(&mut rng));
        x.push((r * theta.cos()).clamp(-1.0, 1.0));
        x.push((r * theta.sin()).clamp(-1.0, 1.0));
        y.push(label);
    }
    Ok(synthetic(x, y))
}

/// Uniform points in `[-1, 1]^2` labelled 1 when both coordinates share a
/// sign. Points cycle through the four quadrants so both classes are always
/// present.
pub fn make_xor(n: usize, seed: u64) -> Result<Dataset> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "make_xor needs n >= 8, got {n}"
        )));
    }
    const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (sx, sy) = SIGNS[i % 4];
        let a = sx * (1.0 - rng.random::<f64>());
        let b = sy * (1.0 - rng.random::<f64>());
        x.push(a);
        x.push(b);
        y.push(xor_label(a, b));
    }
    Ok(synthetic(x, y))
}

pub fn xor_label(a: f64, b: f64) -> usize {
    usize::from(a.signum() * b.signum() > 0.0)
}
