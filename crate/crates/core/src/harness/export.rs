use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::matrix::Matrix;
use crate::network::{Layer, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeRow {
    pub x: f64,
    pub y: f64,
    pub predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub x: f64,
    pub y: f64,
    pub truth: usize,
    pub predicted: usize,
    pub misclassified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    /// Feature indices plotted on the x and y axes.
    pub features: (usize, usize),
    pub lattice: Vec<LatticeRow>,
    pub points: Vec<PointRow>,
}

fn linspace(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates `net` on a `resolution x resolution` lattice over `[-1, 1]^2` and
/// on every point of `test` (already scaled).
///
/// With more than two features, `pair` picks the plotted features; the others
/// are held at 0 on the lattice. Test points are predicted from their full
/// feature rows.
pub fn export_boundary_grid(
    net: &Network,
    test: &Dataset,
    resolution: usize,
    pair: Option<(usize, usize)>,
) -> Result<BoundaryGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    let n = net.inputs();
    if test.n_features() != n {
        return Err(Error::dims(
            "test features vs model inputs",
            n,
            test.n_features(),
        ));
    }
    let (a, b) = match pair {
        Some((a, b)) if a < n && b < n && a != b => (a, b),
        Some((a, b)) => {
            return Err(Error::InvalidArgument(format!(
                "feature pair ({a}, {b}) invalid for {n} features"
            )))
        }
        None if n == 2 => (0, 1),
        None => {
            return Err(Error::InvalidArgument(format!(
                "model has {n} features; select a feature pair"
            )))
        }
    };

    let axis = linspace(resolution);
    let mut grid = Matrix::zeros(resolution * resolution, n);
    for (r, (&x, &y)) in axis
        .iter()
        .flat_map(|x| axis.iter().map(move |y| (x, y)))
        .enumerate()
    {
        grid.set(r, a, x);
        grid.set(r, b, y);
    }
    let preds = net.predict(&grid)?;
    let lattice = (0..grid.rows())
        .map(|r| LatticeRow {
            x: grid.get(r, a),
            y: grid.get(r, b),
            predicted: preds[r],
        })
        .collect();

    let points = if test.is_empty() {
        Vec::new()
    } else {
        let tp = net.predict(&test.x)?;
        (0..test.len())
            .map(|r| PointRow {
                x: test.x.get(r, a),
                y: test.x.get(r, b),
                truth: test.y[r],
                predicted: tp[r],
                misclassified: test.y[r] != tp[r],
            })
            .collect()
    };
    Ok(BoundaryGrid {
        features: (a, b),
        lattice,
        points,
    })
}

/// Lattice and test rows in one table; `kind` is `grid` or `test`, and the
/// truth columns are empty on lattice rows.
pub fn boundary_csv(grid: &BoundaryGrid) -> String {
    let mut out = String::from("kind,x,y,true,predicted,misclassified\n");
    for r in &grid.lattice {
        let _ = writeln!(out, "grid,{},{},,{},", r.x, r.y, r.predicted);
    }
    for p in &grid.points {
        let _ = writeln!(
            out,
            "test,{},{},{},{},{}",
            p.x, p.y, p.truth, p.predicted, p.misclassified as u8
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub o: usize,
    pub i: usize,
    pub x: f64,
    pub w: f64,
}

/// Tabulates every adaptive weight `w_oi(x)` of layer `layer` at `samples`
/// evenly spaced points of `[-1, 1]`.
pub fn export_weight_curves(net: &Network, layer: usize, samples: usize) -> Result<Vec<CurveRow>> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let l = net
        .layers()
        .get(layer)
        .ok_or_else(|| Error::IndexOutOfRange(format!("layer {layer}")))?;
    let c = match l {
        Layer::Cheby(c) => c,
        Layer::Dense(_) => {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} is dense and has no weight curves"
            )))
        }
    };
    let xs = linspace(samples);
    let mut rows = Vec::with_capacity(c.outputs() * c.inputs() * samples);
    for o in 0..c.outputs() {
        for i in 0..c.inputs() {
            for &x in &xs {
                rows.push(CurveRow {
                    o,
                    i,
                    x,
                    w: c.adaptive_weight(o, i, x),
                });
            }
        }
    }
    Ok(rows)
}

pub fn weight_curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("o,i,x,w\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.o, r.i, r.x, r.w);
    }
    out
}
