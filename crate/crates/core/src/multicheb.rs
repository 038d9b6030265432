//! Multivariate Chebyshev series on `[-1, 1]^d`.
//!
//! A tensor-product series `sum c_{m_1..m_d} T_{m_1}(x_1)...T_{m_d}(x_d)` is
//! fitted by sampling `f` on the grid of Chebyshev nodes and applying the
//! discrete cosine sums axis by axis. The sums are evaluated directly, which
//! is plenty fast for grids up to `17^4`.
//!
//! A pairwise model approximates `f` by a sum of bivariate series over chosen
//! variable pairs; its coefficients come from least squares on the node grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis;
use crate::{Error, Result};

pub const MAX_DIMS: usize = 4;
pub const MAX_ORDER: usize = 16;

/// `cos((2k + 1) pi / (2(M + 1)))` for `k = 0..=M`: the roots of `T_{M+1}`.
pub fn cheb_nodes(m: usize) -> Vec<f64> {
    let n = (m + 1) as f64;
    (0..=m)
        .map(|k| basis::snap_zero(((2 * k + 1) as f64 * PI / (2.0 * n)).cos()))
        .collect()
}

/// Coefficients `c_{m_1..m_d}` stored lexicographically (`m_1` slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCoeffs {
    pub orders: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl TensorCoeffs {
    pub fn zeros(orders: &[usize]) -> Self {
        TensorCoeffs {
            orders: orders.to_vec(),
            coeffs: vec![0.0; orders.iter().map(|m| m + 1).product()],
        }
    }

    pub fn dims(&self) -> usize {
        self.orders.len()
    }

    fn strides(&self) -> Vec<usize> {
        strides(&self.orders)
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(self.strides()).map(|(m, s)| m * s).sum()
    }

    pub fn get(&self, multi: &[usize]) -> f64 {
        self.coeffs[self.index(multi)]
    }
}

fn strides(orders: &[usize]) -> Vec<usize> {
    let mut s = vec![1; orders.len()];
    for a in (0..orders.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * (orders[a + 1] + 1);
    }
    s
}

/// Calls `visit(flat_index, multi_index)` for every multi-index in
/// `[0..=orders[0]] x ... x [0..=orders[d-1]]`, in lexicographic order.
fn for_each_multi(orders: &[usize], mut visit: impl FnMut(usize, &[usize])) {
    let total: usize = orders.iter().map(|m| m + 1).product();
    let mut multi = vec![0; orders.len()];
    for flat in 0..total {
        visit(flat, &multi);
        for a in (0..orders.len()).rev() {
            if multi[a] < orders[a] {
                multi[a] += 1;
                break;
            }
            multi[a] = 0;
        }
    }
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if orders.is_empty() || orders.len() > MAX_DIMS {
        return Err(Error::InvalidArgument(format!(
            "tensor fits support 1..={MAX_DIMS} dimensions, got {}",
            orders.len()
        )));
    }
    if let Some(m) = orders.iter().find(|&&m| m > MAX_ORDER) {
        return Err(Error::InvalidArgument(format!(
            "order {m} exceeds the maximum of {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Fits a tensor-product series of the given per-dimension orders. Exact
/// (to rounding) when `f` is a polynomial of componentwise degree <= `orders`.
pub fn fit_tensor(f: impl Fn(&[f64]) -> f64, orders: &[usize]) -> Result<TensorCoeffs> {
    check_orders(orders)?;
    let nodes: Vec<Vec<f64>> = orders.iter().map(|&m| cheb_nodes(m)).collect();
    let mut values = TensorCoeffs::zeros(orders);
    let mut point = vec![0.0; orders.len()];
    let mut bad = None;
    for_each_multi(orders, |flat, k| {
        for (a, &ka) in k.iter().enumerate() {
            point[a] = nodes[a][ka];
        }
        let v = f(&point);
        if !v.is_finite() && bad.is_none() {
            bad = Some((point.clone(), v));
        }
        values.coeffs[flat] = v;
    });
    if let Some((p, v)) = bad {
        return Err(Error::NonFinite(format!("f({p:?}) = {v}")));
    }

    // Cosine sums along one axis at a time:
    // c[m] = lambda_m / (M+1) * sum_k v[k] cos(m (2k+1) pi / (2(M+1))).
    let st = strides(orders);
    for (a, &m_a) in orders.iter().enumerate() {
        let n = m_a + 1;
        let cos_table: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (m, k) = (idx / n, idx % n);
                (m as f64 * (2 * k + 1) as f64 * PI / (2 * n) as f64).cos()
            })
            .collect();
        let stride = st[a];
        let mut next = values.coeffs.clone();
        for_each_multi(orders, |flat, multi| {
            if multi[a] != 0 {
                return;
            }
            for m in 0..n {
                let lambda = if m == 0 { 1.0 } else { 2.0 };
                let s: f64 = (0..n)
                    .map(|k| values.coeffs[flat + k * stride] * cos_table[m * n + k])
                    .sum();
                next[flat + m * stride] = lambda / n as f64 * s;
            }
        });
        values.coeffs = next;
    }
    Ok(values)
}

/// `sum c_{m} prod_i T_{m_i}(x_i)`.
pub fn eval_tensor(coeffs: &TensorCoeffs, point: &[f64]) -> Result<f64> {
    if point.len() != coeffs.dims() {
        return Err(Error::dims(
            "tensor evaluation point",
            coeffs.dims(),
            point.len(),
        ));
    }
    let t: Vec<Vec<f64>> = coeffs
        .orders
        .iter()
        .zip(point)
        .map(|(&m, &x)| basis::eval_all(m, x).into_vec())
        .collect();
    let mut total = 0.0;
    for_each_multi(&coeffs.orders, |flat, multi| {
        let c = coeffs.coeffs[flat];
        if c != 0.0 {
            total += c * multi
                .iter()
                .enumerate()
                .map(|(a, &m)| t[a][m])
                .product::<f64>();
        }
    });
    Ok(total)
}

/// One bivariate term of a pairwise model, over variables `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub a: usize,
    pub b: usize,
    pub coeffs: TensorCoeffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseModel {
    pub dims: usize,
    pub order: usize,
    /// Sorted by `(a, b)`.
    pub terms: Vec<PairTerm>,
}

impl PairwiseModel {
    pub fn term(&self, a: usize, b: usize) -> Option<&PairTerm> {
        self.terms.iter().find(|t| t.a == a && t.b == b)
    }
}

/// Fits `f ~ sum_{(a,b)} sum_{m,n} c^{(a,b)}_{m,n} T_m(x_a) T_n(x_b)` by least
/// squares over the full `(order+1)^d` node grid.
///
/// Terms that depend on fewer than two variables are shared between pairs, so
/// each is owned by exactly one pair: the constant by the lexicographically
/// first pair, and the univariate terms of variable `v` by the first pair that
/// contains `v`. All other copies are fixed at zero.
pub fn fit_pairwise(
    f: impl Fn(&[f64]) -> f64,
    dims: usize,
    order: usize,
    pairs: &[(usize, usize)],
) -> Result<PairwiseModel> {
    let mut pairs = pairs.to_vec();
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairwise model needs at least one pair"));
    }
    for &(a, b) in &pairs {
        if !(a < b && b < dims) {
            return Err(Error::InvalidArgument(format!(
                "pair ({a}, {b}) must satisfy a < b < {dims}"
            )));
        }
    }
    pairs.sort_unstable();
    if pairs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate pair".into()));
    }
    if order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "order {order} exceeds {MAX_ORDER}"
        )));
    }
    let grid_size = (order + 1)
        .checked_pow(dims as u32)
        .filter(|&n| n <= 1 << 20)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("node grid ({} ^ {dims}) is too large", order + 1))
        })?;

    // (pair index, m, n) for every free coefficient
    let mut unknowns = Vec::new();
    let mut owner_of_var = vec![None; dims];
    for (p, &(a, b)) in pairs.iter().enumerate() {
        for v in [a, b] {
            owner_of_var[v].get_or_insert(p);
        }
    }
    for (p, &(a, b)) in pairs.iter().enumerate() {
        for m in 0..=order {
            for n in 0..=order {
                let free = match (m > 0, n > 0) {
                    (true, true) => true,
                    (true, false) => owner_of_var[a] == Some(p),
                    (false, true) => owner_of_var[b] == Some(p),
                    (false, false) => p == 0,
                };
                if free {
                    unknowns.push((p, m, n));
                }
            }
        }
    }

    let nodes = cheb_nodes(order);
    let t_at_nodes: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&x| basis::eval_all(order, x).into_vec())
        .collect();
    let grid_orders = vec![order; dims];
    let mut design = vec![0.0; grid_size * unknowns.len()];
    let mut rhs = vec![0.0; grid_size];
    let mut point = vec![0.0; dims];
    let mut bad = None;
    // `for_each_multi` over `order`s enumerates node indices 0..=order per axis.
    for_each_multi(&grid_orders, |row, k| {
        for (a, &ka) in k.iter().enumerate() {
            point[a] = nodes[ka];
        }
        let v = f(&point);
        if !v.is_finite() && bad.is_none() {
            bad = Some((point.clone(), v));
        }
        rhs[row] = v;
        for (col, &(p, m, n)) in unknowns.iter().enumerate() {
            let (a, b) = pairs[p];
            design[row * unknowns.len() + col] = t_at_nodes[k[a]][m] * t_at_nodes[k[b]][n];
        }
    });
    if let Some((p, v)) = bad {
        return Err(Error::NonFinite(format!("f({p:?}) = {v}")));
    }

    let solution = least_squares(&design, grid_size, unknowns.len(), &rhs)?;
    let mut terms: Vec<PairTerm> = pairs
        .iter()
        .map(|&(a, b)| PairTerm {
            a,
            b,
            coeffs: TensorCoeffs::zeros(&[order, order]),
        })
        .collect();
    for (&(p, m, n), c) in unknowns.iter().zip(solution) {
        let idx = terms[p].coeffs.index(&[m, n]);
        terms[p].coeffs.coeffs[idx] = c;
    }
    Ok(PairwiseModel { dims, order, terms })
}

pub fn eval_pairwise(model: &PairwiseModel, point: &[f64]) -> Result<f64> {
    if point.len() != model.dims {
        return Err(Error::dims(
            "pairwise evaluation point",
            model.dims,
            point.len(),
        ));
    }
    model
        .terms
        .iter()
        .map(|t| eval_tensor(&t.coeffs, &[point[t.a], point[t.b]]))
        .sum()
}

/// Solves `min ||A x - y||` for a row-major `rows x cols` matrix by
/// Householder QR. Fails when `A` is numerically rank deficient.
fn least_squares(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    if rows < cols {
        return Err(Error::Singular {
            rank: rows,
            unknowns: cols,
        });
    }
    let mut r = a.to_vec();
    let mut qty = y.to_vec();
    let scale = a
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for j in 0..cols {
        let norm: f64 = (j..rows)
            .map(|i| r[i * cols + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if norm <= 1e-10 * scale * (rows as f64).sqrt() {
            continue;
        }
        rank += 1;
        let alpha = if r[j * cols + j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..rows).map(|i| r[i * cols + j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..cols {
            let dot: f64 = (j..rows).map(|i| v[i - j] * r[i * cols + c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..rows {
                r[i * cols + c] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..rows).map(|i| v[i - j] * qty[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..rows {
            qty[i] -= f * v[i - j];
        }
    }
    if rank < cols {
        return Err(Error::Singular {
            rank,
            unknowns: cols,
        });
    }
    let mut x = vec![0.0; cols];
    for j in (0..cols).rev() {
        let s: f64 = ((j + 1)..cols).map(|c| r[j * cols + c] * x[c]).sum();
        x[j] = (qty[j] - s) / r[j * cols + j];
    }
    Ok(x)
}
