//! Chebyshev polynomials of the first kind.
//!
//! `T_0 = 1`, `T_1 = x`, `T_j = 2x T_{j-1} - T_{j-2}`. On `[-1, 1]` every
//! `T_j` is bounded by one; outside it they grow like `(2|x|)^j`, which is why
//! layers map their inputs into the unit interval before expanding.
//!
//! Evaluation here is total on finite inputs: out-of-range points are
//! computed, not rejected.

use crate::{Error, Result};

/// `[T_0(x), ..., T_k(x)]` for a single evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector(Vec<f64>);

impl BasisVector {
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for BasisVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// Evaluates `T_0(x) ..= T_k(x)` by the three-term recurrence.
pub fn eval_all(k: usize, x: f64) -> BasisVector {
    let mut out = vec![0.0; k + 1];
    eval_into(x, &mut out);
    BasisVector(out)
}

/// Fills `out[j] = T_j(x)` for `j < out.len()`.
#[inline]
pub fn eval_into(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = x;
    }
    for j in 2..n {
        out[j] = 2.0 * x * out[j - 1] - out[j - 2];
    }
}

/// Evaluates `T_0'(x) ..= T_k'(x)`.
pub fn deriv_all(k: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    deriv_into(x, &mut out);
    out
}

/// Fills `out[j] = T_j'(x)` using `T_j' = j U_{j-1}`, where `U` is the
/// second-kind family (`U_0 = 1`, `U_1 = 2x`).
#[inline]
pub fn deriv_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 0.0;
    let (mut u_prev, mut u_cur) = (0.0, 1.0); // U_{-1}, U_0
    for (j, slot) in out.iter_mut().enumerate().skip(1) {
        *slot = j as f64 * u_cur;
        let u_next = 2.0 * x * u_cur - u_prev;
        u_prev = u_cur;
        u_cur = u_next;
    }
}

/// The `j` roots of `T_j`, `cos((2m - 1) pi / 2j)` for `m = 1..=j`, in
/// decreasing order.
pub fn roots(j: usize) -> Vec<f64> {
    assert!(j >= 1, "T_0 has no roots");
    (1..=j)
        .map(|m| {
            let theta = (2 * m - 1) as f64 * std::f64::consts::PI / (2 * j) as f64;
            snap_zero(theta.cos())
        })
        .collect()
}

// cos(pi/2) evaluates to 6.1e-17; the middle root of odd orders is exactly zero.
#[inline]
pub(crate) fn snap_zero(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

/// Maps `[lo, hi]` affinely onto `[-1, 1]`.
pub fn affine_to_unit(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::DegenerateRange { lo, hi });
    }
    Ok(2.0 * (x - lo) / (hi - lo) - 1.0)
}

/// Smooth range control for unbounded activations: `tanh(x)`.
#[inline]
pub fn squash(x: f64) -> f64 {
    x.tanh()
}

/// Derivative of [`squash`] expressed through its output, `1 - s^2`.
#[inline]
pub fn squash_deriv_from_output(s: f64) -> f64 {
    1.0 - s * s
}
