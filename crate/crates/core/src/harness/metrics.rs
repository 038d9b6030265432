use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check(preds: &[usize], truth: &[usize]) -> Result<()> {
    if preds.len() != truth.len() {
        return Err(Error::dims(
            "predictions vs labels",
            truth.len(),
            preds.len(),
        ));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("metrics on zero samples"));
    }
    Ok(())
}

/// Percentage of exact matches.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    check(preds, truth)?;
    let correct = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1 over `0..classes`, as a percentage. A class
/// with zero precision and recall contributes 0.
pub fn macro_f1(preds: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    check(preds, truth)?;
    if classes == 0 {
        return Err(Error::EmptyInput("macro-F1 over zero classes"));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(Error::LabelOutOfRange {
                label: p.max(t),
                classes,
            });
        }
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let total: f64 = (0..classes)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    Ok(100.0 * total / classes as f64)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Parameter-count formulas for adaptive-weight decompositions over `n`
/// features at order `k`, biases excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decomposition {
    /// `c_ij`
    Chebyshev,
    /// `c_ij, mu_ij, sigma_ij`
    Gaussian,
    /// `a_ij, b_ij`
    Fourier,
    /// `c_ij`
    Legendre,
    /// One fixed weight per feature.
    Dense,
}

pub fn param_count(decomposition: Decomposition, n: usize, k: usize) -> usize {
    let terms = k + 1;
    match decomposition {
        Decomposition::Chebyshev | Decomposition::Legendre => n * terms,
        Decomposition::Gaussian => n * 3 * terms,
        Decomposition::Fourier => n * 2 * terms,
        Decomposition::Dense => n,
    }
}
