use crate::matrix::Matrix;
use crate::{Error, Result};

/// Row-wise softmax with max-subtraction.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

/// Mean cross-entropy of `softmax(logits)` against integer labels, and its
/// gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::dims(
            "labels per batch row",
            logits.rows(),
            labels.len(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("cross-entropy on an empty batch"));
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        total += -(row[label] - max - log_sum);
        let g = grad.row_mut(r);
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - max - log_sum).exp();
            *gv = (p - if c == label { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((total / n, grad))
}
