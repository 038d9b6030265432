//! Dense row-major matrices.
//!
//! Layer sizes in this crate are a few hundred at most, so there are no views,
//! strides or broadcasting: every operation allocates a fresh result.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`.
    pub fn mat_mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "mat_mul inner dimension",
                self.cols,
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let o_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (s, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[s * other.cols..(s + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`, the layout used by `x W^T` with `W` stored out x in.
    pub fn mat_mul_bt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dims(
                "mat_mul_bt inner dimension",
                self.cols,
                other.cols,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            for t in 0..other.rows {
                out.data[r * other.rows + t] = dot(a_row, other.row(t));
            }
        }
        Ok(out)
    }

    /// `self^T * other`.
    pub fn mat_mul_at(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dims(
                "mat_mul_at inner dimension",
                self.rows,
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for s in 0..self.rows {
            let a_row = self.row(s);
            let b_row = other.row(s);
            for (r, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Index of the largest entry of each row; ties go to the lowest index.
    pub fn row_argmax(&self) -> Result<Vec<usize>> {
        if self.cols == 0 {
            return Err(Error::EmptyInput("row_argmax on a matrix with no columns"));
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds `bias[c]` to every entry of column `c`.
    pub fn add_row_vector(&mut self, bias: &[f64]) {
        debug_assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (v, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn small_product() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[1.0], &[1.0]]);
        assert_eq!(a.mat_mul(&b).unwrap(), m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn identity_and_zero() {
        let a = m(&[&[0.3, -0.1, 0.7], &[1.5, 2.0, -3.0], &[0.0, 0.25, 9.0]]);
        assert_eq!(a.mat_mul(&Matrix::identity(3)).unwrap(), a);
        let z = Matrix::zeros(2, 2);
        let b = m(&[&[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        assert_eq!(z.mat_mul(&b).unwrap(), Matrix::zeros(2, 3));
    }

    #[test]
    fn mismatch_rejected() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.mat_mul(&a),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[0.5, -1.0, 2.0], &[1.0, 0.0, -2.0]]);
        assert_eq!(
            a.mat_mul_bt(&b).unwrap(),
            a.mat_mul(&b.transpose()).unwrap()
        );
        assert_eq!(
            a.mat_mul_at(&b).unwrap(),
            a.transpose().mat_mul(&b).unwrap()
        );
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(m(&[&[0.1, 0.9]]).row_argmax().unwrap(), vec![1]);
        assert_eq!(m(&[&[0.5, 0.5]]).row_argmax().unwrap(), vec![0]);
        assert_eq!(
            m(&[&[3.0, 1.0, 2.0], &[-1.0, -2.0, -3.0]])
                .row_argmax()
                .unwrap(),
            vec![0, 0]
        );
        assert!(Matrix::zeros(1, 0).row_argmax().is_err());
        assert!(Matrix::zeros(0, 3).row_argmax().unwrap().is_empty());
    }

    #[test]
    fn elementwise() {
        assert_eq!(m(&[&[-1.0, 2.0]]).map(relu), m(&[&[0.0, 2.0]]));
        let a = m(&[&[0.25, -4.0]]);
        assert_eq!(a.map(|v| v), a);
        assert_eq!(m(&[&[0.0]]).map(crate::basis::squash), m(&[&[0.0]]));
    }

    fn mat4() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 16).prop_map(|d| Matrix::from_vec(4, 4, d).unwrap())
    }

    proptest! {
        #[test]
        fn product_is_associative(a in mat4(), b in mat4(), c in mat4()) {
            let left = a.mat_mul(&b).unwrap().mat_mul(&c).unwrap();
            let right = a.mat_mul(&b.mat_mul(&c).unwrap()).unwrap();
            for (l, r) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!((l - r).abs() <= 1e-10);
            }
        }

        #[test]
        fn argmax_ignores_row_shift(row in proptest::collection::vec(-10.0f64..10.0, 1..8),
                                    shift in -100.0f64..100.0) {
            // integer-valued entries keep the shifted comparison exact
            let row: Vec<f64> = row.iter().map(|v| v.round()).collect();
            let shifted: Vec<f64> = row.iter().map(|v| v + shift.round()).collect();
            let a = Matrix::from_rows(&[row]).unwrap().row_argmax().unwrap();
            let b = Matrix::from_rows(&[shifted]).unwrap().row_argmax().unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
