use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis;
use crate::matrix::Matrix;
use crate::{Error, Result};

/// How a Chebyshev-adaptive layer turns its expanded basis into outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChebyMode {
    /// `y_o = sum_i x_i * w_oi(x_i)` with `w_oi(x) = sum_j c_oij T_j(x)`.
    /// With `k = 0` this is exactly a dense layer.
    #[default]
    WeightForm,
    /// `y_o = sum_i sum_j c_oij T_j(x_i)`: the basis expansion is treated as a
    /// preprocessing step in front of an ordinary linear map.
    ExpansionForm,
}

/// Range control applied to a Chebyshev layer's inputs before expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputMap {
    /// Inputs must already lie in `[-1, 1]`; anything else is a range violation.
    #[default]
    Identity,
    /// Saturate to `[-1, 1]`.
    Clamp,
    /// `tanh`.
    Squash,
}

impl InputMap {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            InputMap::Identity => x,
            InputMap::Clamp => x.clamp(-1.0, 1.0),
            InputMap::Squash => basis::squash(x),
        }
    }

    /// d(mapped)/d(raw), given both values.
    #[inline]
    fn deriv(self, raw: f64, mapped: f64) -> f64 {
        match self {
            InputMap::Identity => 1.0,
            InputMap::Clamp => {
                if raw.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            InputMap::Squash => basis::squash_deriv_from_output(mapped),
        }
    }
}

/// Tolerance on `|x| <= 1` for identity-mapped inputs.
pub const RANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// A layer whose every connection weight is a Chebyshev series in its own
/// input.
///
/// Coefficients are stored as an `out x in*(k+1)` matrix, so `coeffs[o][i*(k+1)+j]`
/// is `c_{o,i,j}`. The layer is then a plain linear map applied to the
/// expanded input row `[g(x_0, 0..=k), g(x_1, 0..=k), ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyLayer {
    pub coeffs: Matrix,
    pub bias: Vec<f64>,
    inputs: usize,
    order: usize,
    pub mode: ChebyMode,
    pub input_map: InputMap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Cheby(ChebyLayer),
}

/// Per-layer forward cache.
#[derive(Debug, Clone)]
pub enum LayerTrace {
    Dense {
        input: Matrix,
    },
    Cheby {
        input: Matrix,
        /// Inputs after the layer's input map.
        mapped: Matrix,
        /// `T_j(mapped)`, laid out like the coefficient columns.
        basis: Matrix,
        /// What the coefficients multiply: `mapped * T_j` (weight form) or
        /// `T_j` (expansion form).
        expanded: Matrix,
    },
}

/// Gradients of one layer's parameters, in the same layout as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-s..=s)).collect()
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dims("dense bias length", weights.rows(), bias.len()));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = glorot(rng, inputs, outputs, inputs * outputs);
        DenseLayer {
            weights: Matrix::from_vec(outputs, inputs, w).expect("shape by construction"),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.inputs() {
            return Err(Error::dims(
                "dense layer input width",
                self.inputs(),
                x.cols(),
            ));
        }
        let mut y = x.mat_mul_bt(&self.weights)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }
}

impl ChebyLayer {
    pub fn new(
        inputs: usize,
        order: usize,
        coeffs: Matrix,
        bias: Vec<f64>,
        mode: ChebyMode,
        input_map: InputMap,
    ) -> Result<Self> {
        if coeffs.cols() != inputs * (order + 1) {
            return Err(Error::dims(
                "chebyshev coefficient columns",
                inputs * (order + 1),
                coeffs.cols(),
            ));
        }
        if bias.len() != coeffs.rows() {
            return Err(Error::dims(
                "chebyshev bias length",
                coeffs.rows(),
                bias.len(),
            ));
        }
        Ok(ChebyLayer {
            coeffs,
            bias,
            inputs,
            order,
            mode,
            input_map,
        })
    }

    /// Uniform initialisation in `[-s, s]`, `s = sqrt(6 / (in*(k+1) + out))`,
    /// drawn in `(o, i, j)` order so that `k = 0` consumes the generator
    /// exactly like [`DenseLayer::init`].
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        order: usize,
        mode: ChebyMode,
        input_map: InputMap,
        rng: &mut R,
    ) -> Self {
        let width = inputs * (order + 1);
        let c = glorot(rng, width, outputs, outputs * width);
        ChebyLayer {
            coeffs: Matrix::from_vec(outputs, width, c).expect("shape by construction"),
            bias: vec![0.0; outputs],
            inputs,
            order,
            mode,
            input_map,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `c_{o,i,0..=k}`.
    pub fn group(&self, o: usize, i: usize) -> &[f64] {
        let k1 = self.order + 1;
        &self.coeffs.row(o)[i * k1..(i + 1) * k1]
    }

    /// The adaptive weight `w_oi(x) = sum_j c_oij T_j(x)`.
    pub fn adaptive_weight(&self, o: usize, i: usize, x: f64) -> f64 {
        let t = basis::eval_all(self.order, x);
        self.group(o, i)
            .iter()
            .zip(t.values())
            .map(|(c, t)| c * t)
            .sum()
    }

    fn check_range(&self, x: &Matrix) -> Result<()> {
        // A constant basis cannot blow up, so k = 0 skips the check.
        if self.input_map != InputMap::Identity || self.order == 0 {
            return Ok(());
        }
        for r in 0..x.rows() {
            for (i, &v) in x.row(r).iter().enumerate() {
                if !(v.abs() <= 1.0 + RANGE_TOLERANCE) {
                    return Err(Error::RangeViolation {
                        feature: i,
                        row: r,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    /// Maps the inputs and expands them; returns `(mapped, basis, expanded)`.
    fn expand(&self, x: &Matrix) -> Result<(Matrix, Matrix, Matrix)> {
        if x.cols() != self.inputs {
            return Err(Error::dims(
                "chebyshev layer input width",
                self.inputs,
                x.cols(),
            ));
        }
        self.check_range(x)?;
        let k1 = self.order + 1;
        let mapped = x.map(|v| self.input_map.apply(v));
        let mut basis_m = Matrix::zeros(x.rows(), self.inputs * k1);
        for r in 0..x.rows() {
            let m_row = mapped.row(r);
            let b_row = basis_m.row_mut(r);
            for (i, &xi) in m_row.iter().enumerate() {
                basis::eval_into(xi, &mut b_row[i * k1..(i + 1) * k1]);
            }
        }
        let expanded = match self.mode {
            ChebyMode::ExpansionForm => basis_m.clone(),
            ChebyMode::WeightForm => {
                let mut e = basis_m.clone();
                for r in 0..x.rows() {
                    let m_row = mapped.row(r).to_vec();
                    let e_row = e.row_mut(r);
                    for (i, xi) in m_row.into_iter().enumerate() {
                        for v in &mut e_row[i * k1..(i + 1) * k1] {
                            *v *= xi;
                        }
                    }
                }
                e
            }
        };
        Ok((mapped, basis_m, expanded))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let (_, _, expanded) = self.expand(x)?;
        let mut y = expanded.mat_mul_bt(&self.coeffs)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }
}

impl Layer {
    pub fn inputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.inputs(),
            Layer::Cheby(c) => c.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs(),
            Layer::Cheby(c) => c.outputs(),
        }
    }

    /// Trainable weight count (coefficients for Chebyshev layers) plus biases.
    pub fn param_count(&self) -> usize {
        self.weights().len() + self.bias().len()
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => d.weights.as_slice(),
            Layer::Cheby(c) => c.coeffs.as_slice(),
        }
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        match self {
            Layer::Dense(d) => d.weights.as_mut_slice(),
            Layer::Cheby(c) => c.coeffs.as_mut_slice(),
        }
    }

    pub fn bias(&self) -> &[f64] {
        match self {
            Layer::Dense(d) => &d.bias,
            Layer::Cheby(c) => &c.bias,
        }
    }

    pub(crate) fn split_params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        match self {
            Layer::Dense(d) => (d.weights.as_mut_slice(), &mut d.bias),
            Layer::Cheby(c) => (c.coeffs.as_mut_slice(), &mut c.bias),
        }
    }

    pub fn as_cheby(&self) -> Option<&ChebyLayer> {
        match self {
            Layer::Cheby(c) => Some(c),
            Layer::Dense(_) => None,
        }
    }

    /// Forward pass that also returns the cache the backward pass needs.
    pub fn forward_traced(&self, x: &Matrix) -> Result<(Matrix, LayerTrace)> {
        match self {
            Layer::Dense(d) => Ok((d.forward(x)?, LayerTrace::Dense { input: x.clone() })),
            Layer::Cheby(c) => {
                let (mapped, basis, expanded) = c.expand(x)?;
                let mut y = expanded.mat_mul_bt(&c.coeffs)?;
                y.add_row_vector(&c.bias);
                Ok((
                    y,
                    LayerTrace::Cheby {
                        input: x.clone(),
                        mapped,
                        basis,
                        expanded,
                    },
                ))
            }
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Cheby(c) => c.forward(x),
        }
    }

    /// Given `dout = dL/d(pre-activation)`, returns the parameter gradients
    /// and, when `need_input_grad`, `dL/d(input)`.
    ///
    /// For a Chebyshev layer, `dL/dc_oij = sum_batch dout_o * g(x_i, j)`: the
    /// loss sensitivity of the adaptive weight times the weight's sensitivity
    /// to that coefficient.
    pub fn backward(
        &self,
        trace: &LayerTrace,
        dout: &Matrix,
        need_input_grad: bool,
    ) -> Result<(LayerGrads, Option<Matrix>)> {
        if dout.cols() != self.outputs() {
            return Err(Error::dims(
                "backward upstream width",
                self.outputs(),
                dout.cols(),
            ));
        }
        match (self, trace) {
            (Layer::Dense(d), LayerTrace::Dense { input }) => {
                check_trace_rows(input, dout)?;
                let dw = dout.mat_mul_at(input)?;
                let grads = LayerGrads {
                    weights: dw.into_vec(),
                    bias: dout.sum_rows(),
                };
                let dx = if need_input_grad {
                    Some(dout.mat_mul(&d.weights)?)
                } else {
                    None
                };
                Ok((grads, dx))
            }
            (
                Layer::Cheby(c),
                LayerTrace::Cheby {
                    input,
                    mapped,
                    basis: basis_m,
                    expanded,
                },
            ) => {
                check_trace_rows(input, dout)?;
                if expanded.cols() != c.coeffs.cols() {
                    return Err(Error::dims(
                        "trace expansion width",
                        c.coeffs.cols(),
                        expanded.cols(),
                    ));
                }
                let dc = dout.mat_mul_at(expanded)?;
                let grads = LayerGrads {
                    weights: dc.into_vec(),
                    bias: dout.sum_rows(),
                };
                if !need_input_grad {
                    return Ok((grads, None));
                }
                let k1 = c.order + 1;
                let dexp = dout.mat_mul(&c.coeffs)?;
                let mut dx = Matrix::zeros(input.rows(), c.inputs);
                let mut tprime = vec![0.0; k1];
                for r in 0..input.rows() {
                    for i in 0..c.inputs {
                        let xm = mapped.get(r, i);
                        basis::deriv_into(xm, &mut tprime);
                        let t = &basis_m.row(r)[i * k1..(i + 1) * k1];
                        let de = &dexp.row(r)[i * k1..(i + 1) * k1];
                        let dmapped: f64 = match c.mode {
                            // d/dx [x T_j(x)] = T_j + x T_j'
                            ChebyMode::WeightForm => {
                                (0..k1).map(|j| de[j] * (t[j] + xm * tprime[j])).sum()
                            }
                            ChebyMode::ExpansionForm => (0..k1).map(|j| de[j] * tprime[j]).sum(),
                        };
                        dx.set(r, i, dmapped * c.input_map.deriv(input.get(r, i), xm));
                    }
                }
                Ok((grads, Some(dx)))
            }
            _ => Err(Error::dims(
                "trace layer kind",
                "matching layer",
                "other kind",
            )),
        }
    }
}

fn check_trace_rows(input: &Matrix, dout: &Matrix) -> Result<()> {
    if input.rows() != dout.rows() {
        return Err(Error::dims("trace batch size", input.rows(), dout.rows()));
    }
    Ok(())
}
