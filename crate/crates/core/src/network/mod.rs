//! Feed-forward classifiers built from dense and Chebyshev-adaptive layers.
//!
//! Hidden layers are followed by ReLU; the last layer emits raw logits and the
//! softmax lives in [`softmax_cross_entropy`]. Gradients are derived by hand
//! per layer type.

mod layer;
mod loss;
mod model_file;

pub use layer::{
    ChebyLayer, ChebyMode, DenseLayer, InputMap, Layer, LayerGrads, LayerTrace, RANGE_TOLERANCE,
};
pub use loss::{softmax, softmax_cross_entropy};
pub use model_file::{ModelFile, MODEL_FORMAT_VERSION};

use rand::Rng;

use crate::matrix::{relu, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Pre-activation outputs of every layer; the last one is the logits.
    pub pre_activations: Vec<Matrix>,
}

/// Parameter gradients, one entry per layer, shaped like the layer's
/// parameters. For a Chebyshev layer `weights` is `dL/dC` flattened
/// `(o, i, j)`-major: `out * in * (k+1)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
}

impl GradientSet {
    /// Flat tensor view, ordered `[l0.weights, l0.bias, l1.weights, ...]` to
    /// match [`Network::param_tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::dims(
                    "consecutive layer widths",
                    pair[0].outputs(),
                    pair[1].inputs(),
                ));
            }
        }
        Ok(Network { layers })
    }

    /// Dense network `inputs -> hidden... -> classes`.
    pub fn mlp<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let widths = widths(inputs, hidden, classes);
        let layers = widths
            .windows(2)
            .map(|w| Layer::Dense(DenseLayer::init(w[0], w[1], rng)))
            .collect();
        Network { layers }
    }

    /// Chebyshev-adaptive network with the same widths as [`Network::mlp`].
    ///
    /// The first layer reads pre-scaled data with [`InputMap::Identity`]. Later
    /// layers read unbounded ReLU outputs and use [`InputMap::Squash`], except at
    /// `order == 0` where the basis is constant and no range control is needed;
    /// this keeps a weight-form `k = 0` network identical to the MLP built from
    /// the same generator state.
    pub fn cheby<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        order: usize,
        mode: ChebyMode,
        rng: &mut R,
    ) -> Self {
        let hidden_map = if order == 0 {
            InputMap::Identity
        } else {
            InputMap::Squash
        };
        Self::cheby_with_maps(
            inputs,
            hidden,
            classes,
            order,
            mode,
            InputMap::Identity,
            hidden_map,
            rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn cheby_with_maps<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        classes: usize,
        order: usize,
        mode: ChebyMode,
        first_map: InputMap,
        hidden_map: InputMap,
        rng: &mut R,
    ) -> Self {
        let widths = widths(inputs, hidden, classes);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let map = if l == 0 { first_map } else { hidden_map };
                Layer::Cheby(ChebyLayer::init(w[0], w[1], order, mode, map, rng))
            })
            .collect();
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Total trainable parameters, biases included.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Mutable parameter tensors, ordered like [`GradientSet::tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let (w, b) = l.split_params_mut();
                [w, b]
            })
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (z, t) = layer.forward_traced(&a)?;
            traces.push(t);
            if l < last {
                a = z.map(relu);
            }
            pre.push(z);
        }
        let logits = pre[last].clone();
        Ok((
            logits,
            ForwardTrace {
                layers: traces,
                pre_activations: pre,
            },
        ))
    }

    /// Forward pass without keeping a trace.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a)?;
            a = if l < last { z.map(relu) } else { z };
        }
        Ok(a)
    }

    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Matrix) -> Result<GradientSet> {
        if trace.layers.len() != self.layers.len()
            || trace.pre_activations.len() != self.layers.len()
        {
            return Err(Error::dims(
                "trace layer count",
                self.layers.len(),
                trace.layers.len(),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.clone();
        for l in (0..self.layers.len()).rev() {
            let (g, dx) = self.layers[l].backward(&trace.layers[l], &delta, l > 0)?;
            grads.push(g);
            if let Some(dx) = dx {
                let z = &trace.pre_activations[l - 1];
                if z.shape() != dx.shape() {
                    return Err(Error::dims(
                        "trace pre-activation shape",
                        format!("{:?}", dx.shape()),
                        format!("{:?}", z.shape()),
                    ));
                }
                let mut d = dx;
                for (dv, &zv) in d.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                delta = d;
            }
        }
        grads.reverse();
        Ok(GradientSet { layers: grads })
    }

    /// Loss and gradients for one batch.
    pub fn loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, GradientSet)> {
        let (logits, trace) = self.forward(x)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward(&trace, &dlogits)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.logits(x)?, labels)?.0)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.rows() == 0 {
            return Ok(Vec::new());
        }
        self.logits(x)?.row_argmax()
    }
}

fn widths(inputs: usize, hidden: &[usize], classes: usize) -> Vec<usize> {
    std::iter::once(inputs)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(classes))
        .collect()
}
