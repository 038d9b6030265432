use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChebyLayer, ChebyMode, DenseLayer, InputMap, Layer, Network};
use crate::data::ScalerParams;
use crate::matrix::Matrix;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model: layers with flattened parameters (weights or coefficients
/// row-major, then biases) and the scaler fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<ScalerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerRecord {
    Dense {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
        params: Vec<f64>,
    },
    Cheby {
        #[serde(rename = "in")]
        inputs: usize,
        #[serde(rename = "out")]
        outputs: usize,
        k: usize,
        mode: ChebyMode,
        input_map: InputMap,
        params: Vec<f64>,
    },
}

impl ModelFile {
    pub fn from_network(net: &Network, scaler: Option<ScalerParams>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| {
                let params: Vec<f64> = layer
                    .weights()
                    .iter()
                    .chain(layer.bias())
                    .copied()
                    .collect();
                match layer {
                    Layer::Dense(d) => LayerRecord::Dense {
                        inputs: d.inputs(),
                        outputs: d.outputs(),
                        params,
                    },
                    Layer::Cheby(c) => LayerRecord::Cheby {
                        inputs: c.inputs(),
                        outputs: c.outputs(),
                        k: c.order(),
                        mode: c.mode,
                        input_map: c.input_map,
                        params,
                    },
                }
            })
            .collect();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layers,
            scaler,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        let layers = self
            .layers
            .iter()
            .map(|rec| match rec {
                LayerRecord::Dense {
                    inputs,
                    outputs,
                    params,
                } => {
                    let (w, b) = split_params(params, inputs * outputs, *outputs)?;
                    Ok(Layer::Dense(DenseLayer::new(
                        Matrix::from_vec(*outputs, *inputs, w)?,
                        b,
                    )?))
                }
                LayerRecord::Cheby {
                    inputs,
                    outputs,
                    k,
                    mode,
                    input_map,
                    params,
                } => {
                    let width = inputs * (k + 1);
                    let (c, b) = split_params(params, outputs * width, *outputs)?;
                    Ok(Layer::Cheby(ChebyLayer::new(
                        *inputs,
                        *k,
                        Matrix::from_vec(*outputs, width, c)?,
                        b,
                        *mode,
                        *input_map,
                    )?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn split_params(params: &[f64], weights: usize, bias: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.len() != weights + bias {
        return Err(Error::dims(
            "model file parameter count",
            weights + bias,
            params.len(),
        ));
    }
    if let Some(v) = params.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("model parameter {v}")));
    }
    Ok((params[..weights].to_vec(), params[weights..].to_vec()))
}
