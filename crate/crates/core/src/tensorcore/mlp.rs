use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output floor for the positive head so downstream square roots never see 0.
pub const POSITIVE_FLOOR: f64 = 1e-8;

/// One dense layer: `rows` outputs, `cols` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub has_bias: bool,
}

impl LayerShape {
    pub fn new(rows: usize, cols: usize, has_bias: bool) -> Self {
        Self {
            rows,
            cols,
            has_bias,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols + if self.has_bias { self.rows } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Network nonlinearity family.
///
/// `Tanh` uses tanh between layers and a linear output, `Identity` is linear
/// throughout, and `SoftplusPositiveHead` uses tanh between layers with a
/// `softplus(z) + 1e-8` output so every prediction is strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
    SoftplusPositiveHead,
}

impl Activation {
    fn hidden(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh | Activation::SoftplusPositiveHead => z.tanh(),
        }
    }

    /// Derivative of the hidden activation expressed through its output.
    fn hidden_grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh | Activation::SoftplusPositiveHead => 1.0 - y * y,
        }
    }

    fn head(self, z: f64) -> f64 {
        match self {
            Activation::SoftplusPositiveHead => softplus(z) + POSITIVE_FLOOR,
            _ => z,
        }
    }

    fn head_grad(self, z: f64) -> f64 {
        match self {
            Activation::SoftplusPositiveHead => logistic(z),
            _ => 1.0,
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Flat weights of a dense feed-forward network.
///
/// Layout per layer: the weight matrix row-major (`rows x cols`), then the
/// bias vector if the layer has one.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    shape: Arc<[LayerShape]>,
    activation: Activation,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    layer_inputs: Vec<Vec<f64>>,
    pre_output: Vec<f64>,
    pub output: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape: Vec<LayerShape>, activation: Activation) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in shape.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(Error::Config(format!(
                    "layer input {} does not match previous output {}",
                    pair[1].cols, pair[0].rows
                )));
            }
        }
        let expected: usize = shape.iter().map(LayerShape::len).sum();
        if values.len() != expected {
            return Err(Error::Config(format!(
                "parameter vector has {} values, layers need {expected}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            shape: shape.into(),
            activation,
        })
    }

    pub fn zeros(shape: Vec<LayerShape>, activation: Activation) -> Result<Self> {
        let n = shape.iter().map(LayerShape::len).sum();
        Self::new(vec![0.0; n], shape, activation)
    }

    /// Biased dense network `sizes[0] -> ... -> sizes[last]` with Glorot-uniform
    /// weights, zero biases, and the output layer scaled by `output_gain`.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("network needs input and output sizes".into()));
        }
        let shape: Vec<LayerShape> = sizes
            .windows(2)
            .map(|w| LayerShape::new(w[1], w[0], true))
            .collect();
        let mut values = Vec::with_capacity(shape.iter().map(LayerShape::len).sum());
        let last = shape.len() - 1;
        for (i, layer) in shape.iter().enumerate() {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            let gain = if i == last { output_gain } else { 1.0 };
            for _ in 0..layer.rows * layer.cols {
                values.push(gain * rng.gen_range(-limit..limit));
            }
            values.extend(std::iter::repeat(0.0).take(layer.rows));
        }
        Self::new(values, shape, activation)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shape(&self) -> &[LayerShape] {
        &self.shape
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.shape[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.shape[self.shape.len() - 1].rows
    }

    /// Same architecture, different weights.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            values: values.to_vec(),
            shape: Arc::clone(&self.shape),
            activation: self.activation,
        })
    }

    pub fn mlp_eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.output)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Forward> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let last = self.shape.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.shape.len());
        let mut x = input.to_vec();
        let mut offset = 0;
        let mut pre_output = Vec::new();
        for (li, layer) in self.shape.iter().enumerate() {
            let w = &self.values[offset..offset + layer.rows * layer.cols];
            let mut z = vec![0.0; layer.rows];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * layer.cols..(r + 1) * layer.cols];
                *zr = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            }
            offset += layer.rows * layer.cols;
            if layer.has_bias {
                for (zr, b) in z.iter_mut().zip(&self.values[offset..offset + layer.rows]) {
                    *zr += b;
                }
                offset += layer.rows;
            }
            layer_inputs.push(std::mem::take(&mut x));
            if li == last {
                pre_output = z;
            } else {
                x = z.into_iter().map(|v| self.activation.hidden(v)).collect();
            }
        }
        let output = pre_output.iter().map(|&z| self.activation.head(z)).collect();
        Ok(Forward {
            layer_inputs,
            pre_output,
            output,
        })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, fwd: &Forward, grad_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.values.len());
        debug_assert_eq!(grad_output.len(), self.output_dim());
        let mut g: Vec<f64> = grad_output
            .iter()
            .zip(&fwd.pre_output)
            .map(|(go, &z)| go * self.activation.head_grad(z))
            .collect();
        let mut end = self.values.len();
        for li in (0..self.shape.len()).rev() {
            let layer = self.shape[li];
            let x = &fwd.layer_inputs[li];
            if layer.has_bias {
                for (gb, gr) in grad[end - layer.rows..end].iter_mut().zip(&g) {
                    *gb += gr;
                }
                end -= layer.rows;
            }
            let start = end - layer.rows * layer.cols;
            for r in 0..layer.rows {
                let gr = g[r];
                if gr == 0.0 {
                    continue;
                }
                let row = &mut grad[start + r * layer.cols..start + (r + 1) * layer.cols];
                for (gw, xc) in row.iter_mut().zip(x) {
                    *gw += gr * xc;
                }
            }
            if li > 0 {
                let w = &self.values[start..end];
                let mut gx = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let gr = g[r];
                    if gr == 0.0 {
                        continue;
                    }
                    for (gxc, wrc) in gx.iter_mut().zip(&w[r * layer.cols..(r + 1) * layer.cols]) {
                        *gxc += wrc * gr;
                    }
                }
                g = gx
                    .into_iter()
                    .zip(x)
                    .map(|(gxc, &y)| gxc * self.activation.hidden_grad_from_output(y))
                    .collect();
            }
            end = start;
        }
    }
}
