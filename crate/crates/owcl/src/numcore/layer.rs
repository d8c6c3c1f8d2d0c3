//! Fully connected layer with a fixed set of activations.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation value.
    pub fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            // relu'(0) = 0 so dead units stay exactly dead.
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Input(format!("unknown activation `{other}`"))),
        }
    }
}

/// Dense affine layer `y = act(W x + b)`; weights are (out x in) row-major.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Uniform limit sqrt(6 / (fan_in + fan_out)) used everywhere weights are
/// (re)initialized, including the rows added when the class count grows.
pub fn init_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl DenseLayer {
    /// Weights uniform in +/- sqrt(6/(fan_in+fan_out)); biases zero.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = init_limit(in_dim, out_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(out_dim, in_dim, data).expect("consistent dims"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_traced(x)?.1)
    }

    /// Returns (pre-activation, output); the pre-activation is what backward
    /// needs to evaluate the activation derivative.
    pub fn forward_traced(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pre = self.weights.matvec(x)?;
        for (p, b) in pre.iter_mut().zip(&self.bias) {
            *p += b;
        }
        let out = pre.iter().map(|&p| self.activation.apply(p)).collect();
        Ok((pre, out))
    }

    /// Accumulates parameter gradients into `grads` and, when given, the
    /// input gradient into `d_input` (also accumulating).
    pub fn backward(
        &self,
        input: &[f64],
        pre: &[f64],
        d_out: &[f64],
        grads: &mut LayerGrads,
        d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        if d_out.len() != self.out_dim() || input.len() != self.in_dim() {
            return Err(Error::shape(
                "layer backward",
                format!("{}x{}", self.out_dim(), self.in_dim()),
                format!("d_out len {}, input len {}", d_out.len(), input.len()),
            ));
        }
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(pre)
            .map(|(&g, &p)| g * self.activation.grad(p))
            .collect();
        for (r, &dp) in d_pre.iter().enumerate() {
            grads.d_bias[r] += dp;
            if dp != 0.0 {
                let row = grads.d_weights.row_mut(r);
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += dp * x;
                }
            }
        }
        if let Some(d_in) = d_input {
            self.weights.matvec_transpose_acc(&d_pre, d_in)?;
        }
        Ok(())
    }

    /// Grows the output dimension to `new_out`. Existing rows and biases are
    /// untouched; new rows are drawn with the standard limit for the grown
    /// shape and new biases are zero.
    pub fn expand_out(&mut self, new_out: usize, rng: &mut Rng) -> Result<()> {
        let old = self.out_dim();
        if new_out < old {
            return Err(Error::Domain(format!(
                "cannot shrink layer from {old} to {new_out} outputs"
            )));
        }
        if new_out == old {
            return Ok(());
        }
        let limit = init_limit(self.in_dim(), new_out);
        self.weights.grow_rows(new_out - old);
        for r in old..new_out {
            for v in self.weights.row_mut(r) {
                *v = rng.uniform(-limit, limit);
            }
        }
        self.bias.resize(new_out, 0.0);
        Ok(())
    }
}

/// Gradient buffers shaped like a layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrads {
            d_weights: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            d_bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn zero(&mut self) {
        self.d_weights.data_mut().fill(0.0);
        self.d_bias.fill(0.0);
    }
}
