//! Fully connected network with a mean head and a log-variance head, plus
//! hand-written reverse-mode differentiation through it.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`, so a batch `X` maps to `X W + b`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// Hidden layers use ReLU; the last layer emits `(mean, log sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnnModel {
    layers: Vec<Dense>,
}

/// Gradients share the model's layout.
pub type Gradient = PnnModel;

/// Intermediate values of a batch forward pass kept for backprop.
#[derive(Debug)]
pub struct ForwardCache {
    /// Layer inputs: `activations[0]` is the batch, `activations[k]` the
    /// post-ReLU output of hidden layer `k - 1`.
    activations: Vec<Array2<f64>>,
    /// `batch x 2` raw head outputs.
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn means(&self) -> Vec<f64> {
        self.output.column(0).to_vec()
    }

    pub fn log_variances(&self) -> Vec<f64> {
        self.output.column(1).to_vec()
    }

    pub fn stddevs(&self) -> Vec<f64> {
        self.output.column(1).iter().map(|&s| (0.5 * s).exp()).collect()
    }
}

impl PnnModel {
    /// Architecture of the case study: 3 hidden layers of 64 units.
    pub const HIDDEN: [usize; 3] = [64, 64, 64];

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let widths = Self::widths(input_dim, hidden);
        PnnModel {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden);
        for layer in &mut m.layers {
            let bound = 1.0 / (layer.weights.nrows() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
            layer.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        m
    }

    fn widths(input_dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(input_dim);
        w.extend_from_slice(hidden);
        w.push(2);
        w
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter in a fixed order (layer by layer, weights row-major
    /// then bias).
    pub fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// Batch forward pass; `inputs` is `batch x input_dim`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(current);
            current = z;
        }
        ForwardCache {
            activations,
            output: current,
        }
    }

    /// Predictive mean and standard deviation at one input.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.input_dim() {
            return Err(UqError::Shape {
                what: "input vector vs model input",
                left: x.len(),
                right: self.input_dim(),
            });
        }
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let out = self.forward_batch(batch).output;
        let (mu, log_var) = (out[[0, 0]], out[[0, 1]]);
        let sigma = (0.5 * log_var).exp();
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(UqError::Numeric(format!(
                "non-finite network output (mean {mu}, log-variance {log_var})"
            )));
        }
        Ok((mu, sigma))
    }

    /// Backpropagates `d loss / d output` (`batch x 2`, columns mean and
    /// log-variance) to every parameter.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Gradient {
        let mut grad = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.clone();
        for k in (0..self.layers.len()).rev() {
            let a_in = &cache.activations[k];
            let weights = a_in.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut d_in = delta.dot(&self.layers[k].weights.t());
                // a_in is the ReLU output of the previous layer: its
                // derivative is 1 where the activation is positive
                Zip::from(&mut d_in).and(a_in).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_in;
            }
            grad.push(Dense { weights, bias });
        }
        grad.reverse();
        PnnModel { layers: grad }
    }
}

/// `batch x dim` matrix from per-point input vectors.
pub fn input_matrix(inputs: &[Vec<f64>]) -> Array2<f64> {
    let dim = inputs.first().map_or(0, Vec::len);
    Array2::from_shape_fn((inputs.len(), dim), |(i, j)| inputs[i][j])
}
