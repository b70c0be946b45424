//! Dense feed-forward network with ReLU hidden layers and a linear output,
//! with hand-written reverse-mode gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One affine layer, `z = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter-shaped container, used for gradients and optimizer state.
pub type Gradients = Mlp;

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct Trace {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for layer in &mut net.layers {
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-scale..=scale));
        }
        net
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "a network needs input and output widths");
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::BadParams("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].weights.ncols() != pair[1].weights.nrows() {
                return Err(Error::BadParams(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].weights.ncols(),
                    k + 1,
                    pair[1].weights.nrows()
                )));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.ncols() {
                return Err(Error::BadParams(format!("layer {k} bias has wrong length")));
            }
            if layer.params().any(|p| !p.is_finite()) {
                return Err(Error::BadParams(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(Self { layers })
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

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.ncols()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.layer_dims())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            inputs.push(h);
            if k < last {
                let a = z.mapv(|v| v.max(0.0));
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Trace {
            inputs,
            pre,
            output: h,
        }
    }

    /// Back-propagate `grad_output` (same shape as the traced output).
    ///
    /// Returns parameter gradients (unless `with_params` is false, in which
    /// case an empty container is returned) and the gradient with respect to
    /// the network input.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: Array2<f64>,
        with_params: bool,
    ) -> (Option<Gradients>, Array2<f64>) {
        let mut grads = with_params.then(|| self.zeros_like());
        let mut delta = grad_output;
        for k in (0..self.layers.len()).rev() {
            if k < self.layers.len() - 1 {
                Zip::from(&mut delta)
                    .and(&trace.pre[k])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            if let Some(g) = grads.as_mut() {
                g.layers[k].weights = trace.inputs[k].t().dot(&delta);
                g.layers[k].bias = delta.sum_axis(Axis(0));
            }
            delta = delta.dot(&self.layers[k].weights.t());
        }
        (grads, delta)
    }

    /// Clamp every parameter into `[-limit, limit]`.
    pub fn clamp(&mut self, limit: f64) {
        self.params_mut().for_each(|p| *p = p.clamp(-limit, limit));
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().fold(0.0, |m, p| m.max(p.abs()))
    }

    pub fn to_file(&self) -> MlpFile {
        MlpFile {
            layer_dims: self.layer_dims(),
            activation: "relu".into(),
            output_activation: "linear".into(),
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
        }
    }

    pub fn from_file(file: &MlpFile) -> Result<Self> {
        if file.activation != "relu" || file.output_activation != "linear" {
            return Err(Error::BadParams(format!(
                "unsupported activations {}/{}",
                file.activation, file.output_activation
            )));
        }
        if file.layer_dims.len() != file.weights.len() + 1 || file.weights.len() != file.biases.len() {
            return Err(Error::BadParams("layer counts disagree".into()));
        }
        let mut layers = Vec::with_capacity(file.weights.len());
        for (k, (w, b)) in file.weights.iter().zip(&file.biases).enumerate() {
            let (fan_in, fan_out) = (file.layer_dims[k], file.layer_dims[k + 1]);
            if w.len() != fan_in || w.iter().any(|r| r.len() != fan_out) || b.len() != fan_out {
                return Err(Error::BadParams(format!("layer {k} does not match layer_dims")));
            }
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            layers.push(Dense {
                weights: Array2::from_shape_vec((fan_in, fan_out), flat)
                    .map_err(|e| Error::BadParams(e.to_string()))?,
                bias: Array1::from_vec(b.clone()),
            });
        }
        Self::from_layers(layers)
    }
}

/// On-disk form: row-major `in x out` weight arrays per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    pub layer_dims: Vec<usize>,
    pub activation: String,
    pub output_activation: String,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}
