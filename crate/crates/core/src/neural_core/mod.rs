//! Minimal dense neural-network engine: multilayer perceptrons with
//! forward/backward passes, MSE and categorical cross-entropy losses,
//! an Adam optimizer, and finite-difference gradient verification.
//!
//! Everything is 64-bit floating point and deterministic given a seed.

mod adam;
mod check;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use check::grad_check;
pub use loss::{cross_entropy_loss, mse_loss, softmax_rows};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into persisted model documents.
pub const MODEL_DOC_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

/// Elementwise nonlinearity. `Softmax` is only valid as an output activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Softmax,
}

/// Layer widths plus the activation attached to each hidden layer and to the
/// output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    hidden: Vec<Activation>,
    output: Activation,
}

impl MlpSpec {
    pub fn new(
        widths: Vec<usize>,
        hidden: Vec<Activation>,
        output: Activation,
    ) -> Result<Self, NeuralError> {
        if widths.len() < 2 {
            return Err(NeuralError::InvalidSpec(
                "at least input and output widths are required".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(NeuralError::InvalidSpec("zero-width layer".into()));
        }
        if hidden.len() != widths.len() - 2 {
            return Err(NeuralError::InvalidSpec(format!(
                "expected {} hidden activations, got {}",
                widths.len() - 2,
                hidden.len()
            )));
        }
        if hidden.contains(&Activation::Softmax) {
            return Err(NeuralError::InvalidSpec(
                "softmax is only supported on the output layer".into(),
            ));
        }
        Ok(Self {
            widths,
            hidden,
            output,
        })
    }

    /// All hidden layers share one activation.
    pub fn uniform(
        widths: Vec<usize>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self, NeuralError> {
        let n_hidden = widths.len().saturating_sub(2);
        Self::new(widths, vec![hidden; n_hidden], output)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    /// Activation applied after weight layer `l` (0-based).
    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers() {
            self.output
        } else {
            self.hidden[l]
        }
    }

    /// Spec for the first `depth` weight layers, ending with the activation
    /// that layer carries inside this network.
    pub fn prefix(&self, depth: usize) -> Result<MlpSpec, NeuralError> {
        if depth == 0 || depth > self.num_layers() {
            return Err(NeuralError::InvalidSpec(format!(
                "prefix depth {depth} out of range"
            )));
        }
        MlpSpec::new(
            self.widths[..=depth].to_vec(),
            self.hidden[..depth - 1].to_vec(),
            self.activation(depth - 1),
        )
    }
}

/// One dense layer: `weights` is `out x in`, `bias` is `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameters (or same-shaped gradients) for every layer of an [`MlpSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Glorot-uniform weight init (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..spec.num_layers())
            .map(|l| {
                let fan_in = spec.widths[l];
                let fan_out = spec.widths[l + 1];
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-s..s));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = (0..spec.num_layers())
            .map(|l| Layer {
                weights: Array2::zeros((spec.widths[l + 1], spec.widths[l])),
                bias: Array1::zeros(spec.widths[l + 1]),
            })
            .collect();
        Self { layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat mutable views over every tensor, weights before bias per layer.
    pub fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flat(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn matches(&self, spec: &MlpSpec) -> bool {
        self.layers.len() == spec.num_layers()
            && self.layers.iter().enumerate().all(|(l, layer)| {
                layer.weights.dim() == (spec.widths[l + 1], spec.widths[l])
                    && layer.bias.len() == spec.widths[l + 1]
            })
    }

    /// Parameters for the first `depth` weight layers.
    pub fn prefix(&self, depth: usize) -> MlpParams {
        MlpParams {
            layers: self.layers[..depth].to_vec(),
        }
    }
}

/// Per-layer activations recorded during a forward pass:
/// `activations[0]` is the input batch, `activations[L]` the network output.
pub struct ForwardTrace {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

fn apply_activation(z: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Identity => {}
        Activation::Tanh => z.mapv_inplace(f64::tanh),
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        Activation::Softmax => {
            for mut row in z.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
        }
    }
}

/// Run the network over a batch (rows are samples), recording every layer.
pub fn forward_trace(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &Array2<f64>,
) -> Result<ForwardTrace, NeuralError> {
    if !params.matches(spec) {
        return Err(NeuralError::DimensionMismatch(
            "params do not match spec".into(),
        ));
    }
    if batch.ncols() != spec.input_width() {
        return Err(NeuralError::DimensionMismatch(format!(
            "batch width {} != input width {}",
            batch.ncols(),
            spec.input_width()
        )));
    }
    let mut activations = Vec::with_capacity(spec.num_layers() + 1);
    activations.push(batch.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = activations[l].dot(&layer.weights.t());
        z += &layer.bias;
        apply_activation(&mut z, spec.activation(l));
        activations.push(z);
    }
    Ok(ForwardTrace { activations })
}

/// Forward pass returning only the output batch.
pub fn forward(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &Array2<f64>,
) -> Result<Array2<f64>, NeuralError> {
    Ok(forward_trace(spec, params, batch)?
        .activations
        .pop()
        .unwrap())
}

fn activation_backward(dz: &mut Array2<f64>, a: &Array2<f64>, act: Activation) {
    match act {
        // For Softmax the caller already supplies dL/dlogits (fused with the
        // cross-entropy gradient), so nothing is applied here.
        Activation::Identity | Activation::Softmax => {}
        Activation::Tanh => *dz *= &a.mapv(|v| 1.0 - v * v),
        Activation::Relu => *dz *= &a.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// Backpropagate `grad_out` through the trace, returning parameter gradients.
///
/// `grad_out` is the loss gradient with respect to the network output, except
/// when the output activation is `Softmax`: then it must be the gradient with
/// respect to the logits (the form [`cross_entropy_loss`] returns).
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    trace: &ForwardTrace,
    grad_out: &Array2<f64>,
) -> Result<MlpParams, NeuralError> {
    let num_layers = spec.num_layers();
    if trace.activations.len() != num_layers + 1 {
        return Err(NeuralError::DimensionMismatch("trace length".into()));
    }
    if grad_out.dim() != trace.output().dim() {
        return Err(NeuralError::DimensionMismatch(
            "grad_out shape differs from network output".into(),
        ));
    }
    let mut grads = Vec::with_capacity(num_layers);
    let mut dz = grad_out.clone();
    activation_backward(&mut dz, trace.output(), spec.activation(num_layers - 1));
    for l in (0..num_layers).rev() {
        let a_prev = &trace.activations[l];
        let dw = dz.t().dot(a_prev);
        let db = dz.sum_axis(Axis(0));
        grads.push(Layer {
            weights: dw,
            bias: db,
        });
        if l > 0 {
            let mut da = dz.dot(&params.layers[l].weights);
            activation_backward(&mut da, &trace.activations[l], spec.activation(l - 1));
            dz = da;
        }
    }
    grads.reverse();
    Ok(MlpParams { layers: grads })
}

/// Serializable snapshot of a network: spec, flattened parameters per layer,
/// and the optimizer hyperparameters used to train it. Decimal serialization
/// through serde_json round-trips every f64 bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModelDoc {
    pub version: u32,
    pub spec: MlpSpec,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub adam: AdamConfig,
}

impl MlpModelDoc {
    pub fn new(spec: &MlpSpec, params: &MlpParams, adam: AdamConfig) -> Self {
        Self {
            version: MODEL_DOC_VERSION,
            spec: spec.clone(),
            weights: params
                .layers
                .iter()
                .map(|l| l.weights.iter().cloned().collect())
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| l.bias.to_vec())
                .collect(),
            adam,
        }
    }

    pub fn into_parts(self) -> Result<(MlpSpec, MlpParams, AdamConfig), NeuralError> {
        if self.version != MODEL_DOC_VERSION {
            return Err(NeuralError::InvalidSpec(format!(
                "unsupported model document version {}",
                self.version
            )));
        }
        if self.weights.len() != self.spec.num_layers()
            || self.biases.len() != self.spec.num_layers()
        {
            return Err(NeuralError::DimensionMismatch(
                "layer count mismatch in model document".into(),
            ));
        }
        let mut layers = Vec::with_capacity(self.spec.num_layers());
        for l in 0..self.spec.num_layers() {
            let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let weights = Array2::from_shape_vec((n_out, n_in), self.weights[l].clone())
                .map_err(|e| NeuralError::DimensionMismatch(e.to_string()))?;
            if self.biases[l].len() != n_out {
                return Err(NeuralError::DimensionMismatch(
                    "bias length mismatch in model document".into(),
                ));
            }
            if weights.iter().any(|v| !v.is_finite())
                || self.biases[l].iter().any(|v| !v.is_finite())
            {
                return Err(NeuralError::InvalidSpec(
                    "non-finite parameter in model document".into(),
                ));
            }
            layers.push(Layer {
                weights,
                bias: Array1::from_vec(self.biases[l].clone()),
            });
        }
        Ok((self.spec, MlpParams { layers }, self.adam))
    }
}
