//! Embedded pose filtering: a stacked autoencoder trained to reconstruct
//! reference pose vectors decides whether an estimated pose is plausible.
//!
//! Poses whose reconstruction error exceeds a threshold learned from the
//! training-error distribution are discarded. The encoder half of the same
//! autoencoder feeds the clustering stage.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural_core::{
    backward, forward, forward_trace, mse_loss, Activation, AdamConfig, AdamState, MlpModelDoc,
    MlpParams, MlpSpec, NeuralError,
};
use crate::pose_encoding::{PoseVector, POSE_VECTOR_DIM};

/// Encoder widths of the stacked autoencoder; the decoder mirrors them.
pub const ENCODER_WIDTHS: [usize; 4] = [POSE_VECTOR_DIM, 64, 32, 10];
/// Latent width shared with the clustering stage.
pub const LATENT_DIM: usize = 10;
/// Fewest reference vectors accepted for training.
pub const MIN_REFERENCE_POSES: usize = 32;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("{got} reference poses; at least {need} required")]
    InsufficientData { got: usize, need: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("bad model document: {0}")]
    BadDocument(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// `k` in the threshold rule `tau = mean + k * std`.
    pub threshold_multiplier: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            threshold_multiplier: 2.0,
        }
    }
}

/// Trained autoencoder plus its training-error statistics and threshold.
#[derive(Debug, Clone)]
pub struct FilterModel {
    spec: MlpSpec,
    params: MlpParams,
    pub error_mean: f64,
    pub error_std: f64,
    pub threshold: f64,
    pub threshold_multiplier: f64,
}

/// Threshold rule: `tau = mean + k * std`.
pub fn fit_threshold(error_mean: f64, error_std: f64, k: f64) -> f64 {
    error_mean + k * error_std
}

fn sae_spec() -> MlpSpec {
    let widths = vec![
        POSE_VECTOR_DIM,
        ENCODER_WIDTHS[1],
        ENCODER_WIDTHS[2],
        LATENT_DIM,
        ENCODER_WIDTHS[2],
        ENCODER_WIDTHS[1],
        POSE_VECTOR_DIM,
    ];
    MlpSpec::uniform(widths, Activation::Tanh, Activation::Identity)
        .expect("fixed autoencoder shape")
}

fn vectors_to_matrix(vectors: &[PoseVector]) -> Array2<f64> {
    let mut m = Array2::zeros((vectors.len(), POSE_VECTOR_DIM));
    for (i, v) in vectors.iter().enumerate() {
        for (j, &x) in v.as_slice().iter().enumerate() {
            m[[i, j]] = x;
        }
    }
    m
}

/// Train the autoencoder on reference poses with minibatch Adam, then record
/// the reconstruction-error statistics of the training set and derive the
/// acceptance threshold.
pub fn train_autoencoder(
    references: &[PoseVector],
    config: &FilterConfig,
) -> Result<FilterModel, FilterError> {
    if references.len() < MIN_REFERENCE_POSES {
        return Err(FilterError::InsufficientData {
            got: references.len(),
            need: MIN_REFERENCE_POSES,
        });
    }
    let spec = sae_spec();
    let mut params = MlpParams::init(&spec, config.seed);
    let data = vectors_to_matrix(references);
    let n = data.nrows();
    let mut adam = AdamState::for_params(
        AdamConfig::with_learning_rate(config.learning_rate),
        &params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xB4C0_FFEE);
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let x = ndarray::Array2::from_shape_fn((chunk.len(), POSE_VECTOR_DIM), |(r, c)| {
                data[[chunk[r], c]]
            });
            let trace = forward_trace(&spec, &params, &x)?;
            let (_, grad) = mse_loss(&x, trace.output())?;
            let grads = backward(&spec, &params, &trace, &grad)?;
            adam.step(&mut params.flat_mut(), &grads.flat())?;
        }
    }

    let errors = reconstruction_errors_impl(&spec, &params, &data)?;
    let error_mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let variance = errors
        .iter()
        .map(|e| (e - error_mean) * (e - error_mean))
        .sum::<f64>()
        / errors.len() as f64;
    let error_std = variance.sqrt();
    let threshold = fit_threshold(error_mean, error_std, config.threshold_multiplier);
    Ok(FilterModel {
        spec,
        params,
        error_mean,
        error_std,
        threshold,
        threshold_multiplier: config.threshold_multiplier,
    })
}

fn reconstruction_errors_impl(
    spec: &MlpSpec,
    params: &MlpParams,
    data: &Array2<f64>,
) -> Result<Vec<f64>, FilterError> {
    let recon = forward(spec, params, data)?;
    Ok(data
        .rows()
        .into_iter()
        .zip(recon.rows())
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
        .collect())
}

impl FilterModel {
    /// Squared reconstruction error `||v - decode(encode(v))||^2`.
    pub fn reconstruction_error(&self, v: &PoseVector) -> f64 {
        self.reconstruction_errors(std::slice::from_ref(v))[0]
    }

    pub fn reconstruction_errors(&self, vectors: &[PoseVector]) -> Vec<f64> {
        if vectors.is_empty() {
            return Vec::new();
        }
        let data = vectors_to_matrix(vectors);
        reconstruction_errors_impl(&self.spec, &self.params, &data)
            .expect("model shapes are fixed")
    }

    /// Re-derive the threshold with a new multiplier.
    pub fn refit_threshold(&mut self, k: f64) -> f64 {
        self.threshold_multiplier = k;
        self.threshold = fit_threshold(self.error_mean, self.error_std, k);
        self.threshold
    }

    /// Partition pose indices into (kept, discarded): kept iff the
    /// reconstruction error does not exceed the threshold.
    pub fn filter_poses(&self, vectors: &[PoseVector]) -> (Vec<usize>, Vec<usize>) {
        let errors = self.reconstruction_errors(vectors);
        let mut kept = Vec::new();
        let mut discarded = Vec::new();
        for (i, e) in errors.iter().enumerate() {
            if *e <= self.threshold {
                kept.push(i);
            } else {
                discarded.push(i);
            }
        }
        (kept, discarded)
    }

    /// The encoder half, ending at the latent layer.
    pub fn encoder(&self) -> (MlpSpec, MlpParams) {
        let depth = ENCODER_WIDTHS.len() - 1;
        (
            self.spec.prefix(depth).expect("fixed shape"),
            self.params.prefix(depth),
        )
    }

    pub fn autoencoder(&self) -> (&MlpSpec, &MlpParams) {
        (&self.spec, &self.params)
    }

    pub fn to_doc(&self) -> FilterModelDoc {
        FilterModelDoc {
            version: crate::neural_core::MODEL_DOC_VERSION,
            model: MlpModelDoc::new(&self.spec, &self.params, AdamConfig::default()),
            error_mean: self.error_mean,
            error_std: self.error_std,
            threshold: self.threshold,
            threshold_multiplier: self.threshold_multiplier,
        }
    }
}

/// Persisted form of a [`FilterModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterModelDoc {
    pub version: u32,
    pub model: MlpModelDoc,
    pub error_mean: f64,
    pub error_std: f64,
    pub threshold: f64,
    pub threshold_multiplier: f64,
}

impl FilterModelDoc {
    pub fn into_model(self) -> Result<FilterModel, FilterError> {
        let (spec, params, _) = self.model.into_parts()?;
        if spec.widths() != sae_spec().widths() {
            return Err(FilterError::BadDocument(
                "unexpected autoencoder shape".into(),
            ));
        }
        Ok(FilterModel {
            spec,
            params,
            error_mean: self.error_mean,
            error_std: self.error_std,
            threshold: self.threshold,
            threshold_multiplier: self.threshold_multiplier,
        })
    }
}
