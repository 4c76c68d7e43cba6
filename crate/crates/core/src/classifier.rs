//! Grid classifier: a softmax MLP over flattened, mean/std-normalized
//! grid pixels, trained with categorical cross-entropy and Adam, plus the
//! per-class average-precision metric.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural_core::{
    backward, forward, forward_trace, Activation, AdamConfig, AdamState, MlpModelDoc, MlpParams,
    MlpSpec, NeuralError,
};
use crate::pose_data::GrayImage;

pub const DEFAULT_HIDDEN_WIDTH: usize = 128;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("grid is {got_w}x{got_h}, model expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("no training examples")]
    EmptyTrainingSet,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("bad model document: {0}")]
    BadDocument(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 1e-3,
            batch_size: 32,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            seed: 0,
        }
    }
}

/// Trained classifier: network, input geometry, pixel normalization
/// statistics (fitted on the training set only), and class names.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    spec: MlpSpec,
    params: MlpParams,
    pub input_width: u32,
    pub input_height: u32,
    pub norm_mean: f64,
    pub norm_std: f64,
    pub classes: Vec<String>,
}

fn flatten_normalized(img: &GrayImage, mean: f64, std: f64) -> Vec<f64> {
    img.data()
        .iter()
        .map(|&p| (p as f64 / 255.0 - mean) / std)
        .collect()
}

/// Train on `(grid, label)` pairs. Batch composition is derived from the
/// seed over the given example order, so callers should pass a canonically
/// ordered dataset.
pub fn train_classifier(
    examples: &[(&GrayImage, u32)],
    classes: &[String],
    config: &ClassifierConfig,
) -> Result<ClassifierModel, ClassifierError> {
    if examples.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let n_classes = classes.len();
    let mut per_class = vec![0usize; n_classes];
    for &(_, label) in examples {
        if label as usize >= n_classes {
            return Err(ClassifierError::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        per_class[label as usize] += 1;
    }
    if let Some(empty) = per_class.iter().position(|&c| c == 0) {
        return Err(ClassifierError::EmptyClass(empty));
    }
    let (w, h) = (examples[0].0.width(), examples[0].0.height());
    for &(img, _) in examples {
        if img.width() != w || img.height() != h {
            return Err(ClassifierError::DimensionMismatch {
                got_w: img.width(),
                got_h: img.height(),
                want_w: w,
                want_h: h,
            });
        }
    }

    // Scalar pixel statistics over the training set, in [0,1] units.
    let total_px = examples.len() as f64 * (w as f64) * (h as f64);
    let sum: f64 = examples
        .iter()
        .map(|(img, _)| img.data().iter().map(|&p| p as f64 / 255.0).sum::<f64>())
        .sum();
    let mean = sum / total_px;
    let sq_sum: f64 = examples
        .iter()
        .map(|(img, _)| {
            img.data()
                .iter()
                .map(|&p| {
                    let v = p as f64 / 255.0 - mean;
                    v * v
                })
                .sum::<f64>()
        })
        .sum();
    let std = (sq_sum / total_px).sqrt().max(1e-6);

    let input_dim = (w * h) as usize;
    let spec = MlpSpec::uniform(
        vec![input_dim, config.hidden_width, n_classes],
        Activation::Tanh,
        Activation::Softmax,
    )?;
    let mut params = MlpParams::init(&spec, config.seed);
    let mut adam = AdamState::for_params(
        AdamConfig::with_learning_rate(config.learning_rate),
        &params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_CAFE);

    let n = examples.len();
    let features: Vec<Vec<f64>> = examples
        .iter()
        .map(|(img, _)| flatten_normalized(img, mean, std))
        .collect();
    let batch_size = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let x = Array2::from_shape_fn((chunk.len(), input_dim), |(r, c)| {
                features[chunk[r]][c]
            });
            let trace = forward_trace(&spec, &params, &x)?;
            // Fused softmax + cross-entropy gradient wrt logits.
            let mut grad = trace.output().clone();
            for (r, &i) in chunk.iter().enumerate() {
                grad[[r, examples[i].1 as usize]] -= 1.0;
            }
            grad.mapv_inplace(|g| g / chunk.len() as f64);
            let grads = backward(&spec, &params, &trace, &grad)?;
            adam.step(&mut params.flat_mut(), &grads.flat())?;
        }
    }

    Ok(ClassifierModel {
        spec,
        params,
        input_width: w,
        input_height: h,
        norm_mean: mean,
        norm_std: std,
        classes: classes.to_vec(),
    })
}

impl ClassifierModel {
    fn check_dims(&self, grid: &GrayImage) -> Result<(), ClassifierError> {
        if grid.width() != self.input_width || grid.height() != self.input_height {
            return Err(ClassifierError::DimensionMismatch {
                got_w: grid.width(),
                got_h: grid.height(),
                want_w: self.input_width,
                want_h: self.input_height,
            });
        }
        Ok(())
    }

    /// Class probability distribution for one grid.
    pub fn predict(&self, grid: &GrayImage) -> Result<Vec<f64>, ClassifierError> {
        Ok(self.predict_batch(&[grid])?.pop().unwrap())
    }

    pub fn predict_batch(
        &self,
        grids: &[&GrayImage],
    ) -> Result<Vec<Vec<f64>>, ClassifierError> {
        for g in grids {
            self.check_dims(g)?;
        }
        let input_dim = (self.input_width * self.input_height) as usize;
        let x = Array2::from_shape_fn((grids.len(), input_dim), |(r, c)| {
            (grids[r].data()[c] as f64 / 255.0 - self.norm_mean) / self.norm_std
        });
        let out = forward(&self.spec, &self.params, &x)?;
        Ok(out.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Mean cross-entropy of the model on labeled grids.
    pub fn evaluate_loss(&self, examples: &[(&GrayImage, u32)]) -> Result<f64, ClassifierError> {
        let grids: Vec<&GrayImage> = examples.iter().map(|&(g, _)| g).collect();
        let probs = self.predict_batch(&grids)?;
        let mut loss = 0.0;
        for (p, &(_, label)) in probs.iter().zip(examples.iter()) {
            loss -= p[label as usize].max(1e-300).ln();
        }
        Ok(loss / examples.len() as f64)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn to_doc(&self) -> ClassifierModelDoc {
        ClassifierModelDoc {
            version: crate::neural_core::MODEL_DOC_VERSION,
            model: MlpModelDoc::new(&self.spec, &self.params, AdamConfig::default()),
            input_width: self.input_width,
            input_height: self.input_height,
            norm_mean: self.norm_mean,
            norm_std: self.norm_std,
            classes: self.classes.clone(),
        }
    }
}

/// Persisted form of a [`ClassifierModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierModelDoc {
    pub version: u32,
    pub model: MlpModelDoc,
    pub input_width: u32,
    pub input_height: u32,
    pub norm_mean: f64,
    pub norm_std: f64,
    pub classes: Vec<String>,
}

impl ClassifierModelDoc {
    pub fn into_model(self) -> Result<ClassifierModel, ClassifierError> {
        let (spec, params, _) = self.model.into_parts()?;
        if spec.input_width() != (self.input_width * self.input_height) as usize {
            return Err(ClassifierError::BadDocument(
                "network input differs from grid geometry".into(),
            ));
        }
        if spec.output_width() != self.classes.len() {
            return Err(ClassifierError::BadDocument(
                "network output differs from class count".into(),
            ));
        }
        Ok(ClassifierModel {
            spec,
            params,
            input_width: self.input_width,
            input_height: self.input_height,
            norm_mean: self.norm_mean,
            norm_std: self.norm_std,
            classes: self.classes,
        })
    }
}

/// Per-class precision (`correct-in-class / predicted-in-class`, 0 when a
/// class is never predicted) and the mean over classes.
pub fn average_precision(
    predicted: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> (Vec<f64>, f64) {
    let mut predicted_count = vec![0usize; num_classes];
    let mut correct_count = vec![0usize; num_classes];
    for (&p, &l) in predicted.iter().zip(labels.iter()) {
        if p < num_classes {
            predicted_count[p] += 1;
            if p == l {
                correct_count[p] += 1;
            }
        }
    }
    let per_class: Vec<f64> = (0..num_classes)
        .map(|c| {
            if predicted_count[c] == 0 {
                0.0
            } else {
                correct_count[c] as f64 / predicted_count[c] as f64
            }
        })
        .collect();
    let mean = per_class.iter().sum::<f64>() / num_classes as f64;
    (per_class, mean)
}

/// Index of the largest probability; ties go to the lowest class index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in probs.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
