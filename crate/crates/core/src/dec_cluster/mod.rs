//! Deep embedded clustering over encoder latents.
//!
//! Latents are soft-assigned to centroids with a Student's-t kernel
//! (one degree of freedom), sharpened into an auxiliary target distribution,
//! and the encoder plus centroids are trained to minimize the KL divergence
//! between the two. Key-poses are the cluster members nearest each centroid.

mod kmeans;

pub use kmeans::{assign, kmeans, KmeansResult};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural_core::{
    backward, forward, forward_trace, AdamConfig, AdamState, MlpModelDoc, MlpParams, MlpSpec,
    NeuralError,
};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("{n} points cannot form {k} clusters")]
    TooFewPoints { n: usize, k: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Student's-t soft assignment (degrees of freedom 1):
/// `q_ij = (1 + ||z_i - mu_j||^2)^-1`, normalized per row.
pub fn soft_assign(
    latents: &Array2<f64>,
    centroids: &Array2<f64>,
) -> Result<Array2<f64>, ClusterError> {
    if latents.ncols() != centroids.ncols() {
        return Err(ClusterError::DimensionMismatch(format!(
            "latent width {} vs centroid width {}",
            latents.ncols(),
            centroids.ncols()
        )));
    }
    let mut q = kernel_matrix(latents, centroids);
    for mut row in q.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(q)
}

/// Unnormalized t-kernel `s_ij = (1 + ||z_i - mu_j||^2)^-1`.
fn kernel_matrix(latents: &Array2<f64>, centroids: &Array2<f64>) -> Array2<f64> {
    let n = latents.nrows();
    let k = centroids.nrows();
    let mut s = Array2::zeros((n, k));
    for (i, z) in latents.rows().into_iter().enumerate() {
        for (j, mu) in centroids.rows().into_iter().enumerate() {
            let d2: f64 = z
                .iter()
                .zip(mu.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            s[[i, j]] = 1.0 / (1.0 + d2);
        }
    }
    s
}

/// Auxiliary target distribution:
/// `p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')` with `f_j = sum_i q_ij`.
pub fn target_distribution(q: &Array2<f64>) -> Array2<f64> {
    let freq = q.sum_axis(Axis(0));
    let mut p = Array2::zeros(q.dim());
    for (i, row) in q.rows().into_iter().enumerate() {
        let mut denom = 0.0;
        for (j, &qij) in row.iter().enumerate() {
            let t = qij * qij / freq[j];
            p[[i, j]] = t;
            denom += t;
        }
        let mut prow = p.row_mut(i);
        prow.mapv_inplace(|v| v / denom);
    }
    p
}

/// `KL(P || Q) = sum_ij p_ij log(p_ij / q_ij)` with `0 log(0/q) = 0`.
pub fn kl_loss(p: &Array2<f64>, q: &Array2<f64>) -> Result<f64, ClusterError> {
    if p.dim() != q.dim() {
        return Err(ClusterError::DimensionMismatch(format!(
            "P {:?} vs Q {:?}",
            p.dim(),
            q.dim()
        )));
    }
    let mut loss = 0.0;
    for (pij, qij) in p.iter().zip(q.iter()) {
        if *pij > 0.0 {
            if *qij == 0.0 {
                return Err(ClusterError::Domain(
                    "q is zero where p has mass".into(),
                ));
            }
            loss += pij * (pij / qij).ln();
        }
    }
    Ok(loss)
}

/// Trained clustering state: encoder plus latent centroids.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub encoder_spec: MlpSpec,
    pub encoder_params: MlpParams,
    /// `k x latent` centroids.
    pub centroids: Array2<f64>,
    pub k: usize,
}

impl ClusterModel {
    pub fn encode(&self, vectors: &Array2<f64>) -> Result<Array2<f64>, ClusterError> {
        Ok(forward(&self.encoder_spec, &self.encoder_params, vectors)?)
    }

    pub fn soft_assign(&self, vectors: &Array2<f64>) -> Result<Array2<f64>, ClusterError> {
        soft_assign(&self.encode(vectors)?, &self.centroids)
    }
}

/// Persisted form of a [`ClusterModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModelDoc {
    pub version: u32,
    pub encoder: MlpModelDoc,
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
}

impl ClusterModelDoc {
    pub fn new(model: &ClusterModel) -> Self {
        Self {
            version: crate::neural_core::MODEL_DOC_VERSION,
            encoder: MlpModelDoc::new(
                &model.encoder_spec,
                &model.encoder_params,
                AdamConfig::default(),
            ),
            centroids: model
                .centroids
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            k: model.k,
        }
    }

    pub fn into_model(self) -> Result<ClusterModel, ClusterError> {
        let (spec, params, _) = self.encoder.into_parts()?;
        let k = self.k;
        let latent = spec.output_width();
        let mut centroids = Array2::zeros((self.centroids.len(), latent));
        for (j, row) in self.centroids.iter().enumerate() {
            if row.len() != latent {
                return Err(ClusterError::DimensionMismatch(
                    "centroid width differs from encoder output".into(),
                ));
            }
            for (c, &v) in row.iter().enumerate() {
                centroids[[j, c]] = v;
            }
        }
        if centroids.nrows() != k {
            return Err(ClusterError::DimensionMismatch(
                "centroid count differs from k".into(),
            ));
        }
        Ok(ClusterModel {
            encoder_spec: spec,
            encoder_params: params,
            centroids,
            k,
        })
    }
}

/// Loss and analytic gradients of `KL(P || Q)` with `P` held constant,
/// differentiated through the t-kernel into the encoder and centroids.
pub fn dec_loss_and_grads(
    encoder_spec: &MlpSpec,
    encoder_params: &MlpParams,
    centroids: &Array2<f64>,
    vectors: &Array2<f64>,
    p: &Array2<f64>,
) -> Result<(f64, MlpParams, Array2<f64>, Array2<f64>), ClusterError> {
    let trace = forward_trace(encoder_spec, encoder_params, vectors)?;
    let latents = trace.output();
    let s = kernel_matrix(latents, centroids);
    let mut q = s.clone();
    for mut row in q.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    let loss = kl_loss(p, &q)?;

    // dL/dz_i = 2 sum_j s_ij (p_ij - q_ij) (z_i - mu_j); centroids get the
    // negated per-pair contribution.
    let n = latents.nrows();
    let k = centroids.nrows();
    let d = latents.ncols();
    let mut grad_z = Array2::zeros((n, d));
    let mut grad_mu = Array2::zeros((k, d));
    for i in 0..n {
        for j in 0..k {
            let w = 2.0 * s[[i, j]] * (p[[i, j]] - q[[i, j]]);
            for c in 0..d {
                let diff = latents[[i, c]] - centroids[[j, c]];
                grad_z[[i, c]] += w * diff;
                grad_mu[[j, c]] -= w * diff;
            }
        }
    }
    let param_grads = backward(encoder_spec, encoder_params, &trace, &grad_z)?;
    Ok((loss, param_grads, grad_mu, q))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecConfig {
    pub k: usize,
    pub seed: u64,
    pub epochs: u32,
    /// Epochs between target-distribution refreshes.
    pub update_interval: u32,
    pub learning_rate: f64,
    /// Stop when fewer than this fraction of hard assignments change
    /// between refreshes.
    pub stop_fraction: f64,
    pub kmeans_restarts: u32,
}

impl Default for DecConfig {
    fn default() -> Self {
        Self {
            k: 8,
            seed: 0,
            epochs: 80,
            update_interval: 1,
            learning_rate: 1e-3,
            stop_fraction: 0.001,
            kmeans_restarts: 4,
        }
    }
}

/// Everything a DEC run produces: the fitted model, final soft assignments,
/// the KL loss observed at each target refresh, and the epochs actually run.
#[derive(Debug, Clone)]
pub struct DecFit {
    pub model: ClusterModel,
    pub q: Array2<f64>,
    pub update_losses: Vec<f64>,
    pub epochs_run: u32,
}

fn hard_assignments(q: &Array2<f64>) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fit centroids and fine-tune the encoder by self-training.
///
/// Centroids start from seeded k-means over the initial latents. Each epoch
/// takes one full-batch Adam step on `KL(P || Q)`; `P` is recomputed every
/// `update_interval` epochs and held constant in between. Training stops
/// early when hard assignments settle.
pub fn dec_fit(
    encoder_spec: &MlpSpec,
    encoder_params: &MlpParams,
    vectors: &Array2<f64>,
    config: &DecConfig,
) -> Result<DecFit, ClusterError> {
    let n = vectors.nrows();
    if n < config.k || config.k == 0 {
        return Err(ClusterError::TooFewPoints { n, k: config.k });
    }
    let mut params = encoder_params.clone();
    let latents = forward(encoder_spec, &params, vectors)?;
    let km = kmeans(&latents, config.k, config.seed, config.kmeans_restarts)?;
    let mut centroids = km.centroids;

    let q0 = soft_assign(&latents, &centroids)?;
    let mut p = target_distribution(&q0);
    let mut prev_hard = hard_assignments(&q0);
    let mut update_losses = vec![kl_loss(&p, &q0)?];

    let lens: Vec<usize> = params
        .flat()
        .iter()
        .map(|s| s.len())
        .chain([centroids.len()])
        .collect();
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &lens,
    );

    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        if epoch > 0 && epoch % config.update_interval.max(1) == 0 {
            let z = forward(encoder_spec, &params, vectors)?;
            let q = soft_assign(&z, &centroids)?;
            let hard = hard_assignments(&q);
            let changed = hard
                .iter()
                .zip(prev_hard.iter())
                .filter(|(a, b)| a != b)
                .count();
            p = target_distribution(&q);
            update_losses.push(kl_loss(&p, &q)?);
            let settled = (changed as f64) < config.stop_fraction * n as f64;
            prev_hard = hard;
            if settled {
                break;
            }
        }
        let (_, param_grads, centroid_grads, _) =
            dec_loss_and_grads(encoder_spec, &params, &centroids, vectors, &p)?;
        let mut tensors = params.flat_mut();
        tensors.push(centroids.as_slice_mut().expect("standard layout"));
        let mut grads = param_grads.flat();
        grads.push(centroid_grads.as_slice().expect("standard layout"));
        adam.step(&mut tensors, &grads)?;
        epochs_run = epoch + 1;
    }

    let z = forward(encoder_spec, &params, vectors)?;
    let q = soft_assign(&z, &centroids)?;
    update_losses.push(kl_loss(&target_distribution(&q), &q)?);
    Ok(DecFit {
        model: ClusterModel {
            encoder_spec: encoder_spec.clone(),
            encoder_params: params,
            centroids,
            k: config.k,
        },
        q,
        update_losses,
        epochs_run,
    })
}

/// One selected representative pose.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPose {
    pub cluster: usize,
    pub frame_index: u32,
    /// Row index into the vectors the model was fitted on.
    pub index: usize,
}

/// Pick, for each cluster, the hard-assigned member whose latent is nearest
/// the centroid (distance ties go to the earliest frame). Clusters left
/// empty by the hard assignment fall back to the globally nearest sample
/// not selected yet. The result is sorted by frame index.
pub fn select_key_poses(
    model: &ClusterModel,
    q: &Array2<f64>,
    vectors: &Array2<f64>,
    frames: &[u32],
) -> Result<Vec<KeyPose>, ClusterError> {
    let n = vectors.nrows();
    if n < model.k {
        return Err(ClusterError::TooFewPoints { n, k: model.k });
    }
    if q.nrows() != n || q.ncols() != model.k || frames.len() != n {
        return Err(ClusterError::DimensionMismatch(
            "q/vectors/frames disagree on sample count".into(),
        ));
    }
    let latents = model.encode(vectors)?;
    let dist = |i: usize, j: usize| -> f64 {
        latents
            .row(i)
            .iter()
            .zip(model.centroids.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let hard = hard_assignments(q);
    let mut used = vec![false; n];
    let mut selected = Vec::with_capacity(model.k);
    let mut empty_clusters = Vec::new();
    for j in 0..model.k {
        let pick = (0..n)
            .filter(|&i| hard[i] == j)
            .min_by(|&a, &b| {
                dist(a, j)
                    .partial_cmp(&dist(b, j))
                    .unwrap()
                    .then(frames[a].cmp(&frames[b]))
            });
        match pick {
            Some(i) => {
                used[i] = true;
                selected.push(KeyPose {
                    cluster: j,
                    frame_index: frames[i],
                    index: i,
                });
            }
            None => empty_clusters.push(j),
        }
    }
    for j in empty_clusters {
        let pick = (0..n)
            .filter(|&i| !used[i])
            .min_by(|&a, &b| {
                dist(a, j)
                    .partial_cmp(&dist(b, j))
                    .unwrap()
                    .then(frames[a].cmp(&frames[b]))
            })
            .expect("n >= k leaves an unused sample per cluster");
        used[pick] = true;
        selected.push(KeyPose {
            cluster: j,
            frame_index: frames[pick],
            index: pick,
        });
    }
    selected.sort_by_key(|kp| (kp.frame_index, kp.cluster));
    Ok(selected)
}
