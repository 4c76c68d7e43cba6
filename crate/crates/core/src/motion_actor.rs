//! Motion aggregation and key-actor identification from per-track motion.
//!
//! The aggregation step combines per-element motion vectors with a
//! softmax-attention similarity over context features. The key-actor step
//! reduces each track to its mean retained flow magnitude and picks the
//! argmax.

use ndarray::{Array2, Axis};
use thiserror::Error;

use crate::pose_data::Track;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("track {track_id}: no detection survives score threshold {threshold}")]
    EmptyAfterFilter { track_id: u32, threshold: f64 },
    #[error("empty input")]
    EmptyInput,
}

/// Inputs to [`aggregate_motion`]: context features `x`, motion features `y`,
/// a scalar blend `alpha`, and linear query/key/value projections.
#[derive(Debug, Clone)]
pub struct MotionFeatures {
    /// N x d_x context features.
    pub context: Array2<f64>,
    /// N x d_y motion features.
    pub motion: Array2<f64>,
    pub alpha: f64,
    /// d_k x d_x query projection.
    pub query_proj: Array2<f64>,
    /// d_k x d_x key projection.
    pub key_proj: Array2<f64>,
    /// d_y x d_y value projection.
    pub value_proj: Array2<f64>,
    /// The formula as printed applies the value projection to the row's own
    /// motion vector, which makes the similarity sum collapse to 1. Setting
    /// this switches to the attention-style reading that mixes values across
    /// elements instead.
    pub value_of_j: bool,
}

impl MotionFeatures {
    /// Identity projections, `value_of_j` off, `alpha` = 1.
    pub fn with_identity_projections(context: Array2<f64>, motion: Array2<f64>) -> Self {
        let d_x = context.ncols();
        let d_y = motion.ncols();
        Self {
            context,
            motion,
            alpha: 1.0,
            query_proj: Array2::eye(d_x),
            key_proj: Array2::eye(d_x),
            value_proj: Array2::eye(d_y),
            value_of_j: false,
        }
    }
}

/// Row-wise softmax similarity matrix between projected context features,
/// scaled dot products with scale `1/sqrt(d_k)`. Every row sums to 1.
pub fn similarity_matrix(feats: &MotionFeatures) -> Result<Array2<f64>, MotionError> {
    let q = feats.context.dot(&feats.query_proj.t());
    let k = feats.context.dot(&feats.key_proj.t());
    let d_k = q.ncols() as f64;
    let mut scores = q.dot(&k.t());
    scores.mapv_inplace(|s| s / d_k.sqrt());
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|s| s / sum);
    }
    Ok(scores)
}

/// Aggregate motion features:
/// `y_hat_i = y_i + alpha * sum_j f(theta(x_i), phi(x_j)) * sigma(y_i)`,
/// or `sigma(y_j)` inside the sum when `value_of_j` is set.
pub fn aggregate_motion(feats: &MotionFeatures) -> Result<Array2<f64>, MotionError> {
    let n = feats.context.nrows();
    if n == 0 || feats.motion.nrows() != n {
        return Err(MotionError::DimensionMismatch(format!(
            "context has {} rows, motion has {}",
            n,
            feats.motion.nrows()
        )));
    }
    if feats.query_proj.ncols() != feats.context.ncols()
        || feats.key_proj.ncols() != feats.context.ncols()
        || feats.query_proj.nrows() != feats.key_proj.nrows()
    {
        return Err(MotionError::DimensionMismatch(
            "query/key projections do not match context width".into(),
        ));
    }
    if feats.value_proj.ncols() != feats.motion.ncols()
        || feats.value_proj.nrows() != feats.motion.ncols()
    {
        return Err(MotionError::DimensionMismatch(
            "value projection must be square over the motion width".into(),
        ));
    }
    let f = similarity_matrix(feats)?;
    let values = feats.motion.dot(&feats.value_proj.t());
    let mixed = if feats.value_of_j {
        f.dot(&values)
    } else {
        // Literal form: the row sum of f scales the row's own value vector.
        let row_sums = f.sum_axis(Axis(1));
        let mut scaled = values;
        for (mut row, s) in scaled.rows_mut().into_iter().zip(row_sums.iter()) {
            row.mapv_inplace(|v| v * s);
        }
        scaled
    };
    Ok(&feats.motion + &(mixed * feats.alpha))
}

/// Summary motion of one track: mean retained flow magnitude in px/frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackScore {
    pub track_id: u32,
    pub score: f64,
}

/// Mean flow magnitude over detections whose score clears the threshold;
/// low-score detections are discarded first.
pub fn track_motion_score(track: &Track, score_threshold: f64) -> Result<TrackScore, MotionError> {
    let retained: Vec<f64> = track
        .detections
        .iter()
        .filter(|d| d.detection_score >= score_threshold)
        .map(|d| d.flow_magnitude)
        .collect();
    if retained.is_empty() {
        return Err(MotionError::EmptyAfterFilter {
            track_id: track.track_id,
            threshold: score_threshold,
        });
    }
    Ok(TrackScore {
        track_id: track.track_id,
        score: retained.iter().sum::<f64>() / retained.len() as f64,
    })
}

/// The track with maximal motion score; ties go to the smallest track id.
pub fn select_key_actor(scores: &[TrackScore]) -> Result<u32, MotionError> {
    scores
        .iter()
        .fold(None::<&TrackScore>, |best, s| match best {
            None => Some(s),
            Some(b) if s.score > b.score || (s.score == b.score && s.track_id < b.track_id) => {
                Some(s)
            }
            Some(b) => Some(b),
        })
        .map(|s| s.track_id)
        .ok_or(MotionError::EmptyInput)
}
