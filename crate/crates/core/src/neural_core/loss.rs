//! Loss functions returning both the scalar loss and its gradient.

use ndarray::Array2;

use super::NeuralError;

/// Mean squared error over `M` target/prediction pairs (batch rows):
/// `loss = (1/M) * sum_m ||target_m - pred_m||^2`.
///
/// Returns the loss and its gradient with respect to `pred`,
/// `(2/M) * (pred - target)`.
pub fn mse_loss(
    target: &Array2<f64>,
    pred: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NeuralError> {
    if target.dim() != pred.dim() {
        return Err(NeuralError::DimensionMismatch(format!(
            "target {:?} vs prediction {:?}",
            target.dim(),
            pred.dim()
        )));
    }
    let m = target.nrows();
    if m == 0 {
        return Err(NeuralError::DimensionMismatch("empty batch".into()));
    }
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / m as f64;
    let grad = diff.mapv(|d| 2.0 * d / m as f64);
    Ok((loss, grad))
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Categorical cross-entropy over raw logits:
/// `loss = -(1/N) * sum_i log softmax(logits_i)[labels_i]`.
///
/// Returns the loss and its gradient with respect to the logits,
/// `(softmax - onehot) / N`.
pub fn cross_entropy_loss(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), NeuralError> {
    let n = logits.nrows();
    let classes = logits.ncols();
    if n == 0 {
        return Err(NeuralError::DimensionMismatch("empty batch".into()));
    }
    if labels.len() != n {
        return Err(NeuralError::DimensionMismatch(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(NeuralError::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let logsumexp = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= logits[[i, y]] - logsumexp;
        grad[[i, y]] -= 1.0;
    }
    grad.mapv_inplace(|g| g / n as f64);
    Ok((loss / n as f64, grad))
}
