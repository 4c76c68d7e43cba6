//! Finite-difference verification of backpropagated gradients.

use ndarray::Array2;

use super::{backward, forward_trace, MlpParams, MlpSpec, NeuralError};

/// Compare analytic parameter gradients against central finite differences.
///
/// `loss` maps the network output batch to `(loss, grad_out)` where
/// `grad_out` follows the convention of [`backward`] (gradient with respect
/// to logits when the output activation is softmax). Returns the maximum
/// per-parameter relative error `|a - n| / (max(|a|, |n|) + h)`.
pub fn grad_check<F>(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &Array2<f64>,
    h: f64,
    loss: F,
) -> Result<f64, NeuralError>
where
    F: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    assert!(h > 0.0, "step size must be positive");
    let trace = forward_trace(spec, params, batch)?;
    let (_, grad_out) = loss(trace.output());
    let analytic = backward(spec, params, &trace, &grad_out)?;

    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    for layer in 0..params.layers.len() {
        for tensor in 0..2 {
            let len = if tensor == 0 {
                params.layers[layer].weights.len()
            } else {
                params.layers[layer].bias.len()
            };
            for i in 0..len {
                let eval = |p: &MlpParams| -> Result<f64, NeuralError> {
                    let out = forward_trace(spec, p, batch)?;
                    Ok(loss(out.output()).0)
                };
                fn slot(p: &mut MlpParams, layer: usize, tensor: usize, i: usize) -> &mut f64 {
                    let l = &mut p.layers[layer];
                    if tensor == 0 {
                        &mut l.weights.as_slice_mut().unwrap()[i]
                    } else {
                        &mut l.bias[i]
                    }
                }
                let orig = *slot(&mut probe, layer, tensor, i);
                *slot(&mut probe, layer, tensor, i) = orig + h;
                let up = eval(&probe)?;
                *slot(&mut probe, layer, tensor, i) = orig - h;
                let down = eval(&probe)?;
                *slot(&mut probe, layer, tensor, i) = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = {
                    let l = &analytic.layers[layer];
                    if tensor == 0 {
                        l.weights.as_slice().unwrap()[i]
                    } else {
                        l.bias[i]
                    }
                };
                let rel = (a - numeric).abs() / (a.abs().max(numeric.abs()) + h);
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(max_rel)
}
