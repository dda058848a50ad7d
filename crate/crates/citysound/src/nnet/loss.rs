//! Classification losses with analytic gradients w.r.t. the predicted
//! probabilities.

use crate::error::{Error, Result};
use crate::nnet::{real, row_sum_tolerance, Real, Tensor4};

/// Probabilities are clipped to [PROB_CLIP, 1 - PROB_CLIP] inside the logs.
pub const PROB_CLIP: f64 = 1e-7;

fn check_shapes<F: Real>(pred: &Tensor4<F>, target: &Tensor4<F>) -> Result<()> {
    if pred.shape != target.shape {
        return Err(Error::Shape(format!(
            "prediction shape {:?} vs target shape {:?}",
            pred.shape, target.shape
        )));
    }
    if pred.batch() == 0 {
        return Err(Error::EmptyInput("loss over an empty batch".into()));
    }
    Ok(())
}

/// Mean over the batch of `-ln(p[target])` for one-hot targets.
///
/// Rows must be probability distributions (sum 1 within tolerance) and each
/// target row one-hot. Returns the scalar loss and dL/dpred.
pub fn categorical_cross_entropy<F: Real>(
    pred: &Tensor4<F>,
    target: &Tensor4<F>,
) -> Result<(F, Tensor4<F>)> {
    check_shapes(pred, target)?;
    let c = pred.channels();
    let tol = row_sum_tolerance::<F>();
    for (i, row) in pred.data.chunks_exact(c).enumerate() {
        let sum: F = row.iter().copied().sum();
        if (sum - F::one()).abs() > tol {
            return Err(Error::Numeric(format!(
                "prediction row {i} sums to {sum}, not a distribution"
            )));
        }
    }
    for (i, row) in target.data.chunks_exact(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == F::one()).count();
        let zeros = row.iter().filter(|&&v| v == F::zero()).count();
        if ones != 1 || zeros != c - 1 {
            return Err(Error::Shape(format!("target row {i} is not one-hot")));
        }
    }
    Ok(cce_unchecked(pred, target))
}

/// Core categorical cross entropy without precondition checks (the checks
/// reject the off-simplex points finite-difference probes must visit).
pub(crate) fn cce_unchecked<F: Real>(pred: &Tensor4<F>, target: &Tensor4<F>) -> (F, Tensor4<F>) {
    let n = pred.batch();
    let scale = 1.0 / n as f64;
    let lo = real::<F>(PROB_CLIP);
    let hi = real::<F>(1.0 - PROB_CLIP);

    let mut loss = 0.0f64;
    let mut grad = Tensor4::zeros(pred.shape);
    for i in 0..pred.data.len() {
        let t = target.data[i];
        if t > F::zero() {
            let p = pred.data[i].max(lo).min(hi);
            loss -= (t * p.ln()).to_f64().unwrap() * scale;
            grad.data[i] = -t / p * real(scale);
        }
    }
    (real(loss), grad)
}

/// Mean over batch and classes of `-[t ln p + (1-t) ln(1-p)]` for multi-hot
/// targets. Returns the scalar loss and dL/dpred.
pub fn binary_cross_entropy<F: Real>(
    pred: &Tensor4<F>,
    target: &Tensor4<F>,
) -> Result<(F, Tensor4<F>)> {
    check_shapes(pred, target)?;
    for (i, &p) in pred.data.iter().enumerate() {
        if !(p >= F::zero() && p <= F::one()) {
            return Err(Error::Numeric(format!(
                "prediction {i} = {p} outside [0, 1]"
            )));
        }
    }
    Ok(bce_unchecked(pred, target))
}

pub(crate) fn bce_unchecked<F: Real>(pred: &Tensor4<F>, target: &Tensor4<F>) -> (F, Tensor4<F>) {
    let n = pred.batch();
    let c = pred.sample_len();
    let scale = 1.0 / (n * c) as f64;
    let lo = real::<F>(PROB_CLIP);
    let hi = real::<F>(1.0 - PROB_CLIP);

    let mut loss = 0.0f64;
    let mut grad = Tensor4::zeros(pred.shape);
    for i in 0..pred.data.len() {
        let t = pred.data[i].max(lo).min(hi);
        let y = target.data[i];
        let term = y * t.ln() + (F::one() - y) * (F::one() - t).ln();
        loss -= term.to_f64().unwrap() * scale;
        grad.data[i] = (-y / t + (F::one() - y) / (F::one() - t)) * real(scale);
    }
    (real(loss), grad)
}
