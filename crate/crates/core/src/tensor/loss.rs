use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Predictions are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` before the log.
pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Targets are one-hot over the channel axis of a rank-4 tensor.
    CategoricalCrossEntropy,
    BinaryCrossEntropy,
}

/// Mean loss over batch and spatial cells, with its gradient with respect to
/// the prediction. Clamped entries receive zero gradient.
pub fn loss<F: Real>(
    prediction: &Tensor<F>,
    target: &Tensor<F>,
    kind: LossKind,
) -> Result<(f64, Tensor<F>)> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            prediction.shape(),
            target.shape()
        )));
    }
    let lo = F::lit(LOG_CLAMP);
    let hi = F::one() - lo;
    let mut grad = Tensor::zeros(prediction.shape());
    let mut total = 0.0f64;
    let count = match kind {
        LossKind::CategoricalCrossEntropy => {
            let (n, _, h, w) = prediction.dims4()?;
            n * h * w
        }
        LossKind::BinaryCrossEntropy => prediction.len(),
    };
    if count == 0 {
        return Err(Error::Empty("loss over an empty tensor".into()));
    }
    let scale = F::one() / F::lit(count as f64);
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(prediction.data())
        .zip(target.data())
    {
        let clamped = p.max(lo).min(hi);
        let inside = p >= lo && p <= hi;
        match kind {
            LossKind::CategoricalCrossEntropy => {
                if t != F::zero() {
                    total -= (t * clamped.ln()).to_f64().unwrap_or(f64::NAN);
                    if inside {
                        *g = -t / clamped * scale;
                    }
                }
            }
            LossKind::BinaryCrossEntropy => {
                let one_minus = F::one() - clamped;
                total -= (t * clamped.ln() + (F::one() - t) * one_minus.ln())
                    .to_f64()
                    .unwrap_or(f64::NAN);
                if inside {
                    *g = (-t / clamped + (F::one() - t) / one_minus) * scale;
                }
            }
        }
    }
    Ok((total / count as f64, grad))
}
