use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Softmax across the channel axis of each spatial cell.
    Softmax,
}

pub fn activation_forward<F: Real>(input: &Tensor<F>, kind: Activation) -> Result<Tensor<F>> {
    match kind {
        Activation::Relu => Ok(input.map(|v| v.max(F::zero()))),
        Activation::Sigmoid => {
            // Keep outputs strictly inside (0, 1) even where exp saturates.
            let hi = F::one() - F::epsilon();
            let lo = F::min_positive_value();
            Ok(input.map(|v| sigmoid(v).max(lo).min(hi)))
        }
        Activation::Softmax => {
            let (n, c, h, w) = input.dims4()?;
            let hw = h * w;
            let mut out = input.clone();
            let data = out.data_mut();
            for i in 0..n {
                let base = i * c * hw;
                for cell in 0..hw {
                    let mut max = F::neg_infinity();
                    for ch in 0..c {
                        max = max.max(data[base + ch * hw + cell]);
                    }
                    let mut sum = F::zero();
                    for ch in 0..c {
                        let e = (data[base + ch * hw + cell] - max).exp();
                        data[base + ch * hw + cell] = e;
                        sum += e;
                    }
                    for ch in 0..c {
                        data[base + ch * hw + cell] = data[base + ch * hw + cell] / sum;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Gradient with respect to the activation input, given its output.
pub fn activation_backward<F: Real>(
    output: &Tensor<F>,
    grad_out: &Tensor<F>,
    kind: Activation,
) -> Result<Tensor<F>> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "activation gradient {:?} does not match output {:?}",
            grad_out.shape(),
            output.shape()
        )));
    }
    let mut grad = grad_out.clone();
    match kind {
        Activation::Relu => {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                if y <= F::zero() {
                    *g = F::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                *g = *g * y * (F::one() - y);
            }
        }
        Activation::Softmax => {
            let (n, c, h, w) = output.dims4()?;
            let hw = h * w;
            let y = output.data();
            let data = grad.data_mut();
            for i in 0..n {
                let base = i * c * hw;
                for cell in 0..hw {
                    let mut dot = F::zero();
                    for ch in 0..c {
                        let j = base + ch * hw + cell;
                        dot += y[j] * data[j];
                    }
                    for ch in 0..c {
                        let j = base + ch * hw + cell;
                        data[j] = y[j] * (data[j] - dot);
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
