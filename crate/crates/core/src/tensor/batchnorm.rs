use super::{LayerKind, LayerSpec, Parameter, Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight kept by the running statistics on each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics and update the running statistics.
    Train,
    /// Normalize by the running statistics.
    Infer,
}

/// Per-channel batch normalization over `(batch, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<F: Real = f32> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
}

/// Output, trace, batch mean and batch variance.
pub type BatchOutput<F> = (Tensor<F>, BatchNormTrace<F>, Vec<F>, Vec<F>);

#[derive(Debug, Clone)]
pub struct BatchNormTrace<F> {
    normalized: Tensor<F>,
    inv_std: Vec<F>,
}

impl<F: Real> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Parameter::new(Tensor::filled(&[channels], F::one())),
            beta: Parameter::new(Tensor::zeros(&[channels])),
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::pointwise(LayerKind::Batchnorm, self.channels())
    }

    pub fn forward(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        let (n, c, h, w) = self.check(input)?;
        let hw = h * w;
        let eps = F::lit(BN_EPSILON);
        let mut out = input.clone();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for i in 0..n {
            for ch in 0..c {
                let scale = gamma[ch] / (self.running_var[ch] + eps).sqrt();
                let shift = beta[ch] - self.running_mean[ch] * scale;
                let start = (i * c + ch) * hw;
                for v in &mut out.data_mut()[start..start + hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(out)
    }

    /// Normalizes by batch statistics without touching the running ones.
    /// Returns the output, the trace and the batch `(mean, variance)`.
    pub fn forward_batch(&self, input: &Tensor<F>) -> Result<BatchOutput<F>> {
        let (n, c, h, w) = self.check(input)?;
        let hw = h * w;
        let count = F::lit((n * hw) as f64);
        let eps = F::lit(BN_EPSILON);
        let mut mean = vec![F::zero(); c];
        let mut var = vec![F::zero(); c];
        for ch in 0..c {
            let mut sum = F::zero();
            for i in 0..n {
                let start = (i * c + ch) * hw;
                sum += input.data()[start..start + hw].iter().copied().sum();
            }
            let m = sum / count;
            let mut sq = F::zero();
            for i in 0..n {
                let start = (i * c + ch) * hw;
                sq += input.data()[start..start + hw]
                    .iter()
                    .map(|&v| (v - m) * (v - m))
                    .sum();
            }
            mean[ch] = m;
            var[ch] = sq / count;
        }
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut normalized = input.clone();
        let mut out = input.clone();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for i in 0..n {
            for ch in 0..c {
                let start = (i * c + ch) * hw;
                for j in start..start + hw {
                    let xhat = (input.data()[j] - mean[ch]) * inv_std[ch];
                    normalized.data_mut()[j] = xhat;
                    out.data_mut()[j] = gamma[ch] * xhat + beta[ch];
                }
            }
        }
        Ok((
            out,
            BatchNormTrace {
                normalized,
                inv_std,
            },
            mean,
            var,
        ))
    }

    pub fn forward_train(&mut self, input: &Tensor<F>) -> Result<(Tensor<F>, BatchNormTrace<F>)> {
        let (out, trace, mean, var) = self.forward_batch(input)?;
        let keep = F::lit(BN_MOMENTUM);
        let take = F::one() - keep;
        for ch in 0..self.channels() {
            self.running_mean[ch] = keep * self.running_mean[ch] + take * mean[ch];
            self.running_var[ch] = keep * self.running_var[ch] + take * var[ch];
        }
        Ok((out, trace))
    }

    pub fn backward(
        &mut self,
        trace: &BatchNormTrace<F>,
        grad_out: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let (n, c, h, w) = grad_out.dims4()?;
        if grad_out.shape() != trace.normalized.shape() {
            return Err(Error::shape(
                "batchnorm gradient does not match its forward pass",
            ));
        }
        let hw = h * w;
        let count = F::lit((n * hw) as f64);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let gamma = self.gamma.value.data()[ch];
            let (mut sum_dy, mut sum_dy_xhat) = (F::zero(), F::zero());
            for i in 0..n {
                let start = (i * c + ch) * hw;
                for j in start..start + hw {
                    sum_dy += grad_out.data()[j];
                    sum_dy_xhat += grad_out.data()[j] * trace.normalized.data()[j];
                }
            }
            if !self.gamma.frozen {
                self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
                self.beta.grad.data_mut()[ch] += sum_dy;
            }
            let k = gamma * trace.inv_std[ch] / count;
            for i in 0..n {
                let start = (i * c + ch) * hw;
                for j in start..start + hw {
                    grad_in.data_mut()[j] = k
                        * (count * grad_out.data()[j]
                            - sum_dy
                            - trace.normalized.data()[j] * sum_dy_xhat);
                }
            }
        }
        Ok(grad_in)
    }

    fn check(&self, input: &Tensor<F>) -> Result<(usize, usize, usize, usize)> {
        let (n, c, h, w) = input.dims4()?;
        if n * h * w == 0 {
            return Err(Error::Empty("batch normalization of an empty batch".into()));
        }
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batchnorm has {} channels, input has {c}",
                self.channels()
            )));
        }
        Ok((n, c, h, w))
    }
}

/// Mode-dispatching entry point; train mode updates the running statistics.
pub fn batchnorm_forward<F: Real>(
    bn: &mut BatchNorm2d<F>,
    input: &Tensor<F>,
    mode: BnMode,
) -> Result<Tensor<F>> {
    match mode {
        BnMode::Train => bn.forward_train(input).map(|(out, _)| out),
        BnMode::Infer => bn.forward(input),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardized_batch_passes_through() {
        // Two samples per channel at +-1: mean 0, variance 1.
        let x = Tensor::<f64>::from_vec(&[2, 1, 1, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let mut bn = BatchNorm2d::new(1);
        let y = batchnorm_forward(&mut bn, &x, BnMode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut bn = BatchNorm2d::<f32>::new(2);
        bn.gamma.value.fill(0.0);
        bn.beta.value = Tensor::from_vec(&[2], vec![0.5, -2.0]).unwrap();
        let x = Tensor::random_uniform(&[3, 2, 2, 2], 3.0, &mut ChaCha8Rng::seed_from_u64(1));
        let y = batchnorm_forward(&mut bn, &x, BnMode::Train).unwrap();
        for i in 0..3 {
            assert!(y.sample(i)[..4].iter().all(|&v| v == 0.5));
            assert!(y.sample(i)[4..].iter().all(|&v| v == -2.0));
        }
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::random_uniform(&[8, 3, 4, 4], 5.0, &mut rng).map(|v| v * 2.0 + 1.0);
        let mut bn = BatchNorm2d::new(3);
        let y = batchnorm_forward(&mut bn, &x, BnMode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|i| y.sample(i)[ch * 16..(ch + 1) * 16].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            // Epsilon in the denominator keeps the variance a hair under one.
            assert!((var - 1.0).abs() < 1e-4, "variance {var}");
        }
    }

    #[test]
    fn running_stats_use_momentum() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![3.0, 5.0]).unwrap();
        let mut bn = BatchNorm2d::new(1);
        bn.forward_train(&x).unwrap();
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-12);
        // Inference uses the running statistics.
        let y = batchnorm_forward(&mut bn, &x, BnMode::Infer).unwrap();
        let expect = (3.0 - 0.4) / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let bn = BatchNorm2d::<f32>::new(4);
        assert!(matches!(
            bn.forward(&Tensor::zeros(&[0, 4, 2, 2])),
            Err(Error::Empty(_))
        ));
    }
}
