use super::{Parameter, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step<F: Real>(&self, param: &mut Parameter<F>) {
        if param.frozen {
            return;
        }
        param.step_count += 1;
        let t = param.step_count as i32;
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let c1 = F::one() / (F::one() - F::lit(self.beta1.powi(t)));
        let c2 = F::one() / (F::one() - F::lit(self.beta2.powi(t)));
        let lr = F::lit(self.learning_rate);
        let eps = F::lit(self.epsilon);
        let Parameter {
            value,
            grad,
            adam_m,
            adam_v,
            ..
        } = param;
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(adam_m.data_mut())
            .zip(adam_v.data_mut())
        {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// One bias-corrected Adam update with the standard betas.
pub fn adam_step<F: Real>(params: &mut [&mut Parameter<F>], learning_rate: f64) {
    let cfg = AdamConfig::new(learning_rate);
    for p in params.iter_mut() {
        cfg.step(p);
    }
}
