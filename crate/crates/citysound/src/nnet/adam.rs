//! Adam optimiser with bias correction.

use crate::nnet::{real, Param, Real};

/// Adam hyperparameters. `decay` applies the legacy schedule
/// `lr_t = lr / (1 + decay * t)`; epsilon sits outside the bias-corrected
/// square root, textbook style.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub amsgrad: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            decay: 0.0,
            amsgrad: false,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.lr <= 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
            || self.decay < 0.0
        {
            return Err(crate::error::Error::Config(format!(
                "invalid Adam configuration {self:?}"
            )));
        }
        Ok(())
    }
}

/// One Adam update for one parameter tensor, at (1-based) step `t`.
///
/// m and v are the exponential moment estimates; the update is
/// `theta -= lr_t * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_update_param<F: Real>(param: &mut Param<F>, t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let b1 = real::<F>(cfg.beta1);
    let b2 = real::<F>(cfg.beta2);
    let one = F::one();
    let bc1 = real::<F>(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = real::<F>(1.0 - cfg.beta2.powi(t as i32));
    let lr = real::<F>(cfg.lr / (1.0 + cfg.decay * t as f64));
    let eps = real::<F>(cfg.epsilon);

    if cfg.amsgrad && param.v_max.is_empty() {
        param.v_max = vec![F::zero(); param.len()];
    }

    for i in 0..param.len() {
        let g = param.grad[i];
        param.m[i] = b1 * param.m[i] + (one - b1) * g;
        param.v[i] = b2 * param.v[i] + (one - b2) * g * g;
        let m_hat = param.m[i] / bc1;
        let mut v_hat = param.v[i] / bc2;
        if cfg.amsgrad {
            if v_hat > param.v_max[i] {
                param.v_max[i] = v_hat;
            }
            v_hat = param.v_max[i];
        }
        param.value[i] = param.value[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude_close_to_lr() {
        // After bias correction at t=1, |delta| = lr * |g| / (|g| + eps).
        for &g in &[0.001f64, -0.5, 2.0, -100.0] {
            let mut p = Param::new(vec![1.0f64], vec![1]);
            p.grad = vec![g];
            adam_update_param(&mut p, 1, &AdamConfig::default());
            let delta = (p.value[0] - 1.0).abs();
            assert!(
                (0.000999..=0.001).contains(&delta),
                "g = {g}: |delta| = {delta}"
            );
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = Param::new(vec![0.25f64, -1.5], vec![2]);
        for t in 1..=50 {
            adam_update_param(&mut p, t, &AdamConfig::default());
        }
        assert_eq!(p.value, vec![0.25, -1.5]);
    }

    #[test]
    fn amsgrad_keeps_max_second_moment() {
        let cfg = AdamConfig { amsgrad: true, ..AdamConfig::default() };
        let mut p = Param::new(vec![0.0f64], vec![1]);
        p.grad = vec![10.0];
        adam_update_param(&mut p, 1, &cfg);
        let vmax_after_big = p.v_max[0];
        p.grad = vec![0.001];
        adam_update_param(&mut p, 2, &cfg);
        assert!(p.v_max[0] >= vmax_after_big);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig { lr: 0.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
    }
}
