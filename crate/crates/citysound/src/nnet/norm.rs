//! Batch normalisation over the channel axis.
//!
//! Training normalises with population statistics of the current batch over
//! (batch, height, width) and maintains running estimates with momentum 0.99;
//! inference uses the running estimates. Variance epsilon defaults to 1e-3.
//! Stat accumulation is done per sample in f64 and combined in sample order,
//! keeping results independent of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnet::{real, ForwardCtx, Mode, Param, Real, Tensor4};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct BatchNorm<F: Real> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<F>>,
}

#[derive(Debug, Clone)]
struct BnCache<F> {
    x_hat: Tensor4<F>,
    inv_std: Vec<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(vec![F::one(); channels], vec![channels]),
            beta: Param::zeros(vec![channels]),
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        let c = self.channels();
        if x.channels() != c {
            return Err(Error::Shape(format!(
                "batch norm over {c} channels got input with {}",
                x.channels()
            )));
        }
        match ctx.mode {
            Mode::Infer => self.forward_infer(x),
            Mode::Train => self.forward_train(x),
        }
    }

    fn forward_infer(&self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        let c = self.channels();
        let eps = real::<F>(self.epsilon);
        let scale: Vec<F> = (0..c)
            .map(|i| self.gamma.value[i] / (self.running_var[i] + eps).sqrt())
            .collect();
        let shift: Vec<F> = (0..c)
            .map(|i| self.beta.value[i] - scale[i] * self.running_mean[i])
            .collect();

        let mut y = x.clone();
        y.data.par_chunks_mut(x.sample_len()).for_each(|y_s| {
            for row in y_s.chunks_exact_mut(c) {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = *v * scale[i] + shift[i];
                }
            }
        });
        Ok(y)
    }

    fn forward_train(&mut self, x: &Tensor4<F>) -> Result<Tensor4<F>> {
        if x.batch() < 2 {
            return Err(Error::BatchSize(
                "batch norm needs a batch of at least 2 in train mode".into(),
            ));
        }
        let c = self.channels();
        let per_channel = (x.batch() * x.height() * x.width()) as f64;

        let zeros = vec![0.0f64; c];
        let sums = self.channel_reduce(x, &zeros, |v, _| v);
        let mean: Vec<f64> = sums.iter().map(|s| s / per_channel).collect();
        let sq = self.channel_reduce(x, &mean, |v, m| (v - m) * (v - m));
        let var: Vec<f64> = sq.iter().map(|s| s / per_channel).collect();

        let inv_std: Vec<F> = var
            .iter()
            .map(|&v| real::<F>(1.0 / (v + self.epsilon).sqrt()))
            .collect();
        let mean_f: Vec<F> = mean.iter().map(|&m| real(m)).collect();

        let mut x_hat = x.clone();
        x_hat.data.par_chunks_mut(x.sample_len()).for_each(|s| {
            for row in s.chunks_exact_mut(c) {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean_f[i]) * inv_std[i];
                }
            }
        });

        let mut y = x_hat.clone();
        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        y.data.par_chunks_mut(x.sample_len()).for_each(|s| {
            for row in s.chunks_exact_mut(c) {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = *v * gamma[i] + beta[i];
                }
            }
        });

        let keep = real::<F>(self.momentum);
        let take = real::<F>(1.0 - self.momentum);
        for i in 0..c {
            self.running_mean[i] = keep * self.running_mean[i] + take * mean_f[i];
            self.running_var[i] = keep * self.running_var[i] + take * real(var[i]);
        }

        self.cache = Some(BnCache { x_hat, inv_std });
        Ok(y)
    }

    /// Per-channel sums of f(value, aux[channel]) computed per sample then
    /// combined in sample order.
    fn channel_reduce(
        &self,
        x: &Tensor4<F>,
        aux: &[f64],
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Vec<f64> {
        let c = self.channels();
        let partials: Vec<Vec<f64>> = (0..x.batch())
            .into_par_iter()
            .map(|s| {
                let mut acc = vec![0.0f64; c];
                for row in x.sample(s).chunks_exact(c) {
                    for (i, &v) in row.iter().enumerate() {
                        acc[i] += f(v.to_f64().unwrap(), aux[i]);
                    }
                }
                acc
            })
            .collect();
        combine(partials, c)
    }

    /// Standard batch-norm backward (train mode).
    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("batch norm backward without cached forward".into()))?;
        let c = self.channels();
        let x_hat = &cache.x_hat;
        let m = (dy.batch() * dy.height() * dy.width()) as f64;

        // d_beta = sum(dy), d_gamma = sum(dy * x_hat), per channel.
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..dy.batch())
            .into_par_iter()
            .map(|s| {
                let mut dbeta = vec![0.0f64; c];
                let mut dgamma = vec![0.0f64; c];
                for (row_dy, row_xh) in dy
                    .sample(s)
                    .chunks_exact(c)
                    .zip(x_hat.sample(s).chunks_exact(c))
                {
                    for i in 0..c {
                        let g = row_dy[i].to_f64().unwrap();
                        dbeta[i] += g;
                        dgamma[i] += g * row_xh[i].to_f64().unwrap();
                    }
                }
                (dbeta, dgamma)
            })
            .collect();

        let mut dbeta = vec![0.0f64; c];
        let mut dgamma = vec![0.0f64; c];
        for (pb, pg) in partials {
            for i in 0..c {
                dbeta[i] += pb[i];
                dgamma[i] += pg[i];
            }
        }
        for i in 0..c {
            self.beta.grad[i] += real(dbeta[i]);
            self.gamma.grad[i] += real(dgamma[i]);
        }

        // dx = gamma * inv_std / m * (m*dy - sum(dy) - x_hat * sum(dy*x_hat))
        let coef: Vec<F> = (0..c)
            .map(|i| self.gamma.value[i] * cache.inv_std[i] * real(1.0 / m))
            .collect();
        let m_f = real::<F>(m);
        let dbeta_f: Vec<F> = dbeta.iter().map(|&v| real(v)).collect();
        let dgamma_f: Vec<F> = dgamma.iter().map(|&v| real(v)).collect();

        let mut dx = dy.clone();
        let sample_len = dy.sample_len();
        dx.data
            .par_chunks_mut(sample_len)
            .enumerate()
            .for_each(|(s, dx_s)| {
                let xh_s = x_hat.sample(s);
                for (row_dx, row_xh) in dx_s.chunks_exact_mut(c).zip(xh_s.chunks_exact(c)) {
                    for i in 0..c {
                        row_dx[i] =
                            coef[i] * (m_f * row_dx[i] - dbeta_f[i] - row_xh[i] * dgamma_f[i]);
                    }
                }
            });
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

fn combine(partials: Vec<Vec<f64>>, c: usize) -> Vec<f64> {
    let mut total = vec![0.0f64; c];
    for p in partials {
        for (a, v) in total.iter_mut().zip(p) {
            *a += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(shape: [usize; 4], scale: f64) -> Tensor4<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|i| scale * ((i as f64 * 0.7311).sin() + 0.3 * (i as f64 * 0.177).cos()))
            .collect();
        Tensor4::from_vec(data, shape).unwrap()
    }

    fn channel_stats(t: &Tensor4<f64>) -> (Vec<f64>, Vec<f64>) {
        let c = t.channels();
        let m = (t.batch() * t.height() * t.width()) as f64;
        let mut mean = vec![0.0; c];
        for row in t.data.chunks_exact(c) {
            for (a, v) in mean.iter_mut().zip(row) {
                *a += v;
            }
        }
        for v in &mut mean {
            *v /= m;
        }
        let mut var = vec![0.0; c];
        for row in t.data.chunks_exact(c) {
            for (i, v) in row.iter().enumerate() {
                var[i] += (v - mean[i]) * (v - mean[i]);
            }
        }
        for v in &mut var {
            *v /= m;
        }
        (mean, var)
    }

    #[test]
    fn train_mode_standardises() {
        let mut bn = BatchNorm::<f64>::new(3);
        bn.epsilon = 1e-12; // tighten for the definitional check
        let x = random_input([4, 5, 6, 3], 2.0);
        let y = bn.forward(&x, &ForwardCtx::train(0)).unwrap();
        let (mean, var) = channel_stats(&y);
        for i in 0..3 {
            assert!(mean[i].abs() < 1e-6, "mean[{i}] = {}", mean[i]);
            assert!((var[i] - 1.0).abs() < 1e-6, "var[{i}] = {}", var[i]);
        }
    }

    #[test]
    fn affine_params_set_mean_and_std() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.epsilon = 1e-12;
        bn.gamma.value = vec![2.0, 2.0];
        bn.beta.value = vec![3.0, 3.0];
        let x = random_input([8, 3, 3, 2], 1.0);
        let y = bn.forward(&x, &ForwardCtx::train(0)).unwrap();
        let (mean, var) = channel_stats(&y);
        for i in 0..2 {
            assert!((mean[i] - 3.0).abs() < 1e-6);
            assert!((var[i].sqrt() - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train() {
        let mut bn = BatchNorm::<f64>::new(2);
        let x = Tensor4::zeros([1, 3, 3, 2]);
        assert!(matches!(
            bn.forward(&x, &ForwardCtx::train(0)),
            Err(Error::BatchSize(_))
        ));
        // inference with batch 1 is fine
        assert!(bn.forward(&x, &ForwardCtx::infer()).is_ok());
    }

    #[test]
    fn infer_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean = vec![2.0];
        bn.running_var = vec![4.0];
        bn.epsilon = 0.0;
        let x = Tensor4::from_vec(vec![4.0], [1, 1, 1, 1]).unwrap();
        let y = bn.forward(&x, &ForwardCtx::infer()).unwrap();
        assert!((y.data[0] - 1.0).abs() < 1e-12); // (4-2)/2
    }
}
