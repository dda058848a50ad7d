//! Inverted dropout.
//!
//! Surviving units are scaled by 1/(1-rate) at train time so inference is the
//! identity. The mask is a pure function of (layer seed, step): replaying a
//! step replays its mask, and masks are generated on the calling thread so
//! results do not depend on parallel scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnet::{mix_seed, real, ForwardCtx, Mode, Real, Tensor4};

#[derive(Debug, Clone)]
pub struct Dropout<F: Real> {
    pub rate: f64,
    pub seed: u64,
    mask: Option<Vec<F>>,
}

impl<F: Real> Dropout<F> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} must be in [0, 1)")));
        }
        Ok(Dropout { rate, seed, mask: None })
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        if ctx.mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = real::<F>(1.0 / keep);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, ctx.step));
        let mask: Vec<F> = (0..x.data.len())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { F::zero() })
            .collect();

        let mut y = x.clone();
        let chunk = x.sample_len();
        y.data
            .par_chunks_mut(chunk)
            .zip(mask.par_chunks(chunk))
            .for_each(|(y_s, m_s)| {
                for (v, m) in y_s.iter_mut().zip(m_s) {
                    *v *= *m;
                }
            });
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        match &self.mask {
            None => Ok(dy.clone()),
            Some(mask) => {
                let mut dx = dy.clone();
                for (g, m) in dx.data.iter_mut().zip(mask) {
                    *g *= *m;
                }
                Ok(dx)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
