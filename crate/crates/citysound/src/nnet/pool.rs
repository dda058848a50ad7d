//! Max pooling with same padding.
//!
//! Padding positions are treated as -inf, i.e. the max runs over the window
//! cells that land on the input. The backward pass routes each output
//! gradient to the first (row-major) maximal input element of its window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnet::conv::same_padding;
use crate::nnet::{ForwardCtx, Mode, Real, Tensor4};

#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub pool: (usize, usize),
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    in_shape: [usize; 4],
    /// Per output element, the linear index of its argmax within the sample.
    argmax: Vec<u32>,
}

impl MaxPool2d {
    pub fn new(pool: (usize, usize), stride: usize) -> Self {
        MaxPool2d { pool, stride, cache: None }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        let (oh, _) = same_padding(input[1], self.stride, self.pool.0);
        let (ow, _) = same_padding(input[2], self.stride, self.pool.1);
        [input[0], oh, ow, input[3]]
    }

    pub fn forward<F: Real>(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        if self.stride == 0 {
            return Err(Error::Config("pool stride must be >= 1".into()));
        }
        let [_, in_h, in_w, c] = x.shape;
        let (out_h, pad_h) = same_padding(in_h, self.stride, self.pool.0);
        let (out_w, pad_w) = same_padding(in_w, self.stride, self.pool.1);
        let out_shape = [x.batch(), out_h, out_w, c];
        let out_sample = out_h * out_w * c;

        let mut y = Tensor4::zeros(out_shape);
        let mut argmax = vec![0u32; x.batch() * out_sample];
        let (ph, pw, stride) = (self.pool.0, self.pool.1, self.stride);

        y.data
            .par_chunks_mut(out_sample)
            .zip(argmax.par_chunks_mut(out_sample))
            .enumerate()
            .for_each(|(s, (y_s, am_s))| {
                let x_s = x.sample(s);
                for oy in 0..out_h {
                    let iy0 = (oy * stride) as isize - pad_h as isize;
                    for ox in 0..out_w {
                        let ix0 = (ox * stride) as isize - pad_w as isize;
                        for ch in 0..c {
                            let mut best = F::neg_infinity();
                            let mut best_idx = 0u32;
                            for ky in 0..ph {
                                let iy = iy0 + ky as isize;
                                if iy < 0 || iy >= in_h as isize {
                                    continue;
                                }
                                for kx in 0..pw {
                                    let ix = ix0 + kx as isize;
                                    if ix < 0 || ix >= in_w as isize {
                                        continue;
                                    }
                                    let idx = ((iy as usize * in_w) + ix as usize) * c + ch;
                                    if x_s[idx] > best {
                                        best = x_s[idx];
                                        best_idx = idx as u32;
                                    }
                                }
                            }
                            let o = (oy * out_w + ox) * c + ch;
                            y_s[o] = best;
                            am_s[o] = best_idx;
                        }
                    }
                }
            });

        if ctx.mode == Mode::Train {
            self.cache = Some(PoolCache { in_shape: x.shape, argmax });
        }
        Ok(y)
    }

    pub fn backward<F: Real>(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("max pool backward without cached forward".into()))?;
        let mut dx = Tensor4::zeros(cache.in_shape);
        let out_sample = dy.sample_len();
        let in_sample = dx.sample_len();

        dx.data
            .par_chunks_mut(in_sample)
            .enumerate()
            .for_each(|(s, dx_s)| {
                let dy_s = dy.sample(s);
                let am_s = &cache.argmax[s * out_sample..(s + 1) * out_sample];
                for (g, &idx) in dy_s.iter().zip(am_s) {
                    dx_s[idx as usize] += *g;
                }
            });
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
