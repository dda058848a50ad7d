//! 2-D convolution (cross-correlation) with zero same-padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nnet::{ForwardCtx, Mode, Param, Real, Tensor4};

/// Same-padding arithmetic: output extent and leading pad for one axis.
///
/// `out = ceil(in / stride)`, `total_pad = max((out-1)*stride + window - in, 0)`,
/// `pad_before = total_pad / 2`.
pub fn same_padding(input: usize, stride: usize, window: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let needed = (out - 1) * stride + window;
    let total = needed.saturating_sub(input);
    (out, total / 2)
}

/// Convolution layer. Weights are stored `[kh][kw][cin][cout]` so the
/// flattened kernel axis lines up with im2col patch rows.
#[derive(Debug, Clone)]
pub struct Conv2d<F: Real> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    cached_input: Option<Tensor4<F>>,
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        weight: Vec<F>,
    ) -> Self {
        let shape = vec![kernel.0, kernel.1, in_channels, out_channels];
        Conv2d {
            weight: Param::new(weight, shape),
            bias: Param::zeros(vec![out_channels]),
            kernel,
            in_channels,
            out_channels,
            stride,
            cached_input: None,
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        let (oh, _) = same_padding(input[1], self.stride, self.kernel.0);
        let (ow, _) = same_padding(input[2], self.stride, self.kernel.1);
        [input[0], oh, ow, self.out_channels]
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let out_shape = self.output_shape(x.shape);
        let geo = Geometry::of(x.shape, self.kernel, self.stride);
        let (p, k) = (geo.positions, geo.patch_len);

        let mut y = Tensor4::zeros(out_shape);
        let cout = self.out_channels;
        let weight = &self.weight.value;
        let bias = &self.bias.value;

        y.data
            .par_chunks_mut(p * cout)
            .enumerate()
            .for_each(|(s, y_s)| {
                let mut col = vec![F::zero(); p * k];
                geo.im2col(x.sample(s), &mut col);
                F::gemm(
                    p, k, cout,
                    F::one(),
                    &col, k as isize, 1,
                    weight, cout as isize, 1,
                    F::zero(),
                    y_s,
                );
                for row in y_s.chunks_exact_mut(cout) {
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += *b;
                    }
                }
            });

        if ctx.mode == Mode::Train {
            self.cached_input = Some(x.clone());
        }
        Ok(y)
    }

    /// Backward pass: accumulates weight/bias gradients, returns dL/dinput.
    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::Numeric("conv backward without cached forward".into()))?;
        let geo = Geometry::of(x.shape, self.kernel, self.stride);
        let (p, k) = (geo.positions, geo.patch_len);
        let cout = self.out_channels;

        let mut dx = Tensor4::zeros(x.shape);
        let weight = &self.weight.value;

        // Per-sample partials combined in sample order afterwards, so the
        // result is independent of how rayon schedules the batch.
        let partials: Vec<(Vec<F>, Vec<F>)> = dx
            .data
            .par_chunks_mut(geo.sample_len)
            .enumerate()
            .map(|(s, dx_s)| {
                let dy_s = dy.sample(s);
                let mut col = vec![F::zero(); p * k];
                geo.im2col(x.sample(s), &mut col);

                // dW_s = col^T (k x p) . dy_s (p x cout)
                let mut dw = vec![F::zero(); k * cout];
                F::gemm(
                    k, p, cout,
                    F::one(),
                    &col, 1, k as isize,
                    dy_s, cout as isize, 1,
                    F::zero(),
                    &mut dw,
                );

                let mut db = vec![F::zero(); cout];
                for row in dy_s.chunks_exact(cout) {
                    for (acc, &g) in db.iter_mut().zip(row) {
                        *acc += g;
                    }
                }

                // dcol = dy_s (p x cout) . W^T (cout x k), scattered back.
                let mut dcol = vec![F::zero(); p * k];
                F::gemm(
                    p, cout, k,
                    F::one(),
                    dy_s, cout as isize, 1,
                    weight, 1, cout as isize,
                    F::zero(),
                    &mut dcol,
                );
                geo.col2im(&dcol, dx_s);
                (dw, db)
            })
            .collect();

        for (dw, db) in partials {
            for (acc, g) in self.weight.grad.iter_mut().zip(dw) {
                *acc += g;
            }
            for (acc, g) in self.bias.grad.iter_mut().zip(db) {
                *acc += g;
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

/// Precomputed patch geometry for one input shape.
struct Geometry {
    in_h: usize,
    in_w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    out_w: usize,
    positions: usize,
    patch_len: usize,
    sample_len: usize,
}

impl Geometry {
    fn of(shape: [usize; 4], kernel: (usize, usize), stride: usize) -> Self {
        let (out_h, pad_h) = same_padding(shape[1], stride, kernel.0);
        let (out_w, pad_w) = same_padding(shape[2], stride, kernel.1);
        Geometry {
            in_h: shape[1],
            in_w: shape[2],
            cin: shape[3],
            kh: kernel.0,
            kw: kernel.1,
            stride,
            pad_h,
            pad_w,
            out_w,
            positions: out_h * out_w,
            patch_len: kernel.0 * kernel.1 * shape[3],
            sample_len: shape[1] * shape[2] * shape[3],
        }
    }

    /// Fill `col` (positions x patch_len, pre-zeroed) from one sample.
    fn im2col<F: Real>(&self, x_s: &[F], col: &mut [F]) {
        for pos in 0..self.positions {
            let oy = pos / self.out_w;
            let ox = pos % self.out_w;
            let iy0 = (oy * self.stride) as isize - self.pad_h as isize;
            let ix0 = (ox * self.stride) as isize - self.pad_w as isize;
            let row = &mut col[pos * self.patch_len..(pos + 1) * self.patch_len];
            for ky in 0..self.kh {
                let iy = iy0 + ky as isize;
                if iy < 0 || iy >= self.in_h as isize {
                    continue;
                }
                for kx in 0..self.kw {
                    let ix = ix0 + kx as isize;
                    if ix < 0 || ix >= self.in_w as isize {
                        continue;
                    }
                    let src = ((iy as usize * self.in_w) + ix as usize) * self.cin;
                    let dst = (ky * self.kw + kx) * self.cin;
                    row[dst..dst + self.cin].copy_from_slice(&x_s[src..src + self.cin]);
                }
            }
        }
    }

    /// Scatter-add a column-gradient matrix back onto one input sample.
    fn col2im<F: Real>(&self, dcol: &[F], dx_s: &mut [F]) {
        for pos in 0..self.positions {
            let oy = pos / self.out_w;
            let ox = pos % self.out_w;
            let iy0 = (oy * self.stride) as isize - self.pad_h as isize;
            let ix0 = (ox * self.stride) as isize - self.pad_w as isize;
            let row = &dcol[pos * self.patch_len..(pos + 1) * self.patch_len];
            for ky in 0..self.kh {
                let iy = iy0 + ky as isize;
                if iy < 0 || iy >= self.in_h as isize {
                    continue;
                }
                for kx in 0..self.kw {
                    let ix = ix0 + kx as isize;
                    if ix < 0 || ix >= self.in_w as isize {
                        continue;
                    }
                    let dst = ((iy as usize * self.in_w) + ix as usize) * self.cin;
                    let src = (ky * self.kw + kx) * self.cin;
                    for c in 0..self.cin {
                        dx_s[dst + c] += row[src + c];
                    }
                }
            }
        }
    }
}
