//! Dense rank-4 tensor in NHWC layout.

use crate::error::{Error, Result};
use crate::nnet::Real;

/// (batch, height, width, channels) tensor, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F> {
    pub data: Vec<F>,
    pub shape: [usize; 4],
}

impl<F: Real> Tensor4<F> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor4 { data: vec![F::zero(); shape.iter().product()], shape }
    }

    pub fn from_vec(data: Vec<F>, shape: [usize; 4]) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} values cannot fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor4 { data, shape })
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    /// Elements per sample.
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn sample(&self, b: usize) -> &[F] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn sample_mut(&mut self, b: usize) -> &mut [F] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> F {
        let [_, h, w, ch] = self.shape;
        debug_assert!(y < h && x < w && c < ch);
        self.data[((b * h + y) * w + x) * ch + c]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, y: usize, x: usize, c: usize) -> &mut F {
        let [_, h, w, ch] = self.shape;
        debug_assert!(y < h && x < w && c < ch);
        &mut self.data[((b * h + y) * w + x) * ch + c]
    }

    /// Same data, new shape (element count must match).
    pub fn reshaped(&self, shape: [usize; 4]) -> Result<Self> {
        Self::from_vec(self.data.clone(), shape)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), F::max)
    }
}
