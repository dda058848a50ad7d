//! Fully connected layer.

use crate::error::{Error, Result};
use crate::nnet::{ForwardCtx, Mode, Param, Real, Tensor4};

/// Dense layer on flattened samples: y = x . W + b, W stored in x out.
#[derive(Debug, Clone)]
pub struct Dense<F: Real> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    pub in_features: usize,
    pub out_features: usize,
    cached_input: Option<Tensor4<F>>,
}

impl<F: Real> Dense<F> {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<F>) -> Self {
        Dense {
            weight: Param::new(weight, vec![in_features, out_features]),
            bias: Param::zeros(vec![out_features]),
            in_features,
            out_features,
            cached_input: None,
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        [input[0], 1, 1, self.out_features]
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        if x.sample_len() != self.in_features {
            return Err(Error::Shape(format!(
                "dense expects {} features per sample, got {}",
                self.in_features,
                x.sample_len()
            )));
        }
        let n = x.batch();
        let mut y = Tensor4::zeros([n, 1, 1, self.out_features]);
        F::gemm(
            n, self.in_features, self.out_features,
            F::one(),
            &x.data, self.in_features as isize, 1,
            &self.weight.value, self.out_features as isize, 1,
            F::zero(),
            &mut y.data,
        );
        for row in y.data.chunks_exact_mut(self.out_features) {
            for (v, b) in row.iter_mut().zip(&self.bias.value) {
                *v += *b;
            }
        }
        if ctx.mode == Mode::Train {
            self.cached_input = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::Numeric("dense backward without cached forward".into()))?;
        let n = x.batch();
        let (fin, fout) = (self.in_features, self.out_features);

        // dW += x^T (fin x n) . dy (n x fout)
        F::gemm(
            fin, n, fout,
            F::one(),
            &x.data, 1, fin as isize,
            &dy.data, fout as isize, 1,
            F::one(),
            &mut self.weight.grad,
        );
        for row in dy.data.chunks_exact(fout) {
            for (acc, &g) in self.bias.grad.iter_mut().zip(row) {
                *acc += g;
            }
        }

        // dx = dy (n x fout) . W^T (fout x fin)
        let mut dx = Tensor4::zeros(x.shape);
        F::gemm(
            n, fout, fin,
            F::one(),
            &dy.data, fout as isize, 1,
            &self.weight.value, 1, fout as isize,
            F::zero(),
            &mut dx.data,
        );
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 inputs, 3 outputs: W = [[1,2,3],[4,5,6]], b = [0.5, 0, -0.5]
        let mut dense = Dense::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        dense.bias.value = vec![0.5, 0.0, -0.5];
        let x = Tensor4::from_vec(vec![1.0, 1.0, 2.0, 0.0], [2, 1, 1, 2]).unwrap();
        let y = dense.forward(&x, &ForwardCtx::infer()).unwrap();
        assert_eq!(y.data, vec![5.5, 7.0, 8.5, 2.5, 4.0, 5.5]);
    }

    #[test]
    fn accepts_spatial_input_of_matching_size() {
        let dense = Dense::<f64>::new(12, 4, vec![0.0; 48]);
        assert_eq!(dense.output_shape([2, 3, 2, 2]), [2, 1, 1, 4]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut dense = Dense::<f64>::new(4, 2, vec![0.0; 8]);
        let x = Tensor4::<f64>::zeros([1, 1, 1, 5]);
        assert!(matches!(dense.forward(&x, &ForwardCtx::infer()), Err(Error::Shape(_))));
    }
}
