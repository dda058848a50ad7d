//! A small dense/convolutional network engine with manual backpropagation.
//!
//! Everything is generic over [`Real`] so gradient checks run in f64 while
//! training runs in f32 (the checkpoint precision). Heavy lifting goes
//! through GEMM; batch work is parallelised per sample with reductions
//! combined in a fixed order, so results are independent of thread count.

mod adam;
mod conv;
mod dense;
mod dropout;
mod layer;
mod loss;
mod network;
mod norm;
mod pool;
mod tensor;

pub use adam::{adam_update_param, AdamConfig};
pub use conv::{same_padding, Conv2d};
pub use dense::Dense;
pub use dropout::Dropout;
pub use layer::{Flatten, Layer, LayerSpec, Relu, Sigmoid, Softmax};
pub use loss::{binary_cross_entropy, categorical_cross_entropy, PROB_CLIP};
pub use network::Network;
pub use norm::BatchNorm;
pub use pool::MaxPool2d;
pub use tensor::Tensor4;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type the engine runs on: f32 or f64.
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// C += alpha * A(m x k) * B(k x n) + beta * C, all row-major with the
    /// given row strides (column stride 1).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

impl Real for f32 {
    #[inline]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        debug_assert!(c.len() >= m * n);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), rsa, csa,
                b.as_ptr(), rsb, csb,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Real for f64 {
    #[inline]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        debug_assert!(c.len() >= m * n);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), rsa, csa,
                b.as_ptr(), rsb, csb,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

/// Shorthand for converting plain f64 constants into the working scalar.
#[inline]
pub fn real<F: Real>(x: f64) -> F {
    F::from(x).expect("f64 constant representable in Real type")
}

/// Tolerance widening for the 32-bit training path: x10 over the 64-bit
/// tolerance, per the documented precision policy.
#[inline]
pub(crate) fn row_sum_tolerance<F: Real>() -> F {
    if std::mem::size_of::<F>() == 4 {
        real(1e-5)
    } else {
        real(1e-6)
    }
}

/// Execution mode for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-pass context handed to every layer.
#[derive(Debug, Clone, Copy)]
pub struct ForwardCtx {
    pub mode: Mode,
    /// Global optimisation step; dropout masks are a pure function of
    /// (layer seed, step), so replaying a step replays its masks.
    pub step: u64,
}

impl ForwardCtx {
    pub fn train(step: u64) -> Self {
        ForwardCtx { mode: Mode::Train, step }
    }

    pub fn infer() -> Self {
        ForwardCtx { mode: Mode::Infer, step: 0 }
    }
}

/// One learnable tensor with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<F: Real> {
    pub value: Vec<F>,
    pub grad: Vec<F>,
    pub m: Vec<F>,
    pub v: Vec<F>,
    /// AMSGrad running maximum of the bias-corrected second moment;
    /// allocated on first use.
    pub v_max: Vec<F>,
    pub shape: Vec<usize>,
}

impl<F: Real> Param<F> {
    pub fn new(value: Vec<F>, shape: Vec<usize>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Param {
            value,
            grad: vec![F::zero(); n],
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
            v_max: Vec::new(),
            shape,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(vec![F::zero(); n], shape)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = F::zero();
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.grad.iter().all(|g| g.is_finite())
    }
}

/// Deterministic seed mixing (splitmix64 over a combined word).
pub(crate) fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
