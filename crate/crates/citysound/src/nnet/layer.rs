//! Shape-only layers, activations, the [`LayerSpec`] description type, and
//! the [`Layer`] enum that dispatches over all layer kinds.

use crate::error::{Error, Result};
use crate::nnet::{
    BatchNorm, Conv2d, Dense, Dropout, ForwardCtx, MaxPool2d, Mode, Param, Real, Tensor4,
};

/// Reshape (n, h, w, c) to (n, 1, 1, h*w*c); NHWC data is already contiguous.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    in_shape: Option<[usize; 4]>,
}

impl Flatten {
    pub fn forward<F: Real>(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        if ctx.mode == Mode::Train {
            self.in_shape = Some(x.shape);
        }
        x.reshaped([x.batch(), 1, 1, x.sample_len()])
    }

    pub fn backward<F: Real>(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let shape = self
            .in_shape
            .ok_or_else(|| Error::Numeric("flatten backward without cached forward".into()))?;
        dy.reshaped(shape)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<F> {
    active: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Real> Relu<F> {
    pub fn new() -> Self {
        Relu { active: None, _marker: std::marker::PhantomData }
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        let mut y = x.clone();
        for v in &mut y.data {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
        if ctx.mode == Mode::Train {
            self.active = Some(x.data.iter().map(|&v| v > F::zero()).collect());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let active = self
            .active
            .as_ref()
            .ok_or_else(|| Error::Numeric("relu backward without cached forward".into()))?;
        let mut dx = dy.clone();
        for (g, &a) in dx.data.iter_mut().zip(active) {
            if !a {
                *g = F::zero();
            }
        }
        Ok(dx)
    }
}

/// Row softmax over the channel axis, computed with max subtraction.
#[derive(Debug, Clone, Default)]
pub struct Softmax<F> {
    output: Option<Tensor4<F>>,
}

impl<F: Real> Softmax<F> {
    pub fn new() -> Self {
        Softmax { output: None }
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        let c = x.channels();
        let mut y = x.clone();
        for row in y.data.chunks_exact_mut(c) {
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        if ctx.mode == Mode::Train {
            self.output = Some(y.clone());
        }
        Ok(y)
    }

    /// dx_i = p_i * (dy_i - sum_j dy_j p_j), per row.
    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let p = self
            .output
            .as_ref()
            .ok_or_else(|| Error::Numeric("softmax backward without cached forward".into()))?;
        let c = p.channels();
        let mut dx = dy.clone();
        for (row_dx, row_p) in dx.data.chunks_exact_mut(c).zip(p.data.chunks_exact(c)) {
            let dot = row_dx
                .iter()
                .zip(row_p)
                .map(|(&g, &pi)| g * pi)
                .fold(F::zero(), |a, b| a + b);
            for (g, &pi) in row_dx.iter_mut().zip(row_p) {
                *g = pi * (*g - dot);
            }
        }
        Ok(dx)
    }
}

/// Elementwise logistic activation.
#[derive(Debug, Clone, Default)]
pub struct Sigmoid<F> {
    output: Option<Tensor4<F>>,
}

impl<F: Real> Sigmoid<F> {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }

    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        let mut y = x.clone();
        for v in &mut y.data {
            // tail-stable logistic
            *v = if *v >= F::zero() {
                F::one() / (F::one() + (-*v).exp())
            } else {
                let e = v.exp();
                e / (F::one() + e)
            };
        }
        if ctx.mode == Mode::Train {
            self.output = Some(y.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::Numeric("sigmoid backward without cached forward".into()))?;
        let mut dx = dy.clone();
        for (g, &o) in dx.data.iter_mut().zip(&y.data) {
            *g *= o * (F::one() - o);
        }
        Ok(dx)
    }
}

/// Declarative layer description used by model builders and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d { filters: usize, kernel: (usize, usize), stride: usize },
    BatchNorm,
    MaxPool2d { pool: (usize, usize), stride: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Relu,
    Softmax,
    Sigmoid,
}

impl LayerSpec {
    /// Propagate a (h, w, c) shape through this layer.
    pub fn output_shape(&self, input: [usize; 3]) -> [usize; 3] {
        use crate::nnet::conv::same_padding;
        let [h, w, c] = input;
        match *self {
            LayerSpec::Conv2d { filters, kernel, stride } => {
                [same_padding(h, stride, kernel.0).0, same_padding(w, stride, kernel.1).0, filters]
            }
            LayerSpec::MaxPool2d { pool, stride } => {
                [same_padding(h, stride, pool.0).0, same_padding(w, stride, pool.1).0, c]
            }
            LayerSpec::Flatten => [1, 1, h * w * c],
            LayerSpec::Dense { units } => [1, 1, units],
            _ => input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d { filters, kernel, stride } => {
                if filters == 0 || kernel.0 == 0 || kernel.1 == 0 || stride == 0 {
                    return Err(Error::Config(format!("invalid conv spec {self:?}")));
                }
            }
            LayerSpec::MaxPool2d { pool, stride } => {
                if pool.0 == 0 || pool.1 == 0 || stride == 0 {
                    return Err(Error::Config(format!("invalid pool spec {self:?}")));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("invalid dropout rate {rate}")));
                }
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::Config("dense layer needs at least one unit".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A concrete layer instance.
#[derive(Debug, Clone)]
pub enum Layer<F: Real> {
    Conv2d(Conv2d<F>),
    BatchNorm(BatchNorm<F>),
    MaxPool2d(MaxPool2d),
    Dropout(Dropout<F>),
    Flatten(Flatten),
    Dense(Dense<F>),
    Relu(Relu<F>),
    Softmax(Softmax<F>),
    Sigmoid(Sigmoid<F>),
}

impl<F: Real> Layer<F> {
    pub fn forward(&mut self, x: &Tensor4<F>, ctx: &ForwardCtx) -> Result<Tensor4<F>> {
        match self {
            Layer::Conv2d(l) => l.forward(x, ctx),
            Layer::BatchNorm(l) => l.forward(x, ctx),
            Layer::MaxPool2d(l) => l.forward(x, ctx),
            Layer::Dropout(l) => l.forward(x, ctx),
            Layer::Flatten(l) => l.forward(x, ctx),
            Layer::Dense(l) => l.forward(x, ctx),
            Layer::Relu(l) => l.forward(x, ctx),
            Layer::Softmax(l) => l.forward(x, ctx),
            Layer::Sigmoid(l) => l.forward(x, ctx),
        }
    }

    pub fn backward(&mut self, dy: &Tensor4<F>) -> Result<Tensor4<F>> {
        match self {
            Layer::Conv2d(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
            Layer::MaxPool2d(l) => l.backward(dy),
            Layer::Dropout(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Dense(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Softmax(l) => l.backward(dy),
            Layer::Sigmoid(l) => l.backward(dy),
        }
    }

    /// Learnable parameters of this layer, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    /// The descriptive spec this layer was built from.
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => LayerSpec::Conv2d {
                filters: l.out_channels,
                kernel: l.kernel,
                stride: l.stride,
            },
            Layer::BatchNorm(_) => LayerSpec::BatchNorm,
            Layer::MaxPool2d(l) => LayerSpec::MaxPool2d { pool: l.pool, stride: l.stride },
            Layer::Dropout(l) => LayerSpec::Dropout { rate: l.rate },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Dense(l) => LayerSpec::Dense { units: l.out_features },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Softmax(_) => LayerSpec::Softmax,
            Layer::Sigmoid(_) => LayerSpec::Sigmoid,
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.clear_cache(),
            Layer::BatchNorm(l) => l.clear_cache(),
            Layer::MaxPool2d(l) => l.clear_cache(),
            Layer::Dropout(l) => l.clear_cache(),
            Layer::Flatten(l) => l.in_shape = None,
            Layer::Dense(l) => l.clear_cache(),
            Layer::Relu(l) => l.active = None,
            Layer::Softmax(l) => l.output = None,
            Layer::Sigmoid(l) => l.output = None,
        }
    }
}
