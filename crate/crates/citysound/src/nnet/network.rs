//! Layer-stack container: a shared trunk feeding one or more output heads.
//!
//! Single-task models are the one-head case. Layer parameters are
//! Glorot-initialised from per-position seeds derived from the network seed,
//! so a trunk shared between two architectures (and any heads they have in
//! common, in order) starts from identical weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nnet::{
    adam_update_param, mix_seed, real, AdamConfig, BatchNorm, Conv2d, Dense, Dropout, Flatten,
    ForwardCtx, Layer, LayerSpec, MaxPool2d, Mode, Param, Real, Relu, Sigmoid, Softmax, Tensor4,
};

#[derive(Debug, Clone)]
pub struct Network<F: Real> {
    pub trunk: Vec<Layer<F>>,
    pub heads: Vec<Vec<Layer<F>>>,
    /// Per-sample input shape (height, width, channels).
    pub input_shape: [usize; 3],
    /// Completed optimisation steps.
    pub step: u64,
    pub seed: u64,
}

impl<F: Real> Network<F> {
    /// Instantiate a network from layer specs.
    pub fn from_specs(
        input_shape: [usize; 3],
        trunk: &[LayerSpec],
        heads: &[Vec<LayerSpec>],
        seed: u64,
    ) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Config("a network needs at least one head".into()));
        }
        if input_shape.contains(&0) {
            return Err(Error::Shape(format!("input shape {input_shape:?} has a zero extent")));
        }

        let mut position = 0u64;
        let mut shape = input_shape;
        let mut trunk_layers = Vec::with_capacity(trunk.len());
        for spec in trunk {
            trunk_layers.push(build_layer(spec, &mut shape, seed, &mut position)?);
        }
        let branch_shape = shape;

        let mut head_stacks = Vec::with_capacity(heads.len());
        for head in heads {
            let mut shape = branch_shape;
            let mut layers = Vec::with_capacity(head.len());
            for spec in head {
                layers.push(build_layer(spec, &mut shape, seed, &mut position)?);
            }
            head_stacks.push(layers);
        }

        Ok(Network {
            trunk: trunk_layers,
            heads: head_stacks,
            input_shape,
            step: 0,
            seed,
        })
    }

    /// Per-sample output shape of each head.
    pub fn output_shapes(&self) -> Vec<[usize; 3]> {
        let mut shape = self.input_shape;
        for layer in &self.trunk {
            shape = layer.spec().output_shape(shape);
        }
        self.heads
            .iter()
            .map(|head| {
                let mut s = shape;
                for layer in head {
                    s = layer.spec().output_shape(s);
                }
                s
            })
            .collect()
    }

    /// Forward pass; returns one output tensor per head.
    pub fn forward(&mut self, x: &Tensor4<F>, mode: Mode) -> Result<Vec<Tensor4<F>>> {
        let [h, w, c] = self.input_shape;
        if [x.height(), x.width(), x.channels()] != [h, w, c] {
            return Err(Error::Shape(format!(
                "network expects input {:?} per sample, got {:?}",
                self.input_shape,
                [x.height(), x.width(), x.channels()]
            )));
        }
        let ctx = ForwardCtx { mode, step: self.step };
        let mut cur = x.clone();
        for layer in &mut self.trunk {
            cur = layer.forward(&cur, &ctx)?;
        }
        let mut outputs = Vec::with_capacity(self.heads.len());
        for head in &mut self.heads {
            let mut h = cur.clone();
            for layer in head {
                h = layer.forward(&h, &ctx)?;
            }
            outputs.push(h);
        }
        Ok(outputs)
    }

    /// Backward pass from per-head output gradients (e.g. loss gradients,
    /// already weighted). Head contributions to the trunk gradient are summed
    /// in head order.
    pub fn backward(&mut self, head_grads: &[Tensor4<F>]) -> Result<()> {
        if head_grads.len() != self.heads.len() {
            return Err(Error::Shape(format!(
                "{} head gradients for {} heads",
                head_grads.len(),
                self.heads.len()
            )));
        }
        let mut trunk_grad: Option<Tensor4<F>> = None;
        for (head, grad) in self.heads.iter_mut().zip(head_grads) {
            let mut g = grad.clone();
            for layer in head.iter_mut().rev() {
                g = layer.backward(&g)?;
            }
            trunk_grad = Some(match trunk_grad {
                None => g,
                Some(mut acc) => {
                    for (a, b) in acc.data.iter_mut().zip(&g.data) {
                        *a += *b;
                    }
                    acc
                }
            });
        }
        let mut g = trunk_grad.expect("at least one head");
        for layer in self.trunk.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// One Adam step over every parameter. Fails (without touching any
    /// parameter) if any gradient is non-finite.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        cfg.validate()?;
        let all_finite = self.params().iter().all(|p| p.grads_finite());
        if !all_finite {
            return Err(Error::Numeric("non-finite gradient; step aborted".into()));
        }
        self.step += 1;
        let t = self.step;
        for p in self.params_mut() {
            adam_update_param(p, t, cfg);
        }
        Ok(())
    }

    /// All layers, trunk first, then heads in order.
    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<F>> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<F>> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        for layer in self.trunk.iter_mut().chain(self.heads.iter_mut().flatten()) {
            out.extend(layer.params_mut());
        }
        out
    }

    pub fn params(&self) -> Vec<&Param<F>> {
        let mut out = Vec::new();
        for layer in self.layers() {
            out.extend(layer.params());
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Copy all parameter values into one flat vector (gradient-check use).
    pub fn params_flat(&self) -> Vec<F> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[F]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        debug_assert_eq!(off, flat.len());
    }

    pub fn grads_flat(&self) -> Vec<F> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    /// Drop every cached activation (after training, before checkpointing).
    pub fn clear_caches(&mut self) {
        for layer in self.layers_mut() {
            layer.clear_cache();
        }
    }
}

/// Instantiate one layer at the running shape, advancing shape and position.
fn build_layer<F: Real>(
    spec: &LayerSpec,
    shape: &mut [usize; 3],
    network_seed: u64,
    position: &mut u64,
) -> Result<Layer<F>> {
    spec.validate()?;
    let layer_seed = mix_seed(network_seed, *position);
    *position += 1;

    let layer = match *spec {
        LayerSpec::Conv2d { filters, kernel, stride } => {
            let cin = shape[2];
            let fan_in = kernel.0 * kernel.1 * cin;
            let fan_out = kernel.0 * kernel.1 * filters;
            let weight = glorot_uniform::<F>(fan_in * filters, fan_in, fan_out, layer_seed);
            Layer::Conv2d(Conv2d::new(kernel, cin, filters, stride, weight))
        }
        LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(shape[2])),
        LayerSpec::MaxPool2d { pool, stride } => Layer::MaxPool2d(MaxPool2d::new(pool, stride)),
        LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate, layer_seed)?),
        LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
        LayerSpec::Dense { units } => {
            let fin = shape[0] * shape[1] * shape[2];
            let weight = glorot_uniform::<F>(fin * units, fin, units, layer_seed);
            Layer::Dense(Dense::new(fin, units, weight))
        }
        LayerSpec::Relu => Layer::Relu(Relu::new()),
        LayerSpec::Softmax => Layer::Softmax(Softmax::new()),
        LayerSpec::Sigmoid => Layer::Sigmoid(Sigmoid::new()),
    };

    *shape = spec.output_shape(*shape);
    if shape.contains(&0) {
        return Err(Error::Shape(format!("layer {spec:?} produced a zero extent {shape:?}")));
    }
    Ok(layer)
}

/// Glorot-uniform draws in f64, narrowed to the working scalar.
fn glorot_uniform<F: Real>(n: usize, fan_in: usize, fan_out: usize, seed: u64) -> Vec<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| real(rng.gen_range(-limit..limit))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_specs() -> (Vec<LayerSpec>, Vec<Vec<LayerSpec>>) {
        let trunk = vec![
            LayerSpec::Conv2d { filters: 4, kernel: (3, 3), stride: 1 },
            LayerSpec::MaxPool2d { pool: (2, 2), stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
        ];
        let heads = vec![vec![LayerSpec::Dense { units: 3 }, LayerSpec::Softmax]];
        (trunk, heads)
    }

    #[test]
    fn builds_and_propagates_shapes() {
        let (trunk, heads) = tiny_specs();
        let net = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 1).unwrap();
        assert_eq!(net.output_shapes(), vec![[1, 1, 3]]);
        // conv(3x3x1x4)+b4, dense(36x8)+b8, dense(8x3)+b3
        assert_eq!(net.n_parameters(), 36 + 4 + 36 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn forward_rows_are_distributions() {
        let (trunk, heads) = tiny_specs();
        let mut net = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 3).unwrap();
        let x = Tensor4::from_vec((0..72).map(|i| (i as f64 * 0.37).sin()).collect(), [2, 6, 6, 1])
            .unwrap();
        let out = net.forward(&x, Mode::Infer).unwrap();
        assert_eq!(out.len(), 1);
        for row in out[0].data.chunks_exact(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let (trunk, heads) = tiny_specs();
        let a = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 11).unwrap();
        let b = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 11).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 12).unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn shared_trunk_same_init_across_head_layouts() {
        let (trunk, heads) = tiny_specs();
        let single = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 5).unwrap();
        let mut two_heads = heads.clone();
        two_heads.push(vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax]);
        let multi = Network::<f64>::from_specs([6, 6, 1], &trunk, &two_heads, 5).unwrap();
        // trunk + first head identical; second head extra
        let n_shared = single.params_flat().len();
        assert_eq!(&multi.params_flat()[..n_shared], &single.params_flat()[..]);
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let (trunk, heads) = tiny_specs();
        let mut net = Network::<f64>::from_specs([6, 6, 1], &trunk, &heads, 1).unwrap();
        let before = net.params_flat();
        net.params_mut()[0].grad[0] = f64::NAN;
        let err = net.adam_step(&AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(net.params_flat(), before);
        assert_eq!(net.step, 0);
    }
}
