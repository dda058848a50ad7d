//! Shared test oracles, all independent of the implementation paths they
//! check: a quadratic-time DFT spectrogram, a central finite-difference
//! harness, window-enumeration padding arithmetic, and a scalar Adam
//! simulator.

#![allow(dead_code)]

use citysound::nnet::{ForwardCtx, Layer, Tensor4};

/// Deterministic xorshift stream for test data, independent of the crate's
/// RNG choices.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.max(1).wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

// ---------------------------------------------------------------------------
// naive DFT spectrogram oracle
// ---------------------------------------------------------------------------

/// O(n^2) one-sided STFT magnitude, with its own centering, reflect padding,
/// and periodic Hann window.
pub fn naive_stft_magnitude(samples: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    assert!(!samples.is_empty());
    let n_frames = 1 + samples.len() / hop;
    let n_bins = n_fft / 2 + 1;
    let window: Vec<f64> = (0..n_fft)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n_fft as f64).cos())
        .collect();

    let reflect = |idx: isize| -> f64 {
        let len = samples.len() as isize;
        if len == 1 {
            return samples[0];
        }
        let period = 2 * (len - 1);
        let mut i = idx.rem_euclid(period);
        if i >= len {
            i = period - i;
        }
        samples[i as usize]
    };

    (0..n_frames)
        .map(|t| {
            let start = (t * hop) as isize - (n_fft / 2) as isize;
            let frame: Vec<f64> = (0..n_fft)
                .map(|i| reflect(start + i as isize) * window[i])
                .collect();
            (0..n_bins)
                .map(|k| {
                    let (mut re, mut im) = (0.0f64, 0.0f64);
                    for (n, &x) in frame.iter().enumerate() {
                        let phi = -std::f64::consts::TAU * (k * n) as f64 / n_fft as f64;
                        re += x * phi.cos();
                        im += x * phi.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Magnitude of the plain length-n DFT at every bin (for peak location).
pub fn naive_dft_peak_bin(samples: &[f64]) -> usize {
    let n = samples.len();
    let n_bins = n / 2 + 1;
    let mut best = (0usize, -1.0f64);
    for k in 0..n_bins {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (i, &x) in samples.iter().enumerate() {
            let phi = -std::f64::consts::TAU * (k as f64 * i as f64) / n as f64;
            re += x * phi.cos();
            im += x * phi.sin();
        }
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (k, mag);
        }
    }
    best.0
}

// ---------------------------------------------------------------------------
// same-padding enumeration oracle
// ---------------------------------------------------------------------------

/// Output extent of same padding by direct enumeration: one output per
/// window anchor p = 0, stride, 2*stride, ... that still starts inside the
/// input.
pub fn same_padding_output_by_enumeration(input: usize, stride: usize) -> usize {
    (0..).take_while(|p| p * stride < input).count()
}

// ---------------------------------------------------------------------------
// scalar Adam oracle
// ---------------------------------------------------------------------------

/// Textbook Adam on one scalar parameter, driven by a gradient callback.
pub struct ScalarAdam {
    pub w: f64,
    m: f64,
    v: f64,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl ScalarAdam {
    pub fn new(w0: f64, lr: f64, epsilon: f64) -> Self {
        ScalarAdam { w: w0, m: 0.0, v: 0.0, t: 0, lr, beta1: 0.9, beta2: 0.999, epsilon }
    }

    pub fn step(&mut self, grad: f64) {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.t as i32));
        self.w -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
    }
}

// ---------------------------------------------------------------------------
// finite-difference gradient harness
// ---------------------------------------------------------------------------

pub const FD_DELTA: f64 = 1e-3;
pub const FD_REL_TOL: f64 = 1e-4;

/// Maximum coordinate deviation between analytic and finite-difference
/// gradients, relative to the gradient's own scale.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

/// Check one layer: flatten (params, input) into one coordinate vector, take
/// the loss `sum(r * forward(x))` with fixed random weights r, and compare
/// the analytic backward gradients against central differences.
///
/// Returns the maximum relative error over every coordinate.
pub fn fd_check_layer(layer: &mut Layer<f64>, x: &Tensor4<f64>, seed: u64) -> f64 {
    let ctx = ForwardCtx::train(7); // fixed step: dropout masks replay
    let y0 = layer.forward(x, &ctx).expect("forward");
    let mut rng = TestRng::new(seed);
    let r = Tensor4::from_vec(
        (0..y0.data.len()).map(|_| rng.range(-1.0, 1.0)).collect(),
        y0.shape,
    )
    .unwrap();

    // analytic gradients
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&r).expect("backward");
    let mut analytic: Vec<f64> = Vec::new();
    for p in layer.params_mut() {
        analytic.extend_from_slice(&p.grad);
    }
    analytic.extend_from_slice(&dx.data);

    // loss as a function of the flat (params, input) vector
    let mut base: Vec<f64> = Vec::new();
    for p in layer.params_mut() {
        base.extend_from_slice(&p.value);
    }
    base.extend_from_slice(&x.data);

    let eval = |coords: &[f64], layer: &mut Layer<f64>| -> f64 {
        let mut off = 0;
        for p in layer.params_mut() {
            let n = p.value.len();
            p.value.copy_from_slice(&coords[off..off + n]);
            off += n;
        }
        let xt = Tensor4::from_vec(coords[off..].to_vec(), x.shape).unwrap();
        let y = layer.forward(&xt, &ctx).expect("forward");
        y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
    };

    let mut numeric = vec![0.0f64; base.len()];
    let mut coords = base.clone();
    for i in 0..base.len() {
        coords[i] = base[i] + FD_DELTA;
        let plus = eval(&coords, layer);
        coords[i] = base[i] - FD_DELTA;
        let minus = eval(&coords, layer);
        coords[i] = base[i];
        numeric[i] = (plus - minus) / (2.0 * FD_DELTA);
    }

    // restore original parameters
    let mut off = 0;
    for p in layer.params_mut() {
        let n = p.value.len();
        p.value.copy_from_slice(&base[off..off + n]);
        off += n;
    }

    max_relative_error(&analytic, &numeric)
}

/// Random tensor with entries in [lo, hi).
pub fn random_tensor(shape: [usize; 4], rng: &mut TestRng, lo: f64, hi: f64) -> Tensor4<f64> {
    let n: usize = shape.iter().product();
    Tensor4::from_vec((0..n).map(|_| rng.range(lo, hi)).collect(), shape).unwrap()
}

/// Tensor of distinct well-separated values (pool argmax stays put under
/// finite-difference probes), in randomized order.
pub fn separated_tensor(shape: [usize; 4], rng: &mut TestRng) -> Tensor4<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    // Fisher-Yates with the test rng
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        values.swap(i, j);
    }
    for v in &mut values {
        *v += rng.range(-0.004, 0.004);
    }
    Tensor4::from_vec(values, shape).unwrap()
}
