//! Short-time Fourier transform magnitudes.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::features::{StftConfig, WindowKind};

/// One-sided STFT magnitude matrix: frames x (n_fft/2 + 1), row-major f64.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrum {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
}

impl MagnitudeSpectrum {
    pub fn new(n_frames: usize, n_bins: usize) -> Self {
        MagnitudeSpectrum { values: vec![0.0; n_frames * n_bins], n_frames, n_bins }
    }

    #[inline]
    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }
}

/// Compute the one-sided STFT magnitude of a mono signal.
///
/// Centered mode reflect-pads the signal by n_fft/2 on each side, giving
/// `1 + floor(len / hop)` frames.
pub fn stft_magnitude(samples: &[f64], cfg: &StftConfig) -> Result<MagnitudeSpectrum> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("cannot transform an empty signal".into()));
    }

    let n_fft = cfg.n_fft;
    let n_bins = n_fft / 2 + 1;
    let window = make_window(cfg.window, n_fft);

    let (n_frames, offset) = if cfg.centered {
        (1 + samples.len() / cfg.hop, n_fft as isize / 2)
    } else {
        if samples.len() < n_fft {
            return Err(Error::Config(format!(
                "uncentered STFT needs at least n_fft = {n_fft} samples, got {}",
                samples.len()
            )));
        }
        ((samples.len() - n_fft) / cfg.hop + 1, 0)
    };

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut out = MagnitudeSpectrum::new(n_frames, n_bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];

    for t in 0..n_frames {
        let start = (t * cfg.hop) as isize - offset;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = sample_reflected(samples, start + i as isize);
            *slot = Complex::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in out.values[t * n_bins..(t + 1) * n_bins].iter_mut().enumerate() {
            *v = buf[k].norm();
        }
    }
    Ok(out)
}

/// Reflect indexing without edge repetition (period 2*(len-1)).
#[inline]
fn sample_reflected(samples: &[f64], idx: isize) -> f64 {
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
}

fn make_window(kind: WindowKind, n: usize) -> Vec<f64> {
    match kind {
        WindowKind::Rectangular => vec![1.0; n],
        WindowKind::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
            .collect(),
    }
}
