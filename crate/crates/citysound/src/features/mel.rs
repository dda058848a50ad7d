//! Triangular mel filterbank.
//!
//! Centers are equally spaced on the mel scale between f_min and f_max and
//! each triangle is peak-normalised to height 1, evaluated at the FFT bin
//! frequencies.

use crate::error::{Error, Result};
use crate::features::MelConfig;

/// mel(f) = 2595 * log10(1 + f / 700)
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter matrix, n_mels x (n_fft/2 + 1), row-major f64.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_mels: usize,
    n_fft_bins: usize,
    /// Triangle peak frequencies, Hz (length n_mels).
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_fft_bins(&self) -> usize {
        self.n_fft_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    #[inline]
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_fft_bins..(m + 1) * self.n_fft_bins]
    }
}

/// Build the filterbank for an FFT of `n_fft` points.
///
/// Fails with a resolution error if any filter covers no FFT bin.
pub fn mel_filterbank(cfg: &MelConfig, n_fft: usize) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max_hz());

    // n_mels + 2 edge points: filter m spans edges m..m+2 and peaks at m+1.
    let edges_hz: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();

    let bin_hz = f64::from(cfg.sample_rate) / n_fft as f64;
    let mut weights = vec![0.0; cfg.n_mels * n_bins];

    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let mut any = false;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            let w = up.min(down).max(0.0);
            if w > 0.0 {
                weights[m * n_bins + k] = w;
                any = true;
            }
        }
        if !any {
            return Err(Error::Resolution(format!(
                "mel filter {m} (peak {center:.1} Hz) covers no FFT bin; reduce n_mels or raise n_fft"
            )));
        }
    }

    Ok(MelFilterbank {
        weights,
        n_mels: cfg.n_mels,
        n_fft_bins: n_bins,
        centers_hz: edges_hz[1..=cfg.n_mels].to_vec(),
    })
}
