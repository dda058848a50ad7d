//! Log-mel feature extraction.
//!
//! The front end is fixed by the pipeline recipe: STFT (2048-point, hop 512,
//! Hann window, centered with reflect padding), 128 triangular mel filters on
//! energies, natural log with a 1e-10 floor, per-bin standardisation against
//! training statistics, then a 25-frame moving average over time.

mod cache;
mod mel;
mod stft;

pub use cache::{cache_read, cache_write};
pub use mel::{mel_filterbank, MelFilterbank};
pub use stft::{stft_magnitude, MagnitudeSpectrum};

use crate::dataset::AudioClip;
use crate::error::{Error, Result};

/// Additive floor inside the log.
pub const LOG_FLOOR: f64 = 1e-10;
/// Smallest admissible per-bin standard deviation.
pub const STD_FLOOR: f64 = 1e-8;
/// Default temporal smoothing window, frames.
pub const SMOOTH_WINDOW: usize = 25;

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann window.
    Hann,
    /// No windowing.
    Rectangular,
}

/// Short-time Fourier transform parameters.
#[derive(Debug, Clone)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Center frames on the signal with reflect padding of n_fft/2 per side.
    pub centered: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig { n_fft: 2048, hop: 512, window: WindowKind::Hann, centered: true }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!("n_fft {} must be a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!(
                "hop {} must be in 1..=n_fft ({})",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }
}

/// Mel filterbank parameters.
#[derive(Debug, Clone)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub sample_rate: u32,
}

impl MelConfig {
    pub fn new(sample_rate: u32) -> Self {
        MelConfig { n_mels: 128, f_min: 0.0, f_max: None, sample_rate }
    }

    pub fn f_max_hz(&self) -> f64 {
        self.f_max.unwrap_or(f64::from(self.sample_rate) / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.n_mels < 2 {
            return Err(Error::Config(format!("n_mels {} must be >= 2", self.n_mels)));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max_hz() && self.f_max_hz() <= nyquist) {
            return Err(Error::Config(format!(
                "mel band edges ({}, {}) must satisfy 0 <= f_min < f_max <= {nyquist}",
                self.f_min,
                self.f_max_hz()
            )));
        }
        Ok(())
    }
}

/// Time x mel-bin feature matrix, row-major, stored at the cache precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f32>,
    pub n_frames: usize,
    pub n_bins: usize,
}

impl FeatureMatrix {
    pub fn new(n_frames: usize, n_bins: usize) -> Self {
        FeatureMatrix { values: vec![0.0; n_frames * n_bins], n_frames, n_bins }
    }

    #[inline]
    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-bin standardisation statistics pooled over the training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity statistics (mean 0, std 1).
    pub fn identity(n_bins: usize) -> Self {
        NormStats { mean: vec![0.0; n_bins], std: vec![1.0; n_bins] }
    }

    /// Pack as a 2 x n_bins matrix (row 0 mean, row 1 std) for the cache
    /// format. The packing narrows to f32.
    pub fn to_matrix(&self) -> FeatureMatrix {
        let n = self.mean.len();
        let mut fm = FeatureMatrix::new(2, n);
        for b in 0..n {
            fm.values[b] = self.mean[b] as f32;
            fm.values[n + b] = self.std[b] as f32;
        }
        fm
    }

    pub fn from_matrix(fm: &FeatureMatrix) -> Result<Self> {
        if fm.n_frames != 2 {
            return Err(Error::Format(format!(
                "stats matrix must have 2 rows (mean, std), found {}",
                fm.n_frames
            )));
        }
        Ok(NormStats {
            mean: fm.row(0).iter().map(|&v| f64::from(v)).collect(),
            std: fm.row(1).iter().map(|&v| f64::from(v)).collect(),
        })
    }
}

/// Mel-energy log compression: `ln(mag^2 . fb^T + 1e-10)` per frame.
pub fn log_mel(mag: &MagnitudeSpectrum, fb: &MelFilterbank) -> Result<FeatureMatrix> {
    if mag.n_bins != fb.n_fft_bins() {
        return Err(Error::Shape(format!(
            "magnitude has {} frequency bins, filterbank expects {}",
            mag.n_bins,
            fb.n_fft_bins()
        )));
    }
    let mut out = FeatureMatrix::new(mag.n_frames, fb.n_mels());
    for t in 0..mag.n_frames {
        let frame = mag.row(t);
        for m in 0..fb.n_mels() {
            let weights = fb.row(m);
            let mut energy = 0.0f64;
            for (w, &x) in weights.iter().zip(frame) {
                energy += w * x * x;
            }
            out.values[t * fb.n_mels() + m] = (energy + LOG_FLOOR).ln() as f32;
        }
    }
    Ok(out)
}

/// Fit pooled per-bin mean and population std over all frames of all
/// training matrices. Two-pass for accuracy; std floored at [`STD_FLOOR`].
pub fn fit_norm_stats(training: &[FeatureMatrix]) -> Result<NormStats> {
    let n_bins = training.first().map(|m| m.n_bins).unwrap_or(0);
    let total_frames: usize = training.iter().map(|m| m.n_frames).sum();
    if training.is_empty() || total_frames < 2 {
        return Err(Error::EmptyInput("need at least 2 frames to fit statistics".into()));
    }
    for m in training {
        if m.n_bins != n_bins {
            return Err(Error::Shape(format!(
                "mixed bin counts in training pool: {} vs {n_bins}",
                m.n_bins
            )));
        }
    }

    let mut mean = vec![0.0f64; n_bins];
    for m in training {
        for t in 0..m.n_frames {
            for (acc, &v) in mean.iter_mut().zip(m.row(t)) {
                *acc += f64::from(v);
            }
        }
    }
    for v in &mut mean {
        *v /= total_frames as f64;
    }

    let mut var = vec![0.0f64; n_bins];
    for m in training {
        for t in 0..m.n_frames {
            for (b, &v) in m.row(t).iter().enumerate() {
                let d = f64::from(v) - mean[b];
                var[b] += d * d;
            }
        }
    }
    let std = var
        .iter()
        .map(|v| (v / total_frames as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

/// Standardise a matrix with training statistics: `(x - mean) / std` per bin.
pub fn normalize(fm: &FeatureMatrix, stats: &NormStats) -> Result<FeatureMatrix> {
    if stats.mean.len() != fm.n_bins {
        return Err(Error::Shape(format!(
            "stats cover {} bins, matrix has {}",
            stats.mean.len(),
            fm.n_bins
        )));
    }
    let mut out = FeatureMatrix::new(fm.n_frames, fm.n_bins);
    for t in 0..fm.n_frames {
        for b in 0..fm.n_bins {
            let v = (f64::from(fm.get(t, b)) - stats.mean[b]) / stats.std[b];
            out.values[t * fm.n_bins + b] = v as f32;
        }
    }
    Ok(out)
}

/// Centered moving average over time, truncating the window at the edges.
pub fn smooth_time(fm: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!("smoothing window {window} must be odd and >= 1")));
    }
    if window == 1 {
        return Ok(fm.clone());
    }
    let half = window / 2;
    let mut out = FeatureMatrix::new(fm.n_frames, fm.n_bins);
    // prefix[t][b] = sum of frames 0..t
    let mut prefix = vec![0.0f64; (fm.n_frames + 1) * fm.n_bins];
    for t in 0..fm.n_frames {
        for b in 0..fm.n_bins {
            prefix[(t + 1) * fm.n_bins + b] =
                prefix[t * fm.n_bins + b] + f64::from(fm.get(t, b));
        }
    }
    for t in 0..fm.n_frames {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(fm.n_frames);
        let count = (hi - lo) as f64;
        for b in 0..fm.n_bins {
            let sum = prefix[hi * fm.n_bins + b] - prefix[lo * fm.n_bins + b];
            out.values[t * fm.n_bins + b] = (sum / count) as f32;
        }
    }
    Ok(out)
}

/// Order of the two post-processing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineOrder {
    NormalizeThenSmooth,
    SmoothThenNormalize,
}

/// Raw log-mel extraction for one clip (no normalisation or smoothing).
pub fn extract_log_mel(
    clip: &AudioClip,
    stft_cfg: &StftConfig,
    mel_cfg: &MelConfig,
) -> Result<FeatureMatrix> {
    let mag = stft_magnitude(&clip.samples, stft_cfg)?;
    let fb = mel_filterbank(mel_cfg, stft_cfg.n_fft)?;
    log_mel(&mag, &fb)
}

/// Apply normalisation and smoothing in the configured order.
pub fn finalize_features(
    fm: &FeatureMatrix,
    stats: &NormStats,
    smooth_window: usize,
    order: PipelineOrder,
) -> Result<FeatureMatrix> {
    match order {
        PipelineOrder::NormalizeThenSmooth => smooth_time(&normalize(fm, stats)?, smooth_window),
        PipelineOrder::SmoothThenNormalize => normalize(&smooth_time(fm, smooth_window)?, stats),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_matrix(n_frames: usize, n_bins: usize, c: f32) -> FeatureMatrix {
        FeatureMatrix { values: vec![c; n_frames * n_bins], n_frames, n_bins }
    }

    #[test]
    fn log_mel_floor_on_silence() {
        let mag = MagnitudeSpectrum::new(3, 1025);
        let fb = mel_filterbank(&MelConfig::new(48_000), 2048).unwrap();
        let fm = log_mel(&mag, &fb).unwrap();
        let floor = LOG_FLOOR.ln() as f32;
        assert!(fm.values.iter().all(|&v| (v - floor).abs() < 1e-6));
    }

    #[test]
    fn log_mel_scaling_adds_ln4() {
        let mut mag = MagnitudeSpectrum::new(2, 1025);
        for (i, v) in mag.values.iter_mut().enumerate() {
            *v = 0.5 + (i % 7) as f64 * 0.25;
        }
        let mut mag2 = mag.clone();
        for v in &mut mag2.values {
            *v *= 2.0;
        }
        let fb = mel_filterbank(&MelConfig::new(48_000), 2048).unwrap();
        let a = log_mel(&mag, &fb).unwrap();
        let b = log_mel(&mag2, &fb).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((f64::from(y - x) - 4.0f64.ln()).abs() < 1e-4, "{x} -> {y}");
        }
    }

    #[test]
    fn log_mel_shape_mismatch() {
        let mag = MagnitudeSpectrum::new(2, 513);
        let fb = mel_filterbank(&MelConfig::new(48_000), 2048).unwrap();
        assert!(matches!(log_mel(&mag, &fb), Err(Error::Shape(_))));
    }

    #[test]
    fn stats_degenerate_constant() {
        let stats = fit_norm_stats(&[constant_matrix(4, 3, 2.5)]).unwrap();
        for b in 0..3 {
            assert!((stats.mean[b] - 2.5).abs() < 1e-12);
            assert_eq!(stats.std[b], STD_FLOOR);
        }
    }

    #[test]
    fn stats_two_frames_hand_computed() {
        let fm = FeatureMatrix { values: vec![0.0, 0.0, 2.0, 2.0], n_frames: 2, n_bins: 2 };
        let stats = fit_norm_stats(&[fm]).unwrap();
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
    }

    #[test]
    fn stats_empty_rejected() {
        assert!(matches!(fit_norm_stats(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn normalize_identity_and_self() {
        let fm = constant_matrix(3, 2, 5.0);
        let stats = fit_norm_stats(&[fm.clone()]).unwrap();
        let z = normalize(&fm, &stats).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));

        let idstats = NormStats::identity(2);
        let same = normalize(&fm, &idstats).unwrap();
        assert_eq!(same.values, fm.values);
    }

    #[test]
    fn smooth_window_one_is_identity() {
        let fm = FeatureMatrix { values: (0..12).map(|i| i as f32).collect(), n_frames: 4, n_bins: 3 };
        assert_eq!(smooth_time(&fm, 1).unwrap().values, fm.values);
    }

    #[test]
    fn smooth_constant_unchanged() {
        let fm = constant_matrix(50, 4, 3.25);
        let sm = smooth_time(&fm, 25).unwrap();
        for &v in &sm.values {
            assert!((v - 3.25).abs() < 1e-6);
        }
    }

    #[test]
    fn smooth_even_window_rejected() {
        let fm = constant_matrix(10, 2, 0.0);
        assert!(matches!(smooth_time(&fm, 24), Err(Error::Config(_))));
    }

    #[test]
    fn stats_matrix_roundtrip() {
        let stats = NormStats { mean: vec![1.5, -2.25], std: vec![0.5, 3.0] };
        let back = NormStats::from_matrix(&stats.to_matrix()).unwrap();
        assert_eq!(back, stats);
    }
}
