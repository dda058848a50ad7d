//! Feature storage and batch assembly.

use std::collections::HashMap;

use crate::dataset::{AudioClip, ClipMeta};
use crate::error::{Error, Result};
use crate::features::{
    extract_log_mel, finalize_features, fit_norm_stats, FeatureMatrix, MelConfig, NormStats,
    PipelineOrder, StftConfig,
};
use crate::nnet::{real, Real, Tensor4};

/// Finalised feature matrices keyed by clip id.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    map: HashMap<String, FeatureMatrix>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: String, fm: FeatureMatrix) {
        self.map.insert(id, fm);
    }

    pub fn get(&self, id: &str) -> Result<&FeatureMatrix> {
        self.map
            .get(id)
            .ok_or_else(|| Error::MissingFile(format!("features for clip '{id}'").into()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Stack the features of `metas` into an NHWC batch tensor, applying the
    /// time downsampling factor.
    pub fn batch_tensor<F: Real>(
        &self,
        metas: &[&ClipMeta],
        input_shape: [usize; 3],
        time_downsample: usize,
    ) -> Result<Tensor4<F>> {
        let [frames, bins, _] = input_shape;
        let mut t = Tensor4::zeros([metas.len(), frames, bins, 1]);
        for (s, meta) in metas.iter().enumerate() {
            let fm = self.get(&meta.id)?;
            let fm = if time_downsample > 1 {
                std::borrow::Cow::Owned(downsample_time(fm, time_downsample))
            } else {
                std::borrow::Cow::Borrowed(fm)
            };
            if fm.n_frames != frames || fm.n_bins != bins {
                return Err(Error::Shape(format!(
                    "clip '{}' features are {}x{}, model expects {}x{}",
                    meta.id, fm.n_frames, fm.n_bins, frames, bins
                )));
            }
            let dst = t.sample_mut(s);
            for (d, &v) in dst.iter_mut().zip(&fm.values) {
                *d = real(f64::from(v));
            }
        }
        Ok(t)
    }
}

/// Average-pool the time axis by an integer factor (trailing partial group
/// averaged over its actual size).
pub fn downsample_time(fm: &FeatureMatrix, factor: usize) -> FeatureMatrix {
    if factor <= 1 {
        return fm.clone();
    }
    let out_frames = fm.n_frames.div_ceil(factor);
    let mut out = FeatureMatrix::new(out_frames, fm.n_bins);
    for of in 0..out_frames {
        let lo = of * factor;
        let hi = ((of + 1) * factor).min(fm.n_frames);
        for b in 0..fm.n_bins {
            let mut acc = 0.0f64;
            for f in lo..hi {
                acc += f64::from(fm.get(f, b));
            }
            out.values[of * fm.n_bins + b] = (acc / (hi - lo) as f64) as f32;
        }
    }
    out
}

/// Extract log-mel features for every clip, fit normalisation statistics on
/// the training ids only, and finalise (normalise + smooth) everything.
pub fn build_feature_store(
    clips: &[AudioClip],
    train_ids: &[String],
    stft: &StftConfig,
    mel: &MelConfig,
    smooth_window: usize,
    order: PipelineOrder,
) -> Result<(FeatureStore, NormStats)> {
    use rayon::prelude::*;

    let raw: Vec<(String, FeatureMatrix)> = clips
        .par_iter()
        .map(|clip| Ok((clip.meta.id.clone(), extract_log_mel(clip, stft, mel)?)))
        .collect::<Result<Vec<_>>>()?;

    let train_set: std::collections::HashSet<&str> =
        train_ids.iter().map(String::as_str).collect();
    let train_mats: Vec<FeatureMatrix> = raw
        .iter()
        .filter(|(id, _)| train_set.contains(id.as_str()))
        .map(|(_, fm)| fm.clone())
        .collect();
    if train_mats.is_empty() {
        return Err(Error::EmptyInput("no training clips to fit statistics on".into()));
    }
    let stats = fit_norm_stats(&train_mats)?;

    let mut store = FeatureStore::new();
    for (id, fm) in &raw {
        store.insert(id.clone(), finalize_features(fm, &stats, smooth_window, order)?);
    }
    Ok((store, stats))
}
