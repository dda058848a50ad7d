//! Runtime settings: paper defaults, overridden by a flat key=value config
//! file, overridden again by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::PipelineOrder;
use crate::nnet::AdamConfig;

/// The eight experiments of the result matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    BenchmarkScene10,
    City6,
    ScenePriors,
    Pair60,
    Grouped3,
    GroupedPair18,
    Multilabel16,
    Multitask,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::BenchmarkScene10,
        ExperimentId::City6,
        ExperimentId::ScenePriors,
        ExperimentId::Pair60,
        ExperimentId::Grouped3,
        ExperimentId::GroupedPair18,
        ExperimentId::Multilabel16,
        ExperimentId::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::BenchmarkScene10 => "benchmark_scene10",
            ExperimentId::City6 => "city6",
            ExperimentId::ScenePriors => "scene_priors",
            ExperimentId::Pair60 => "pair60",
            ExperimentId::Grouped3 => "grouped3",
            ExperimentId::GroupedPair18 => "grouped_pair18",
            ExperimentId::Multilabel16 => "multilabel16",
            ExperimentId::Multitask => "multitask",
        }
    }

    pub fn scheme(self) -> crate::labels::LabelScheme {
        use crate::labels::LabelScheme;
        match self {
            ExperimentId::BenchmarkScene10 => LabelScheme::Scene10,
            ExperimentId::City6 | ExperimentId::ScenePriors => LabelScheme::City6,
            ExperimentId::Pair60 => LabelScheme::Pair60,
            ExperimentId::Grouped3 => LabelScheme::Grouped3,
            ExperimentId::GroupedPair18 => LabelScheme::GroupedPair18,
            ExperimentId::Multilabel16 => LabelScheme::Multilabel16,
            ExperimentId::Multitask => LabelScheme::Multitask,
        }
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment '{s}'; expected one of {}",
                    ExperimentId::ALL.map(|e| e.name()).join(", ")
                ))
            })
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which audio corpus a run uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    /// Built-in synthetic soundscape generator.
    Synthetic,
    /// TSV manifest of WAV files.
    Manifest(PathBuf),
}

impl DatasetSource {
    pub fn parse(s: &str) -> DatasetSource {
        if s == "synthetic" {
            DatasetSource::Synthetic
        } else {
            DatasetSource::Manifest(PathBuf::from(s))
        }
    }
}

/// All tunables, with the paper's values as defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub dataset: DatasetSource,
    pub data_root: PathBuf,
    /// Official split manifests; when set they replace the stratified split.
    pub split_manifests: Option<(PathBuf, PathBuf, PathBuf)>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,

    // synthetic corpus
    pub synth_clips_per_pair: usize,
    pub synth_duration_s: f64,
    pub synth_noise: f64,

    // features
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub smooth_window: usize,
    pub smooth_before_norm: bool,

    // model / optimiser
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
    pub amsgrad: bool,
    pub scene_weight: f64,
    pub city_weight: f64,
    pub threshold: f64,
    pub time_downsample: usize,
    pub early_stop_val_accuracy: Option<f64>,

    pub cache_dir: Option<PathBuf>,
    pub force: bool,
    pub parallel: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let data_root = std::env::var_os("CITYSOUND_DATA")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Settings {
            dataset: DatasetSource::Synthetic,
            data_root,
            split_manifests: None,
            train_frac: 0.7,
            val_frac: 0.15,
            test_frac: 0.15,
            seed: 0,
            synth_clips_per_pair: 10,
            synth_duration_s: 2.0,
            synth_noise: 0.01,
            sample_rate: 48_000,
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            smooth_window: 25,
            smooth_before_norm: false,
            epochs: 200,
            batch_size: 32,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            decay: 0.0,
            amsgrad: false,
            scene_weight: 0.5,
            city_weight: 0.3,
            threshold: 0.4,
            time_downsample: 1,
            early_stop_val_accuracy: None,
            cache_dir: None,
            force: false,
            parallel: false,
        }
    }
}

impl Settings {
    /// Merge a flat key=value config file (lines of `key = value`, `#`
    /// comments). Unknown keys are errors so typos cannot silently pass.
    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
        }
        match key {
            "dataset" => self.dataset = DatasetSource::parse(value),
            "data_root" => self.data_root = PathBuf::from(value),
            "train_frac" => self.train_frac = num(key, value)?,
            "val_frac" => self.val_frac = num(key, value)?,
            "test_frac" => self.test_frac = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "synth_clips_per_pair" => self.synth_clips_per_pair = num(key, value)?,
            "synth_duration_s" => self.synth_duration_s = num(key, value)?,
            "synth_noise" => self.synth_noise = num(key, value)?,
            "sample_rate" => self.sample_rate = num(key, value)?,
            "n_fft" => self.n_fft = num(key, value)?,
            "hop" => self.hop = num(key, value)?,
            "n_mels" => self.n_mels = num(key, value)?,
            "smooth_window" => self.smooth_window = num(key, value)?,
            "smooth_before_norm" => self.smooth_before_norm = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "decay" => self.decay = num(key, value)?,
            "amsgrad" => self.amsgrad = num(key, value)?,
            "scene_weight" => self.scene_weight = num(key, value)?,
            "city_weight" => self.city_weight = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "time_downsample" => self.time_downsample = num(key, value)?,
            "early_stop_val_accuracy" => {
                self.early_stop_val_accuracy = Some(num(key, value)?)
            }
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            decay: self.decay,
            amsgrad: self.amsgrad,
        }
    }

    pub fn pipeline_order(&self) -> PipelineOrder {
        if self.smooth_before_norm {
            PipelineOrder::SmoothThenNormalize
        } else {
            PipelineOrder::NormalizeThenSmooth
        }
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_frac, self.val_frac, self.test_frac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "epochs = 30\nlr=0.01\n# comment\nthreshold = 0.5\n").unwrap();
        let mut s = Settings::default();
        s.apply_config_file(&path).unwrap();
        assert_eq!(s.epochs, 30);
        assert_eq!(s.lr, 0.01);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.batch_size, 32); // untouched default
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "epochz = 30\n").unwrap();
        let mut s = Settings::default();
        assert!(matches!(s.apply_config_file(&path), Err(Error::Config(_))));
    }

    #[test]
    fn experiment_names_roundtrip() {
        for e in ExperimentId::ALL {
            assert_eq!(e.name().parse::<ExperimentId>().unwrap(), e);
        }
        assert!("city7".parse::<ExperimentId>().is_err());
    }
}
