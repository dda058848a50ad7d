//! Mini-batch Adam training, scene-specific model fleets, and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ClipMeta, DatasetSplit, Scene, SCENES};
use crate::error::{Error, Result};
use crate::evaluation::PredictionMatrix;
use crate::labels::{encode, LabelScheme, Target};
use crate::models::{
    build_baseline, build_benchmark, build_multitask, FeatureStore, ModelConfig,
};
use crate::nnet::{
    binary_cross_entropy, categorical_cross_entropy, mix_seed, real, Mode, Network, Real, Tensor4,
};

const SHUFFLE_SALT: u64 = 0x5355_4646; // distinct stream from weight init

/// A trained network plus its provenance.
#[derive(Debug, Clone)]
pub struct TrainedModel<F: Real> {
    pub network: Network<F>,
    pub scheme: LabelScheme,
    pub time_downsample: usize,
    pub training_log: Vec<EpochLog>,
    /// Set when training stopped on a numeric failure; the network holds the
    /// last good state.
    pub aborted: Option<AbortInfo>,
}

#[derive(Debug, Clone)]
pub struct AbortInfo {
    pub epoch: usize,
    pub batch: usize,
    pub reason: String,
}

/// Loss/accuracy for one split in one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMetrics {
    Single { loss: f64, accuracy: f64 },
    Dual { scene_loss: f64, scene_accuracy: f64, city_loss: f64, city_accuracy: f64 },
}

impl SplitMetrics {
    /// Scalar summary used for early-stop checks: the accuracy, or for two
    /// heads the smaller of the two.
    pub fn headline_accuracy(&self) -> f64 {
        match *self {
            SplitMetrics::Single { accuracy, .. } => accuracy,
            SplitMetrics::Dual { scene_accuracy, city_accuracy, .. } => {
                scene_accuracy.min(city_accuracy)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: SplitMetrics,
    pub validation: Option<SplitMetrics>,
}

/// First index of the row maximum (ties resolved to the lowest index).
fn argmax<F: PartialOrd + Copy>(row: &[F]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

/// Batch index ranges; a trailing singleton is merged into the previous
/// batch so batch norm always sees at least 2 samples.
fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() >= 2 && out.last().unwrap().len() == 1 {
        let last = out.pop().unwrap();
        let prev = out.pop().unwrap();
        out.push(prev.start..last.end);
    }
    out
}

/// One-hot / multi-hot target tensors, one per head.
fn head_targets<F: Real>(metas: &[&ClipMeta], scheme: LabelScheme) -> Vec<Tensor4<F>> {
    let n = metas.len();
    match scheme {
        LabelScheme::Multitask => {
            let mut scenes = Tensor4::zeros([n, 1, 1, 10]);
            let mut cities = Tensor4::zeros([n, 1, 1, 6]);
            for (s, meta) in metas.iter().enumerate() {
                let Target::Dual(sc, ci) = encode(meta, scheme) else { unreachable!() };
                scenes.data[s * 10 + sc] = F::one();
                cities.data[s * 6 + ci] = F::one();
            }
            vec![scenes, cities]
        }
        LabelScheme::Multilabel16 => {
            let mut t = Tensor4::zeros([n, 1, 1, 16]);
            for (s, meta) in metas.iter().enumerate() {
                let Target::TwoHot(a, b) = encode(meta, scheme) else { unreachable!() };
                t.data[s * 16 + a] = F::one();
                t.data[s * 16 + b] = F::one();
            }
            vec![t]
        }
        _ => {
            let c = scheme.n_classes();
            let mut t = Tensor4::zeros([n, 1, 1, c]);
            for (s, meta) in metas.iter().enumerate() {
                let Target::Single(k) = encode(meta, scheme) else { unreachable!() };
                t.data[s * c + k] = F::one();
            }
            vec![t]
        }
    }
}

/// Per-head (loss, dL/doutput) for one batch.
fn head_losses<F: Real>(
    scheme: LabelScheme,
    outputs: &[Tensor4<F>],
    targets: &[Tensor4<F>],
) -> Result<Vec<(F, Tensor4<F>)>> {
    outputs
        .iter()
        .zip(targets)
        .map(|(out, tgt)| match scheme {
            LabelScheme::Multilabel16 => binary_cross_entropy(out, tgt),
            _ => categorical_cross_entropy(out, tgt),
        })
        .collect()
}

/// Correct-prediction counts for one batch (accuracy numerators).
struct CorrectCounts {
    primary: usize,
    secondary: usize,
}

fn count_correct<F: Real>(
    scheme: LabelScheme,
    outputs: &[Tensor4<F>],
    metas: &[&ClipMeta],
) -> CorrectCounts {
    let mut counts = CorrectCounts { primary: 0, secondary: 0 };
    match scheme {
        LabelScheme::Multitask => {
            for (s, meta) in metas.iter().enumerate() {
                let Target::Dual(sc, ci) = encode(meta, scheme) else { unreachable!() };
                if argmax(&outputs[0].data[s * 10..(s + 1) * 10]) == sc {
                    counts.primary += 1;
                }
                if argmax(&outputs[1].data[s * 6..(s + 1) * 6]) == ci {
                    counts.secondary += 1;
                }
            }
        }
        LabelScheme::Multilabel16 => {
            // joint accuracy of the spliced sub-matrices
            for (s, meta) in metas.iter().enumerate() {
                let Target::TwoHot(sc, ci) = encode(meta, scheme) else { unreachable!() };
                let row = &outputs[0].data[s * 16..(s + 1) * 16];
                if argmax(&row[0..10]) == sc && 10 + argmax(&row[10..16]) == ci {
                    counts.primary += 1;
                }
            }
        }
        _ => {
            let c = scheme.n_classes();
            for (s, meta) in metas.iter().enumerate() {
                let Target::Single(k) = encode(meta, scheme) else { unreachable!() };
                if argmax(&outputs[0].data[s * c..(s + 1) * c]) == k {
                    counts.primary += 1;
                }
            }
        }
    }
    counts
}

struct MetricsAccum {
    loss: [f64; 2],
    correct: [usize; 2],
    samples: usize,
}

impl MetricsAccum {
    fn new() -> Self {
        MetricsAccum { loss: [0.0; 2], correct: [0; 2], samples: 0 }
    }

    fn add<F: Real>(
        &mut self,
        losses: &[(F, Tensor4<F>)],
        counts: &CorrectCounts,
        batch: usize,
    ) {
        for (h, (l, _)) in losses.iter().enumerate() {
            self.loss[h] += l.to_f64().unwrap() * batch as f64;
        }
        self.correct[0] += counts.primary;
        self.correct[1] += counts.secondary;
        self.samples += batch;
    }

    fn finish(&self, scheme: LabelScheme) -> SplitMetrics {
        let n = self.samples.max(1) as f64;
        match scheme {
            LabelScheme::Multitask => SplitMetrics::Dual {
                scene_loss: self.loss[0] / n,
                scene_accuracy: self.correct[0] as f64 / n,
                city_loss: self.loss[1] / n,
                city_accuracy: self.correct[1] as f64 / n,
            },
            _ => SplitMetrics::Single {
                loss: self.loss[0] / n,
                accuracy: self.correct[0] as f64 / n,
            },
        }
    }
}

/// Build the architecture for a config.
fn build_network<F: Real>(config: &ModelConfig) -> Result<Network<F>> {
    let shape = config.effective_input_shape();
    let (trunk, heads) = match config.scheme {
        LabelScheme::Multitask => build_multitask(config.mtl_branch),
        scheme => {
            let n = scheme.n_classes();
            if config.conv_blocks == 2 {
                build_benchmark(n, scheme)?
            } else {
                build_baseline(n, scheme)?
            }
        }
    };
    Network::from_specs(shape, &trunk, &heads, config.seed)
}

/// Mini-batch Adam training over the split, with per-epoch reshuffling keyed
/// to (seed, epoch) and no early stopping unless the config asks for it.
///
/// A non-finite loss or gradient aborts training; the returned model carries
/// the last good parameter state and the abort reason.
pub fn train<F: Real>(
    config: &ModelConfig,
    split: &DatasetSplit,
    store: &FeatureStore,
) -> Result<TrainedModel<F>> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }

    let mut network = build_network::<F>(config)?;
    let loss_weights: Vec<f64> = match config.scheme {
        LabelScheme::Multitask => vec![config.mtl_weights.0, config.mtl_weights.1],
        _ => vec![1.0],
    };

    let mut log = Vec::with_capacity(config.epochs);
    let mut aborted = None;

    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            config.seed ^ SHUFFLE_SALT,
            epoch as u64,
        ));
        order.shuffle(&mut rng);

        let mut accum = MetricsAccum::new();
        for (batch_idx, range) in batch_ranges(order.len(), config.batch_size).iter().enumerate() {
            let metas: Vec<&ClipMeta> =
                order[range.clone()].iter().map(|&i| &split.train[i]).collect();
            let x = store.batch_tensor::<F>(
                &metas,
                config.effective_input_shape(),
                config.time_downsample,
            )?;
            let targets = head_targets::<F>(&metas, config.scheme);

            network.zero_grad();
            let outputs = network.forward(&x, Mode::Train)?;
            let losses = match head_losses(config.scheme, &outputs, &targets) {
                Ok(l) => l,
                Err(Error::Numeric(reason)) => {
                    aborted = Some(AbortInfo { epoch, batch: batch_idx, reason });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if losses.iter().any(|(l, _)| !l.is_finite()) {
                aborted = Some(AbortInfo {
                    epoch,
                    batch: batch_idx,
                    reason: "non-finite loss".into(),
                });
                break 'epochs;
            }

            accum.add(&losses, &count_correct(config.scheme, &outputs, &metas), metas.len());

            let grads: Vec<Tensor4<F>> = losses
                .into_iter()
                .zip(&loss_weights)
                .map(|((_, mut g), &w)| {
                    if w != 1.0 {
                        let wf = real::<F>(w);
                        for v in &mut g.data {
                            *v *= wf;
                        }
                    }
                    g
                })
                .collect();
            network.backward(&grads)?;
            match network.adam_step(&config.adam) {
                Ok(()) => {}
                Err(Error::Numeric(reason)) => {
                    aborted = Some(AbortInfo { epoch, batch: batch_idx, reason });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }

        let train_metrics = accum.finish(config.scheme);
        let val_metrics = if split.validation.is_empty() {
            None
        } else {
            Some(evaluate_split(&mut network, config, &split.validation, store)?)
        };
        log.push(EpochLog { epoch, train: train_metrics, validation: val_metrics });

        if let (Some(target), Some(val)) = (config.early_stop_val_accuracy, &log.last().unwrap().validation)
        {
            if val.headline_accuracy() >= target {
                break;
            }
        }
        if let Some(target) = config.early_stop_train_loss {
            let loss = match log.last().unwrap().train {
                SplitMetrics::Single { loss, .. } => loss,
                SplitMetrics::Dual { scene_loss, city_loss, .. } => scene_loss + city_loss,
            };
            if loss < target {
                break;
            }
        }
    }

    network.clear_caches();
    Ok(TrainedModel {
        network,
        scheme: config.scheme,
        time_downsample: config.time_downsample,
        training_log: log,
        aborted,
    })
}

/// Inference-mode loss/accuracy over a clip list.
pub fn evaluate_split<F: Real>(
    network: &mut Network<F>,
    config: &ModelConfig,
    metas: &[ClipMeta],
    store: &FeatureStore,
) -> Result<SplitMetrics> {
    let mut accum = MetricsAccum::new();
    for range in batch_ranges(metas.len(), config.batch_size) {
        let batch: Vec<&ClipMeta> = metas[range].iter().collect();
        let x = store.batch_tensor::<F>(
            &batch,
            config.effective_input_shape(),
            config.time_downsample,
        )?;
        let targets = head_targets::<F>(&batch, config.scheme);
        let outputs = network.forward(&x, Mode::Infer)?;
        let losses = head_losses(config.scheme, &outputs, &targets)?;
        accum.add(&losses, &count_correct(config.scheme, &outputs, &batch), batch.len());
    }
    Ok(accum.finish(config.scheme))
}

/// Ten scene-specific city classifiers, each trained only on its scene's
/// clips. Model seeds derive from the base seed and the scene index.
pub fn train_scene_specific<F: Real>(
    config: &ModelConfig,
    split: &DatasetSplit,
    store: &FeatureStore,
    parallel: bool,
) -> Result<Vec<(Scene, TrainedModel<F>)>> {
    for &scene in &SCENES {
        if !split.train.iter().any(|m| m.scene == scene) {
            return Err(Error::Stratum(format!("no training clips for scene '{scene}'")));
        }
    }
    let jobs: Vec<(Scene, ModelConfig, DatasetSplit)> = SCENES
        .iter()
        .map(|&scene| {
            let filtered = DatasetSplit {
                train: split.train.iter().filter(|m| m.scene == scene).cloned().collect(),
                validation: split
                    .validation
                    .iter()
                    .filter(|m| m.scene == scene)
                    .cloned()
                    .collect(),
                test: split.test.iter().filter(|m| m.scene == scene).cloned().collect(),
            };
            let cfg = ModelConfig {
                scheme: LabelScheme::City6,
                seed: mix_seed(config.seed, 1 + scene.index() as u64),
                ..config.clone()
            };
            (scene, cfg, filtered)
        })
        .collect();

    if parallel {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(scene, cfg, split)| Ok((*scene, train::<F>(cfg, split, store)?)))
            .collect()
    } else {
        jobs.iter()
            .map(|(scene, cfg, split)| Ok((*scene, train::<F>(cfg, split, store)?)))
            .collect()
    }
}

/// Inference over a clip list: one prediction matrix per head, rows aligned
/// with `metas`.
pub fn predict<F: Real>(
    model: &mut TrainedModel<F>,
    metas: &[ClipMeta],
    store: &FeatureStore,
    batch_size: usize,
) -> Result<Vec<PredictionMatrix>> {
    if metas.is_empty() {
        return Err(Error::EmptyInput("nothing to predict".into()));
    }
    let input_shape = self_input_shape(model);
    let head_widths: Vec<usize> =
        model.network.output_shapes().iter().map(|s| s[2]).collect();
    let mut scores: Vec<Vec<f64>> =
        head_widths.iter().map(|w| Vec::with_capacity(metas.len() * w)).collect();

    for range in batch_ranges(metas.len(), batch_size.max(2)) {
        let batch: Vec<&ClipMeta> = metas[range].iter().collect();
        let x = store.batch_tensor::<F>(&batch, input_shape, model.time_downsample)?;
        let outputs = model.network.forward(&x, Mode::Infer)?;
        for (h, out) in outputs.iter().enumerate() {
            scores[h].extend(out.data.iter().map(|v| v.to_f64().unwrap()));
        }
    }

    let sample_ids: Vec<String> = metas.iter().map(|m| m.id.clone()).collect();
    let schemes: Vec<LabelScheme> = match model.scheme {
        LabelScheme::Multitask => vec![LabelScheme::Scene10, LabelScheme::City6],
        s => vec![s],
    };
    Ok(scores
        .into_iter()
        .zip(schemes)
        .map(|(s, scheme)| PredictionMatrix::new(s, scheme, sample_ids.clone()))
        .collect())
}

fn self_input_shape<F: Real>(model: &TrainedModel<F>) -> [usize; 3] {
    model.network.input_shape
}
