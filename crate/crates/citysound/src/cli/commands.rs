//! Command implementations shared by the CLI entry points.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cli::config::{DatasetSource, ExperimentId, Settings};
use crate::dataset::{
    decode_wav, encode_wav, load_manifest, stratified_split, synthesize_dataset, AudioClip,
    ClipMeta, DatasetSplit, SynthConfig, CITIES, SCENES,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy, city_feature_distances, confusion, multilabel_evaluate, pair_marginals,
    per_class_accuracy, PredictionMatrix,
};
use crate::features::{
    cache_read, cache_write, extract_log_mel, finalize_features, fit_norm_stats, FeatureMatrix,
    MelConfig, NormStats, StftConfig,
};
use crate::labels::{encode, LabelScheme, Target};
use crate::models::{
    load_checkpoint, predict, save_checkpoint, train, train_scene_specific, FeatureStore,
    ModelConfig, SplitMetrics, TrainedModel,
};
use crate::nnet::mix_seed;

/// Everything downstream stages need once the data is ready.
pub struct PreparedData {
    pub split: DatasetSplit,
    pub store: FeatureStore,
    pub stats: NormStats,
    /// Raw (pre-finalise) per-clip matrices, kept for the distance table.
    pub raw: Vec<(String, FeatureMatrix)>,
    /// (frames, mel bins, 1) at full resolution.
    pub input_shape: [usize; 3],
}

/// One row of the Table-3-shaped summary.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub task: String,
    pub accuracy: Option<f64>,
    /// scene | city | both
    pub target: &'static str,
    pub n_classes: usize,
}

impl SummaryRow {
    fn new(task: impl Into<String>, accuracy: f64, target: &'static str, n: usize) -> Self {
        SummaryRow { task: task.into(), accuracy: Some(accuracy), target, n_classes: n }
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("task,accuracy,target,n_classes\n");
    for r in rows {
        let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.task, acc, r.target, r.n_classes);
    }
    out
}

fn synth_config(settings: &Settings) -> SynthConfig {
    SynthConfig {
        n_clips_per_city_scene: settings.synth_clips_per_pair,
        duration_s: settings.synth_duration_s,
        sample_rate: settings.sample_rate,
        noise_level: settings.synth_noise,
        seed: settings.seed,
        ..SynthConfig::default()
    }
}

fn stft_config(settings: &Settings) -> StftConfig {
    StftConfig { n_fft: settings.n_fft, hop: settings.hop, ..StftConfig::default() }
}

fn mel_config(settings: &Settings) -> MelConfig {
    MelConfig { n_mels: settings.n_mels, ..MelConfig::new(settings.sample_rate) }
}

/// Decode or synthesise the corpus.
fn assemble_clips(settings: &Settings) -> Result<(Vec<AudioClip>, Vec<ClipMeta>)> {
    match &settings.dataset {
        DatasetSource::Synthetic => synthesize_dataset(&synth_config(settings)),
        DatasetSource::Manifest(path) => {
            let manifest = if path.is_absolute() { path.clone() } else { settings.data_root.join(path) };
            let metas = load_manifest(&manifest, &settings.data_root, true)?;
            if metas.is_empty() {
                return Err(Error::EmptyInput(format!(
                    "manifest {} lists no clips",
                    manifest.display()
                )));
            }
            let clips: Vec<AudioClip> = metas
                .par_iter()
                .map(|m| decode_wav(&m.path))
                .collect::<Result<_>>()?;
            Ok((clips, metas))
        }
    }
}

fn make_split(metas: &[ClipMeta], settings: &Settings) -> Result<DatasetSplit> {
    if let Some((train, val, test)) = &settings.split_manifests {
        // The official challenge partition takes precedence over re-splitting.
        DatasetSplit::from_manifests(train, val, test, &settings.data_root, false)
    } else {
        stratified_split(metas, settings.fractions(), settings.seed)
    }
}

fn raw_cache_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csfm"))
}

/// Raw log-mel matrices for all clips, via the cache directory when present.
fn raw_features(
    clips: &[AudioClip],
    settings: &Settings,
) -> Result<Vec<(String, FeatureMatrix)>> {
    let stft = stft_config(settings);
    let mel = mel_config(settings);
    clips
        .par_iter()
        .map(|clip| {
            let id = clip.meta.id.clone();
            if let Some(dir) = &settings.cache_dir {
                let path = raw_cache_path(dir, &id);
                if path.is_file() && !settings.force {
                    return Ok((id, cache_read(&path)?));
                }
            }
            Ok((id, extract_log_mel(clip, &stft, &mel)?))
        })
        .collect()
}

/// Assemble clips, split, extract features, fit statistics, finalise.
pub fn prepare_data(settings: &Settings) -> Result<PreparedData> {
    let (clips, metas) = assemble_clips(settings)?;
    let split = make_split(&metas, settings)?;
    let raw = raw_features(&clips, settings)?;

    let train_ids: std::collections::HashSet<&str> =
        split.train.iter().map(|m| m.id.as_str()).collect();
    let train_mats: Vec<FeatureMatrix> = raw
        .iter()
        .filter(|(id, _)| train_ids.contains(id.as_str()))
        .map(|(_, fm)| fm.clone())
        .collect();
    if train_mats.is_empty() {
        return Err(Error::EmptyInput("training split has no features".into()));
    }
    let stats = fit_norm_stats(&train_mats)?;

    let mut store = FeatureStore::new();
    for (id, fm) in &raw {
        store.insert(
            id.clone(),
            finalize_features(fm, &stats, settings.smooth_window, settings.pipeline_order())?,
        );
    }
    let first = &raw[0].1;
    Ok(PreparedData {
        split,
        store,
        stats,
        input_shape: [first.n_frames, first.n_bins, 1],
        raw,
    })
}

/// `synth`: write a WAV corpus plus manifest for the synthetic dataset.
pub fn cmd_synth(settings: &Settings, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let (clips, metas) = synthesize_dataset(&synth_config(settings))?;
    let mut manifest = String::new();
    for clip in &clips {
        let name = clip.meta.path.file_name().unwrap().to_string_lossy().into_owned();
        encode_wav(&out_dir.join(&name), &clip.samples, clip.sample_rate, 24)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    fs::write(out_dir.join("manifest.tsv"), manifest)?;
    println!(
        "synth: wrote {} clips ({}s at {} Hz) and manifest.tsv to {}",
        metas.len(),
        settings.synth_duration_s,
        settings.sample_rate,
        out_dir.display()
    );
    Ok(())
}

/// `extract`: per-clip raw log-mel caches plus training normalisation stats.
pub fn cmd_extract(settings: &Settings, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let (clips, metas) = assemble_clips(settings)?;
    let split = make_split(&metas, settings)?;

    let stft = stft_config(settings);
    let mel = mel_config(settings);
    let mut written = 0usize;
    let mut skipped = 0usize;
    let mats: Vec<(String, FeatureMatrix)> = clips
        .par_iter()
        .map(|clip| {
            let path = raw_cache_path(out_dir, &clip.meta.id);
            if path.is_file() && !settings.force {
                return Ok((clip.meta.id.clone(), cache_read(&path)?, false));
            }
            let fm = extract_log_mel(clip, &stft, &mel)?;
            cache_write(&fm, &path)?;
            Ok((clip.meta.id.clone(), fm, true))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|(id, fm, fresh)| {
            if fresh {
                written += 1;
            } else {
                skipped += 1;
            }
            (id, fm)
        })
        .collect();

    let train_ids: std::collections::HashSet<&str> =
        split.train.iter().map(|m| m.id.as_str()).collect();
    let train_mats: Vec<FeatureMatrix> = mats
        .iter()
        .filter(|(id, _)| train_ids.contains(id.as_str()))
        .map(|(_, fm)| fm.clone())
        .collect();
    let stats = fit_norm_stats(&train_mats)?;
    cache_write(&stats.to_matrix(), &out_dir.join("norm_stats.csfm"))?;

    println!(
        "extract: {written} cache files written, {skipped} reused, stats over {} training clips -> {}",
        train_mats.len(),
        out_dir.display()
    );
    Ok(())
}

fn model_config(settings: &Settings, scheme: LabelScheme, input_shape: [usize; 3]) -> ModelConfig {
    let mut cfg = ModelConfig::new(scheme, input_shape);
    cfg.epochs = settings.epochs;
    cfg.batch_size = settings.batch_size;
    cfg.seed = settings.seed;
    cfg.adam = settings.adam();
    cfg.mtl_weights = (settings.scene_weight, settings.city_weight);
    cfg.time_downsample = settings.time_downsample;
    cfg.early_stop_val_accuracy = settings.early_stop_val_accuracy;
    cfg
}

/// Train the models of one experiment: (label, model) pairs.
fn train_experiment(
    experiment: ExperimentId,
    settings: &Settings,
    data: &PreparedData,
) -> Result<Vec<(String, TrainedModel<f32>)>> {
    let scheme = experiment.scheme();
    match experiment {
        ExperimentId::BenchmarkScene10 => {
            let mut cfg = model_config(settings, scheme, data.input_shape);
            cfg.conv_blocks = 2;
            let benchmark = train::<f32>(&cfg, &data.split, &data.store)?;
            let mut cfg = model_config(settings, scheme, data.input_shape);
            cfg.seed = mix_seed(settings.seed, 0xE17A);
            let extra = train::<f32>(&cfg, &data.split, &data.store)?;
            Ok(vec![
                ("benchmark_cnn".into(), benchmark),
                ("extra_layer_cnn".into(), extra),
            ])
        }
        ExperimentId::ScenePriors => {
            let cfg = model_config(settings, scheme, data.input_shape);
            let models =
                train_scene_specific::<f32>(&cfg, &data.split, &data.store, settings.parallel)?;
            Ok(models
                .into_iter()
                .map(|(scene, m)| (scene.as_str().to_string(), m))
                .collect())
        }
        _ => {
            let cfg = model_config(settings, scheme, data.input_shape);
            let model = train::<f32>(&cfg, &data.split, &data.store)?;
            Ok(vec![("model".into(), model)])
        }
    }
}

fn checkpoint_path(out_dir: &Path, label: &str) -> PathBuf {
    if label == "model" {
        out_dir.join("checkpoint.csnn")
    } else {
        out_dir.join(format!("checkpoint.{label}.csnn"))
    }
}

fn log_path(out_dir: &Path, label: &str) -> PathBuf {
    if label == "model" {
        out_dir.join("training_log.csv")
    } else {
        out_dir.join(format!("training_log.{label}.csv"))
    }
}

fn write_training_log(model: &TrainedModel<f32>, path: &Path) -> Result<()> {
    let mut out = String::new();
    let dual = model.scheme == LabelScheme::Multitask;
    if dual {
        out.push_str("epoch,split,scene_loss,scene_accuracy,city_loss,city_accuracy\n");
    } else {
        out.push_str("epoch,split,loss,accuracy\n");
    }
    let mut row = |epoch: usize, split: &str, m: &SplitMetrics| match *m {
        SplitMetrics::Single { loss, accuracy } => {
            let _ = writeln!(out, "{epoch},{split},{loss},{accuracy}");
        }
        SplitMetrics::Dual { scene_loss, scene_accuracy, city_loss, city_accuracy } => {
            let _ = writeln!(
                out,
                "{epoch},{split},{scene_loss},{scene_accuracy},{city_loss},{city_accuracy}"
            );
        }
    };
    for e in &model.training_log {
        row(e.epoch, "train", &e.train);
        if let Some(v) = &e.validation {
            row(e.epoch, "validation", v);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// `train`: fit the experiment's model(s), write checkpoints and logs.
///
/// A numeric abort still writes the last good checkpoint, then surfaces the
/// failure (exit code 3).
pub fn cmd_train(experiment: ExperimentId, settings: &Settings, out_dir: &Path) -> Result<()> {
    let data = prepare_data(settings)?;
    cmd_train_with(experiment, settings, &data, out_dir)
}

pub(crate) fn cmd_train_with(
    experiment: ExperimentId,
    settings: &Settings,
    data: &PreparedData,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let expected: Vec<String> = match experiment {
        ExperimentId::BenchmarkScene10 => {
            vec!["benchmark_cnn".into(), "extra_layer_cnn".into()]
        }
        ExperimentId::ScenePriors => SCENES.iter().map(|s| s.as_str().to_string()).collect(),
        _ => vec!["model".into()],
    };
    if !settings.force
        && expected.iter().all(|l| checkpoint_path(out_dir, l).is_file())
    {
        println!(
            "train[{experiment}]: checkpoints already present in {}, skipping (use --force to retrain)",
            out_dir.display()
        );
        return Ok(());
    }

    let models = train_experiment(experiment, settings, data)?;
    let mut abort: Option<String> = None;
    for (label, model) in &models {
        save_checkpoint(model, &checkpoint_path(out_dir, label))?;
        write_training_log(model, &log_path(out_dir, label))?;
        if let Some(info) = &model.aborted {
            abort = Some(format!(
                "{label}: {} at epoch {}, batch {}",
                info.reason, info.epoch, info.batch
            ));
        }
        let last = model.training_log.last();
        let val = last
            .and_then(|e| e.validation.as_ref())
            .map(|v| format!("{:.4}", v.headline_accuracy()))
            .unwrap_or_else(|| "-".into());
        println!(
            "train[{experiment}/{label}]: {} epochs, final validation accuracy {val}",
            model.training_log.len()
        );
    }
    if let Some(reason) = abort {
        return Err(Error::Numeric(format!(
            "training aborted ({reason}); last good checkpoint saved"
        )));
    }
    Ok(())
}

fn eval_metas<'a>(split: &'a DatasetSplit, which: &str) -> Result<&'a [ClipMeta]> {
    match which {
        "train" => Ok(&split.train),
        "validation" => Ok(&split.validation),
        "test" => Ok(&split.test),
        other => Err(Error::Config(format!(
            "unknown split '{other}', expected train|validation|test"
        ))),
    }
}

fn truths_single(metas: &[ClipMeta], scheme: LabelScheme) -> Vec<usize> {
    metas
        .iter()
        .map(|m| match encode(m, scheme) {
            Target::Single(i) => i,
            _ => unreachable!("single-target scheme"),
        })
        .collect()
}

fn truths_multilabel(metas: &[ClipMeta]) -> Vec<(usize, usize)> {
    metas
        .iter()
        .map(|m| (m.scene.index(), m.city.index()))
        .collect()
}

fn load_experiment_models(
    experiment: ExperimentId,
    checkpoint: &Path,
) -> Result<Vec<(String, TrainedModel<f32>)>> {
    let labels: Vec<String> = match experiment {
        ExperimentId::BenchmarkScene10 => {
            vec!["benchmark_cnn".into(), "extra_layer_cnn".into()]
        }
        ExperimentId::ScenePriors => SCENES.iter().map(|s| s.as_str().to_string()).collect(),
        _ => vec!["model".into()],
    };
    let mut out = Vec::new();
    if checkpoint.is_dir() {
        for label in labels {
            out.push((label.clone(), load_checkpoint(&checkpoint_path(checkpoint, &label))?));
        }
    } else {
        if labels.len() != 1 {
            return Err(Error::Config(format!(
                "experiment {experiment} needs a checkpoint directory with {} models",
                labels.len()
            )));
        }
        out.push((labels[0].clone(), load_checkpoint(checkpoint)?));
    }
    for (label, model) in &out {
        if model.scheme != experiment.scheme() {
            return Err(Error::Scheme(format!(
                "checkpoint {label} holds a {} model, experiment {experiment} expects {}",
                model.scheme,
                experiment.scheme()
            )));
        }
    }
    Ok(out)
}

fn write_per_class(
    pred: &PredictionMatrix,
    truth: &[usize],
    names: Vec<String>,
    path: &Path,
) -> Result<()> {
    let table = per_class_accuracy(pred, truth, names)?;
    let mut out = String::from("class,recall,support_defined\n");
    for (name, recall) in table.class_names.iter().zip(&table.recall) {
        match recall {
            Some(r) => {
                let _ = writeln!(out, "{name},{r},yes");
            }
            None => {
                let _ = writeln!(out, "{name},,no");
            }
        }
    }
    let _ = writeln!(out, "macro_average,{},", table.macro_average);
    fs::write(path, out)?;
    Ok(())
}

fn write_confusion(
    pred: &PredictionMatrix,
    truth: &[usize],
    names: Vec<String>,
    stem: &Path,
) -> Result<()> {
    let cm = confusion(pred, truth, names)?;
    fs::write(stem.with_extension("csv"), cm.to_csv())?;
    cm.write_pgm(&stem.with_extension("pgm"))?;
    Ok(())
}

/// Scene-priors evaluation: per-scene city recalls (Table-4 analog) and the
/// mean accuracy across scenes.
fn evaluate_scene_priors(
    models: &mut [(String, TrainedModel<f32>)],
    metas: &[ClipMeta],
    data: &PreparedData,
    settings: &Settings,
    out_dir: &Path,
) -> Result<f64> {
    let mut csv = String::from("scene");
    for city in CITIES {
        let _ = write!(csv, ",{city}");
    }
    csv.push_str(",average\n");

    let mut per_city_sums = vec![0.0f64; 6];
    let mut per_city_counts = vec![0usize; 6];
    let mut scene_means = Vec::new();

    for &scene in &SCENES {
        let scene_metas: Vec<ClipMeta> =
            metas.iter().filter(|m| m.scene == scene).cloned().collect();
        if scene_metas.is_empty() {
            return Err(Error::Stratum(format!("no evaluation clips for scene '{scene}'")));
        }
        let model = models
            .iter_mut()
            .find(|(label, _)| label == scene.as_str())
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Config(format!("missing checkpoint for scene '{scene}'")))?;
        let preds = predict(model, &scene_metas, &data.store, settings.batch_size)?;
        let truth = truths_single(&scene_metas, LabelScheme::City6);
        let table = per_class_accuracy(
            &preds[0],
            &truth,
            CITIES.iter().map(|c| c.to_string()).collect(),
        )?;

        let _ = write!(csv, "{scene}");
        for (c, recall) in table.recall.iter().enumerate() {
            match recall {
                Some(r) => {
                    per_city_sums[c] += r;
                    per_city_counts[c] += 1;
                    let _ = write!(csv, ",{r}");
                }
                None => csv.push(','),
            }
        }
        let _ = writeln!(csv, ",{}", table.macro_average);
        scene_means.push(table.macro_average);
    }

    let overall = scene_means.iter().sum::<f64>() / scene_means.len() as f64;
    csv.push_str("average");
    for c in 0..6 {
        if per_city_counts[c] > 0 {
            let _ = write!(csv, ",{}", per_city_sums[c] / per_city_counts[c] as f64);
        } else {
            csv.push(',');
        }
    }
    let _ = writeln!(csv, ",{overall}");
    fs::write(out_dir.join("scene_priors_matrix.csv"), csv)?;
    Ok(overall)
}

/// `evaluate`: score checkpoints on a split and write the report bundle.
/// Returns the summary rows so `reproduce-all` can aggregate them.
pub fn cmd_evaluate(
    experiment: ExperimentId,
    settings: &Settings,
    checkpoint: &Path,
    which_split: &str,
    out_dir: &Path,
    with_city_distances: bool,
) -> Result<Vec<SummaryRow>> {
    let data = prepare_data(settings)?;
    cmd_evaluate_with(experiment, settings, &data, checkpoint, which_split, out_dir, with_city_distances)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn cmd_evaluate_with(
    experiment: ExperimentId,
    settings: &Settings,
    data: &PreparedData,
    checkpoint: &Path,
    which_split: &str,
    out_dir: &Path,
    with_city_distances: bool,
) -> Result<Vec<SummaryRow>> {
    fs::create_dir_all(out_dir)?;
    let metas = eval_metas(&data.split, which_split)?;
    if metas.is_empty() {
        return Err(Error::EmptyInput(format!("split '{which_split}' is empty")));
    }
    let mut models = load_experiment_models(experiment, checkpoint)?;
    let scheme = experiment.scheme();
    let mut rows = Vec::new();

    match experiment {
        ExperimentId::ScenePriors => {
            let mean = evaluate_scene_priors(&mut models, metas, data, settings, out_dir)?;
            rows.push(SummaryRow::new("scene_priors", mean, "city", 6));
        }
        ExperimentId::BenchmarkScene10 => {
            let truth = truths_single(metas, scheme);
            for (label, model) in &mut models {
                let preds = predict(model, metas, &data.store, settings.batch_size)?;
                let acc = accuracy(&preds[0], &truth)?;
                write_per_class(
                    &preds[0],
                    &truth,
                    scheme.class_names(),
                    &out_dir.join(format!("per_class.{label}.csv")),
                )?;
                write_confusion(
                    &preds[0],
                    &truth,
                    scheme.class_names(),
                    &out_dir.join(format!("confusion.{label}")),
                )?;
                rows.push(SummaryRow::new(label.clone(), acc, "scene", 10));
            }
        }
        ExperimentId::Multitask => {
            let (_, model) = &mut models[0];
            let preds = predict(model, metas, &data.store, settings.batch_size)?;
            let scene_truth = truths_single(metas, LabelScheme::Scene10);
            let city_truth = truths_single(metas, LabelScheme::City6);
            let scene_acc = accuracy(&preds[0], &scene_truth)?;
            let city_acc = accuracy(&preds[1], &city_truth)?;
            write_per_class(
                &preds[0],
                &scene_truth,
                LabelScheme::Scene10.class_names(),
                &out_dir.join("per_class.scene.csv"),
            )?;
            write_per_class(
                &preds[1],
                &city_truth,
                LabelScheme::City6.class_names(),
                &out_dir.join("per_class.city.csv"),
            )?;
            write_confusion(
                &preds[0],
                &scene_truth,
                LabelScheme::Scene10.class_names(),
                &out_dir.join("confusion.scene"),
            )?;
            write_confusion(
                &preds[1],
                &city_truth,
                LabelScheme::City6.class_names(),
                &out_dir.join("confusion.city"),
            )?;
            rows.push(SummaryRow::new("multitask", scene_acc, "scene", 10));
            rows.push(SummaryRow::new("multitask", city_acc, "city", 6));
        }
        ExperimentId::Multilabel16 => {
            let (_, model) = &mut models[0];
            let preds = predict(model, metas, &data.store, settings.batch_size)?;
            let truth = truths_multilabel(metas);
            let report = multilabel_evaluate(&preds[0], &truth, settings.threshold)?;
            let mut bin = String::from("sample_id");
            for name in scheme.class_names() {
                let _ = write!(bin, ",{name}");
            }
            bin.push('\n');
            for (i, id) in preds[0].sample_ids.iter().enumerate() {
                let _ = write!(bin, "{id}");
                for &b in &report.binarized[i * 16..(i + 1) * 16] {
                    let _ = write!(bin, ",{}", u8::from(b));
                }
                bin.push('\n');
            }
            fs::write(out_dir.join("binarized.csv"), bin)?;
            rows.push(SummaryRow::new("multilabel", report.joint_accuracy, "both", 16));
            rows.push(SummaryRow::new("multilabel", report.scene_accuracy, "scene", 10));
            rows.push(SummaryRow::new("multilabel", report.city_accuracy, "city", 6));
        }
        ExperimentId::Pair60 | ExperimentId::GroupedPair18 => {
            let (_, model) = &mut models[0];
            let preds = predict(model, metas, &data.store, settings.batch_size)?;
            let truth = truths_single(metas, scheme);
            let acc = accuracy(&preds[0], &truth)?;
            let marg = pair_marginals(&preds[0], &truth)?;
            write_confusion(
                &preds[0],
                &truth,
                scheme.class_names(),
                &out_dir.join("confusion"),
            )?;
            write_per_class(
                &preds[0],
                &truth,
                scheme.class_names(),
                &out_dir.join("per_class.csv"),
            )?;
            let mut marg_csv = String::from("measure,accuracy\n");
            let comp = if experiment == ExperimentId::Pair60 { "scene" } else { "group" };
            let _ = writeln!(marg_csv, "{comp},{}", marg.scene_or_group);
            let _ = writeln!(marg_csv, "city,{}", marg.city);
            let _ = writeln!(marg_csv, "joint,{}", marg.joint);
            fs::write(out_dir.join("pair_marginals.csv"), marg_csv)?;
            if experiment == ExperimentId::Pair60 {
                rows.push(SummaryRow::new("pairs", acc, "both", 60));
            } else {
                // the headline number for grouped pairs is the city accuracy
                rows.push(SummaryRow::new("grouped_pairs", marg.city, "both", 18));
            }
        }
        ExperimentId::City6 | ExperimentId::Grouped3 => {
            let (_, model) = &mut models[0];
            let preds = predict(model, metas, &data.store, settings.batch_size)?;
            let truth = truths_single(metas, scheme);
            let acc = accuracy(&preds[0], &truth)?;
            write_per_class(
                &preds[0],
                &truth,
                scheme.class_names(),
                &out_dir.join("per_class.csv"),
            )?;
            write_confusion(&preds[0], &truth, scheme.class_names(), &out_dir.join("confusion"))?;
            if experiment == ExperimentId::City6 {
                rows.push(SummaryRow::new("multi_class", acc, "city", 6));
            } else {
                rows.push(SummaryRow::new("grouped", acc, "scene", 3));
            }
        }
    }

    if with_city_distances {
        write_city_distances(data, out_dir)?;
    }
    fs::write(out_dir.join("summary.csv"), summary_csv(&rows))?;
    Ok(rows)
}

/// Table-1 analog: per-city mean feature distances on the training split,
/// computed from the finalised representation.
fn write_city_distances(data: &PreparedData, out_dir: &Path) -> Result<()> {
    let by_id: std::collections::HashMap<&str, &ClipMeta> =
        data.split.train.iter().map(|m| (m.id.as_str(), m)).collect();
    let grouped: Vec<(crate::dataset::City, &FeatureMatrix)> = data
        .raw
        .iter()
        .filter_map(|(id, _)| by_id.get(id.as_str()))
        .map(|m| Ok((m.city, data.store.get(&m.id)?)))
        .collect::<Result<_>>()?;
    let table = city_feature_distances(&grouped)?;
    fs::write(out_dir.join("city_distances.csv"), table.to_csv())?;
    Ok(())
}

/// `reproduce-all`: run every experiment end to end and emit the
/// Table-3-shaped summary. Failures are recorded and the run continues.
pub fn cmd_reproduce_all(settings: &Settings, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let data = prepare_data(settings)?;
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut failures: Vec<String> = Vec::new();

    for experiment in ExperimentId::ALL {
        let exp_dir = out_dir.join(experiment.name());
        let result = cmd_train_with(experiment, settings, &data, &exp_dir).and_then(|()| {
            cmd_evaluate_with(experiment, settings, &data, &exp_dir, "test", &exp_dir, false)
        });
        match result {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => {
                eprintln!("reproduce-all: {experiment} failed: {e}");
                failures.push(format!("{experiment}: {e}"));
                let scheme = experiment.scheme();
                let (target, n) = match experiment {
                    ExperimentId::BenchmarkScene10 | ExperimentId::Grouped3 => {
                        ("scene", scheme.n_classes())
                    }
                    ExperimentId::City6 | ExperimentId::ScenePriors => ("city", 6),
                    ExperimentId::Multitask => ("both", 10),
                    _ => ("both", scheme.n_classes()),
                };
                rows.push(SummaryRow {
                    task: experiment.name().into(),
                    accuracy: None,
                    target,
                    n_classes: n,
                });
            }
        }
    }

    write_city_distances(&data, out_dir)?;
    fs::write(out_dir.join("summary.csv"), summary_csv(&rows))?;
    if !failures.is_empty() {
        fs::write(out_dir.join("failures.log"), failures.join("\n") + "\n")?;
        eprintln!("reproduce-all: {} experiment(s) failed; see failures.log", failures.len());
    }
    println!(
        "reproduce-all: {} result rows -> {}",
        rows.len(),
        out_dir.join("summary.csv").display()
    );
    Ok(())
}
