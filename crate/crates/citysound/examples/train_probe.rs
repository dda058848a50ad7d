// scratch probe: single scene10 model at the acceptance data scale
use citysound::dataset::{stratified_split, synthesize_dataset, SynthConfig};
use citysound::features::{MelConfig, PipelineOrder, StftConfig};
use citysound::labels::LabelScheme;
use citysound::models::{build_feature_store, train, ModelConfig, SplitMetrics};
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let synth = SynthConfig { seed: 5, ..SynthConfig::default() };
    let (clips, metas) = synthesize_dataset(&synth).unwrap();
    let split = stratified_split(&metas, (0.7, 0.15, 0.15), 5).unwrap();
    let train_ids: Vec<String> = split.train.iter().map(|m| m.id.clone()).collect();
    let (store, _) = build_feature_store(
        &clips, &train_ids, &StftConfig::default(), &MelConfig::new(48_000), 25,
        PipelineOrder::NormalizeThenSmooth,
    ).unwrap();
    println!("extraction: {:?}", t0.elapsed());

    let frames = 1 + 96_000 / 512;
    let mut cfg = ModelConfig::new(LabelScheme::Scene10, [frames, 128, 1]);
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.adam.lr = 0.002;
    cfg.seed = 5;
    let t1 = Instant::now();
    let model = train::<f32>(&cfg, &split, &store).unwrap();
    for e in &model.training_log {
        if let (SplitMetrics::Single { loss, accuracy }, Some(SplitMetrics::Single { loss: vl, accuracy: va })) =
            (&e.train, &e.validation.as_ref())
        {
            println!("epoch {}: train loss {loss:.4} acc {accuracy:.3}; val loss {vl:.4} acc {va:.3}", e.epoch);
        }
    }
    println!("training: {:?}", t1.elapsed());
}
