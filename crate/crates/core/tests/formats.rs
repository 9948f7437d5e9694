use std::path::Path;

use locint_core::formats::{from_json_str, load_image, read_json, save_image, to_json_string, write_json};
use locint_core::pipeline::{interpret, train_interpretation_model};
use locint_core::{
    evaluate_dataset, generate_dataset, head8_schema, AnnotationRecord, Assignment, DatasetManifest, Error, EvalConfig,
    ForestConfig, InterpretationRecord, LibraryTier, MetricsReport, SceneParams, Split, TrainConfig, TrainedModel,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// write → read → write, returning both written byte strings.
fn cycle<T: Serialize + DeserializeOwned>(dir: &Path, name: &str, value: &T) -> (Vec<u8>, Vec<u8>, T) {
    let a = dir.join(format!("{name}.a.json"));
    let b = dir.join(format!("{name}.b.json"));
    write_json(&a, value).unwrap();
    let back: T = read_json(&a).unwrap();
    write_json(&b, &back).unwrap();
    (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), back)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 2,
        beam_width: 50,
        forest: ForestConfig { n_trees: 15, ..ForestConfig::new(seed) },
        ..TrainConfig::new(seed)
    }
}

#[test]
fn model_annotation_manifest_and_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(24, 40, &SceneParams::default(), 3).unwrap();
    let schema = head8_schema(LibraryTier::Full);

    let manifest = data.write(dir.path()).unwrap();
    let on_disk: DatasetManifest = read_json(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(on_disk, manifest);
    let (a, b, _) = cycle(dir.path(), "manifest", &manifest);
    assert_eq!(a, b);
    assert_eq!(a, std::fs::read(dir.path().join("manifest.json")).unwrap());

    let ann = &data.positives[0].annotation;
    let (a, b, back) = cycle(dir.path(), "annotation", ann);
    assert_eq!(a, b);
    assert_eq!(&back, ann);

    let train: Vec<_> = data.train_positives().collect();
    let anns: Vec<AnnotationRecord> = train.iter().map(|s| s.annotation.clone()).collect();
    let imgs: Vec<_> = train.iter().map(|s| s.image.clone()).collect();
    let negs: Vec<_> = data.negatives_in(Split::Train).cloned().collect();
    let (model, _) = train_interpretation_model(&anns, &imgs, &negs, &schema, &small_config(3)).unwrap();
    let path = dir.path().join("model.a.json");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    loaded.save(&dir.path().join("model.b.json")).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("model.b.json")).unwrap());

    let preds: Vec<(String, Assignment)> = data
        .test_positives()
        .map(|s| (s.image.id().to_string(), interpret(&s.image, &loaded).map(|r| r.assignment).unwrap_or_default()))
        .collect();
    let gt: Vec<_> = data.test_positives().map(|s| s.annotation.clone()).collect();
    let metrics = evaluate_dataset(&preds, &gt, &schema, &EvalConfig::default()).unwrap();
    let (a, b, back) = cycle(dir.path(), "metrics", &metrics);
    assert_eq!(a, b);
    assert_eq!(back, metrics);
    let csv = metrics.to_csv();
    let reread = MetricsReport::from_csv(&csv, metrics.image_count, metrics.correct_threshold).unwrap();
    assert_eq!(reread.to_csv(), csv);
    assert_eq!(reread, metrics);
}

#[test]
fn interpretation_record_round_trips() {
    let text = r#"{
  "format_version": "1.0",
  "image_id": "pos_00001",
  "score": 0.8125,
  "accepted": true,
  "bindings": [
    {"slot_id": "eye", "type": "point", "coords": [[0.25, 0.5]]}
  ],
  "diagnostics": {"candidate_counts": [3], "beam_sizes": [3], "search_order": ["eye"], "scored_assignments": 3}
}"#;
    let rec: InterpretationRecord = from_json_str(text).unwrap();
    let once = to_json_string(&rec).unwrap();
    let again = to_json_string(&from_json_str::<InterpretationRecord>(&once).unwrap()).unwrap();
    assert_eq!(once, again);
}

#[test]
fn saved_images_reload_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(2, 2, &SceneParams::default(), 9).unwrap();
    for img in data.positives.iter().map(|s| &s.image).chain(&data.negatives) {
        let p = dir.path().join(format!("{}.png", img.id()));
        save_image(&p, img).unwrap();
        let back = load_image(&p, img.id()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.intensities()), bits(img.intensities()));
    }
}

#[test]
fn unsupported_major_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(2, 1, &SceneParams::default(), 1).unwrap();
    let mut ann = data.positives[0].annotation.clone();
    ann.format_version = "2.0".into();
    let p = dir.path().join("ann.json");
    write_json(&p, &ann).unwrap();
    assert!(matches!(read_json::<AnnotationRecord>(&p), Err(Error::FormatVersion { .. })));
}
