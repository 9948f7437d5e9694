use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use locint_cli::exit;
use locint_core::formats::{read_json, write_json};
use locint_core::{AblationReport, AnnotationRecord, DatasetManifest, InterpretationRecord, MetricsReport, TrainedModel};
use tempfile::TempDir;

fn locint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locint")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = locint(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Error kind from the structured stderr line, with the exit code.
fn failure(args: &[&str]) -> (i32, String) {
    let out = locint(args);
    let line = String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap_or_else(|_| panic!("unstructured stderr: {line}"));
    assert!(v["detail"].is_string());
    (out.status.code().unwrap(), v["error"].as_str().unwrap().to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &["--iterations", "2", "--beam", "50", "--trees", "20", "--seed", "7"];

/// A synthesized dataset and a model trained on it, shared by the tests.
struct Fixture {
    dir: TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let (data, model) = (dir.path().join("data"), dir.path().join("model.interp"));
        let f = Fixture { dir, data, model };
        ok(&["synth", "--pos", "24", "--neg", "40", "--seed", "7", "--out", p(&f.data)]);
        let manifest = f.data.join("manifest");
        let mut args = vec!["train", "--manifest", p(&manifest), "--schema", "head8", "--tier", "full", "--out", p(&f.model)];
        args.extend_from_slice(SMALL);
        ok(&args);
        f
    })
}

#[test]
fn synth_writes_manifest_and_files() {
    let f = fixture();
    let m: DatasetManifest = read_json(&f.data.join("manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 64);
    assert_eq!(m.schema_name, "head8");
    for e in &m.entries {
        assert!(f.data.join(&e.image).is_file());
        if let Some(a) = &e.annotation {
            let _: AnnotationRecord = read_json(&f.data.join(a)).unwrap();
        }
    }
}

#[test]
fn trained_model_loads_and_interprets_a_single_image() {
    let f = fixture();
    let model = TrainedModel::load(&f.model).unwrap();
    assert_eq!(model.training_meta.iterations_run, 2);
    let out = f.dir.path().join("single.interp");
    let image = f.data.join("images/pos_00020.png");
    ok(&["interpret", "--model", p(&f.model), "--image", p(&image), "--out", p(&out)]);
    let rec: InterpretationRecord = read_json(&out).unwrap();
    assert_eq!(rec.image_id, "pos_00020");
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"score\""));
    assert_eq!(rec.accepted, rec.score.is_some_and(|s| s >= model.accept_threshold));
}

#[test]
fn interpret_then_evaluate_is_reproducible() {
    let f = fixture();
    let preds = f.dir.path().join("preds");
    let m = p(&f.model).to_string();
    ok(&["--workers", "2", "interpret", "--model", &m, "--manifest", p(&f.data), "--split", "test", "--out", p(&preds)]);
    let count = std::fs::read_dir(&preds).unwrap().count();
    assert_eq!(count, 32);

    let metrics = f.dir.path().join("metrics");
    let eval = ["evaluate", "--pred", p(&preds), "--gt", p(&f.data), "--theta", "0.15", "--out", p(&metrics)];
    ok(&eval);
    let json = std::fs::read(metrics.join("metrics.json")).unwrap();
    let csv = std::fs::read(metrics.join("metrics.csv")).unwrap();
    ok(&eval);
    assert_eq!(std::fs::read(metrics.join("metrics.json")).unwrap(), json);
    assert_eq!(std::fs::read(metrics.join("metrics.csv")).unwrap(), csv);

    let report: MetricsReport = read_json(&metrics.join("metrics.json")).unwrap();
    assert_eq!(report.image_count, 12);
    assert_eq!(report.correct_threshold, 0.15);

    // The worker count does not change the outputs.
    let preds1 = f.dir.path().join("preds1");
    ok(&["--workers", "1", "interpret", "--model", &m, "--manifest", p(&f.data), "--split", "test", "--out", p(&preds1)]);
    for e in std::fs::read_dir(&preds).unwrap() {
        let e = e.unwrap();
        assert_eq!(std::fs::read(e.path()).unwrap(), std::fs::read(preds1.join(e.file_name())).unwrap());
    }
}

#[test]
fn training_is_reproducible_from_the_command_line() {
    let f = fixture();
    let again = f.dir.path().join("again.interp");
    let mut args = vec!["train", "--manifest", p(&f.data), "--out", p(&again)];
    args.extend_from_slice(SMALL);
    ok(&args);
    assert_eq!(std::fs::read(again).unwrap(), std::fs::read(&f.model).unwrap());
}

#[test]
fn ablate_emits_both_tiers_and_the_comparison() {
    let f = fixture();
    let out = f.dir.path().join("ablate");
    let mut args = vec!["ablate", "--manifest", p(&f.data), "--out", p(&out)];
    args.extend_from_slice(SMALL);
    let stdout = ok(&args);
    assert!(stdout.contains("ratio"));
    let report: AblationReport = read_json(&out.join("ablation.json")).unwrap();
    let full: MetricsReport = read_json(&out.join("full_metrics.json")).unwrap();
    assert_eq!(report.full, full);
    assert_eq!(report.comparison.full_fraction_correct, full.fraction_correct);
    assert_eq!(TrainedModel::load(&out.join("full.interp")).unwrap(), TrainedModel::load(&f.model).unwrap());
    let reduced = TrainedModel::load(&out.join("reduced.interp")).unwrap();
    assert!(reduced.relation_schema.total_length < TrainedModel::load(&f.model).unwrap().relation_schema.total_length);
}

#[test]
fn mine_writes_ranked_crops_usable_as_negatives() {
    let f = fixture();
    let out = f.dir.path().join("mined");
    ok(&["mine", "--manifest", p(&f.data), "--pool", p(&f.data.join("images")), "--k", "5", "--out", p(&out)]);
    let m: DatasetManifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 5);
    assert!(m.entries.iter().all(|e| out.join(&e.image).is_file()));
    let listing: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("windows.json")).unwrap()).unwrap();
    let sims: Vec<f64> = listing["windows"].as_array().unwrap().iter().map(|w| w["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    // Positive crops are in the pool, so the best match is exact.
    assert!((sims[0] - 1.0).abs() < 1e-6);

    let merged = f.dir.path().join("merged.interp");
    let mut args = vec!["train", "--manifest", p(&f.data), "--manifest", p(&out), "--out", p(&merged)];
    args.extend_from_slice(SMALL);
    ok(&args);
    assert_eq!(TrainedModel::load(&merged).unwrap().training_meta.negative_image_count, 25);
}

#[test]
fn distinct_exit_codes_for_each_failure() {
    let f = fixture();
    assert_eq!(failure(&["synth", "--pos", "2", "--neg", "2", "--seed", "1", "--out", "x", "--bogus"]), (exit::USAGE, "usage".into()));
    // Randomized commands refuse to run without a seed.
    assert_eq!(failure(&["synth", "--pos", "2", "--neg", "2", "--out", "x"]), (exit::USAGE, "usage".into()));
    assert_eq!(
        failure(&["train", "--manifest", p(&f.data), "--out", "m.interp"]),
        (exit::USAGE, "usage".into())
    );

    let missing = f.dir.path().join("nope.interp");
    let out = f.dir.path().join("x.interp");
    let image = f.data.join("images/pos_00000.png");
    assert_eq!(
        failure(&["interpret", "--model", p(&missing), "--image", p(&image), "--out", p(&out)]),
        (exit::UNREADABLE, "unreadable_file".into())
    );

    let future = f.dir.path().join("future.interp");
    let mut model: serde_json::Value = serde_json::from_slice(&std::fs::read(&f.model).unwrap()).unwrap();
    model["format_version"] = "2.0".into();
    std::fs::write(&future, serde_json::to_vec(&model).unwrap()).unwrap();
    assert_eq!(
        failure(&["interpret", "--model", p(&future), "--image", p(&image), "--out", p(&out)]),
        (exit::FORMAT_VERSION, "format_version".into())
    );

    let garbled = f.dir.path().join("garbled.interp");
    std::fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(
        failure(&["interpret", "--model", p(&garbled), "--image", p(&image), "--out", p(&out)]),
        (exit::MALFORMED, "malformed_file".into())
    );

    assert_eq!(
        failure(&["synth", "--pos", "0", "--neg", "2", "--seed", "1", "--out", p(&f.dir.path().join("empty"))]),
        (exit::INVALID_INPUT, "invalid_input".into())
    );
    assert_eq!(failure(&["--workers", "0", "synth", "--pos", "2", "--neg", "2", "--seed", "1", "--out", "x"]).0, exit::USAGE);
}

#[test]
fn evaluate_requires_every_prediction() {
    let f = fixture();
    let preds = f.dir.path().join("partial");
    std::fs::create_dir_all(&preds).unwrap();
    let (code, kind) = failure(&["evaluate", "--pred", p(&preds), "--gt", p(&f.data)]);
    assert_eq!((code, kind.as_str()), (exit::UNREADABLE, "unreadable_file"));
}

#[test]
fn annotation_with_future_version_is_rejected_by_train() {
    let f = fixture();
    let copy = f.dir.path().join("copy");
    let m: DatasetManifest = read_json(&f.data.join("manifest.json")).unwrap();
    for e in &m.entries {
        for rel in std::iter::once(&e.image).chain(&e.annotation) {
            std::fs::create_dir_all(copy.join(rel).parent().unwrap()).unwrap();
            std::fs::copy(f.data.join(rel), copy.join(rel)).unwrap();
        }
    }
    write_json(&copy.join("manifest.json"), &m).unwrap();
    let ann = copy.join(m.entries[0].annotation.as_ref().unwrap());
    let mut rec: AnnotationRecord = read_json(&ann).unwrap();
    rec.format_version = "3.1".into();
    write_json(&ann, &rec).unwrap();
    let mut args = vec!["train", "--manifest", p(&copy), "--out", "unused.interp"];
    args.extend_from_slice(SMALL);
    assert_eq!(failure(&args), (exit::FORMAT_VERSION, "format_version".into()));
}

#[test]
fn help_exits_cleanly() {
    let out = locint(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["synth", "annotate-serve", "train", "mine", "interpret", "evaluate", "ablate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}
