use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use locint_core::formats::{default_version, load_image, read_json, save_image, write_json};
use locint_core::pipeline::{interpret, mine_confusable_windows, train_interpretation_model, MiningConfig, Window};
use locint_core::synth::{schema_by_name, SyntheticDataset};
use locint_core::{
    evaluate_dataset, generate_dataset, run_ablation, AnnotationRecord, Assignment, BindingLiteral, DatasetManifest,
    Error, EvalConfig, ExperimentData, InterpretationRecord, Label, LibraryTier, LocalRegionImage, ManifestEntry,
    MetricsReport, ModelSchema, SceneParams, Split, TrainConfig, TrainedModel,
};

use crate::{resolve_manifest, server, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "locint", version, about = "Interpret local image regions through learned primitive relations")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic head8 dataset with ground-truth annotations.
    Synth(SynthArgs),
    /// Serve the annotation HTTP API.
    AnnotateServe(ServeArgs),
    /// Train an interpretation model from a manifest.
    Train(TrainArgs),
    /// Rank windows of a negative image pool by similarity to the positives.
    Mine(MineArgs),
    /// Interpret one image, a directory of images, or a manifest split.
    Interpret(InterpretArgs),
    /// Score interpretation files against ground-truth annotations.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the full and reduced relation tiers on one manifest.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TierArg {
    Full,
    Reduced,
}

impl From<TierArg> for LibraryTier {
    fn from(t: TierArg) -> Self {
        match t {
            TierArg::Full => LibraryTier::Full,
            TierArg::Reduced => LibraryTier::Reduced,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn includes(self, s: Split) -> bool {
        match self {
            SplitArg::Train => s == Split::Train,
            SplitArg::Test => s == Split::Test,
            SplitArg::All => true,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub pos: usize,
    #[arg(long)]
    pub neg: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Side of the generated square crops in pixels.
    #[arg(long)]
    pub crop_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of images to annotate; ids are file stems.
    #[arg(long)]
    pub images: PathBuf,
    /// Where annotation records are stored (default: <images>/annotations).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "head8")]
    pub schema: String,
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub bind: SocketAddr,
}

/// Training hyperparameters shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long)]
    pub seed: u64,
    /// Hard-negative iterations.
    #[arg(long, default_value_t = 3)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200)]
    pub beam: usize,
    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Negative vectors per iteration (default: twice the positives).
    #[arg(long)]
    pub negatives: Option<usize>,
}

impl TrainingArgs {
    fn config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(self.seed);
        c.iterations = self.iterations;
        c.beam_width = self.beam;
        c.negatives_per_iteration = self.negatives;
        if let Some(n) = self.trees {
            c.forest.n_trees = n;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest; repeat to merge several (e.g. mined negatives).
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, default_value = "head8")]
    pub schema: String,
    #[arg(long, value_enum, default_value = "full")]
    pub tier: TierArg,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Manifest whose training positives define the target appearance.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of negative images to scan.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Output directory for crops, `windows.json` and a negatives manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Single image; `--out` is then the interpretation file.
    #[arg(long, conflicts_with_all = ["images", "manifest"])]
    pub image: Option<PathBuf>,
    /// Directory of images; `--out` is a directory of `<id>.interp` files.
    #[arg(long, conflicts_with = "manifest")]
    pub images: Option<PathBuf>,
    /// Interpret the images of a manifest split into the `--out` directory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of `<id>.interp` files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset directory or manifest providing ground truth.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    pub theta: f64,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Output directory for `metrics.json` and `metrics.csv` (default: --pred).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "head8")]
    pub schema: String,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, default_value_t = 0.15)]
    pub theta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(a),
        Command::AnnotateServe(a) => serve(a),
        Command::Train(a) => train(a),
        Command::Mine(a) => mine(a),
        Command::Interpret(a) => interpret_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
    })
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut params = SceneParams::default();
    if let Some(s) = a.crop_size {
        params.crop_size = s;
    }
    let data: SyntheticDataset = generate_dataset(a.pos, a.neg, &params, a.seed)?;
    let manifest = data.write(&a.out)?;
    println!("wrote {} images to {}", manifest.entries.len(), a.out.join("manifest.json").display());
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let schema = schema_by_name(&a.schema, LibraryTier::Full)?;
    let store = a.store.unwrap_or_else(|| a.images.join("annotations"));
    let state = server::ServerState::open(schema, &a.images, &store)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind).await.map_err(|e| CliError::Server(e.to_string()))?;
        eprintln!("serving {} images on http://{}", state.image_count(), a.bind);
        axum::serve(listener, server::router(state)).await.map_err(|e| CliError::Server(e.to_string()))
    })
}

fn schema_for(name: &str, manifest: &DatasetManifest, tier: LibraryTier) -> CliResult<ModelSchema> {
    let schema = schema_by_name(name, tier)?;
    if manifest.schema_name != schema.class_name {
        return Err(Error::InvalidArgument(format!(
            "manifest schema `{}` does not match `{}`",
            manifest.schema_name, schema.class_name
        ))
        .into());
    }
    Ok(schema)
}

fn load_experiments(paths: &[PathBuf], schema_name: &str, tier: LibraryTier) -> CliResult<(ModelSchema, ExperimentData)> {
    let mut schema = None;
    let mut all = ExperimentData::default();
    for p in paths {
        let (manifest, d) = ExperimentData::load(&resolve_manifest(p))?;
        schema = Some(schema_for(schema_name, &manifest, tier)?);
        all.train_annotations.extend(d.train_annotations);
        all.train_positives.extend(d.train_positives);
        all.train_negatives.extend(d.train_negatives);
        all.test_annotations.extend(d.test_annotations);
        all.test_positives.extend(d.test_positives);
        all.test_negatives.extend(d.test_negatives);
    }
    let schema = schema.ok_or_else(|| CliError::Usage("at least one --manifest is required".into()))?;
    Ok((schema, all))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let (schema, data) = load_experiments(&a.manifest, &a.schema, a.tier.into())?;
    let (model, _) = train_interpretation_model(
        &data.train_annotations,
        &data.train_positives,
        &data.train_negatives,
        &schema,
        &a.training.config(),
    )?;
    model.save(&a.out)?;
    let m = &model.training_meta;
    println!(
        "trained {} iterations on {} positives and {} negative images ({} starved); model written to {}",
        m.iterations_run,
        m.positive_count,
        m.negative_image_count,
        m.starved_images,
        a.out.display()
    );
    Ok(())
}

/// One mined crop as listed in `windows.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedEntry {
    pub crop: String,
    pub source_image: String,
    pub window: Window,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedListing {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub windows: Vec<MinedEntry>,
}

/// Images of a directory sorted by id (file stem).
pub fn images_in(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in read {
        let path = entry.map_err(|e| Error::Io(e.to_string()))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_all(files: &[(String, PathBuf)]) -> CliResult<Vec<LocalRegionImage>> {
    Ok(files.par_iter().map(|(id, p)| load_image(p, id)).collect::<Result<Vec<_>, _>>()?)
}

fn mine(a: MineArgs) -> CliResult<()> {
    let (manifest, data) = ExperimentData::load(&resolve_manifest(&a.manifest))?;
    let pool = load_all(&images_in(&a.pool)?)?;
    let mined = mine_confusable_windows(&data.train_positives, &pool, a.k, &MiningConfig::default())?;
    let mut windows = Vec::with_capacity(mined.len());
    let mut entries = Vec::with_capacity(mined.len());
    for (rank, m) in mined.iter().enumerate() {
        let crop = format!("images/mined_{rank:05}.png");
        save_image(&a.out.join(&crop), &m.crop)?;
        windows.push(MinedEntry {
            crop: crop.clone(),
            source_image: m.image_id.clone(),
            window: m.window,
            similarity: m.similarity,
        });
        entries.push(ManifestEntry { image: crop, annotation: None, label: Label::Negative, split: Split::Train });
    }
    write_json(&a.out.join("windows.json"), &MinedListing { format_version: default_version(), windows })?;
    let negatives = DatasetManifest { format_version: default_version(), schema_name: manifest.schema_name, entries };
    write_json(&a.out.join("manifest.json"), &negatives)?;
    println!("mined {} windows into {}", mined.len(), a.out.display());
    Ok(())
}

/// Interpretation file contents for one image; a failed search yields an
/// empty, unaccepted record.
pub fn interpretation_record(image: &LocalRegionImage, model: &TrainedModel) -> CliResult<InterpretationRecord> {
    let mut rec = InterpretationRecord {
        format_version: default_version(),
        image_id: image.id().to_string(),
        score: None,
        accepted: false,
        bindings: Vec::new(),
        diagnostics: Default::default(),
    };
    match interpret(image, model) {
        Ok(r) => {
            rec.score = Some(r.score);
            rec.accepted = r.score >= model.accept_threshold;
            rec.bindings = model
                .schema
                .slots
                .iter()
                .filter_map(|s| r.assignment.get(&s.id).map(|p| BindingLiteral::from_primitive(&s.id, p)))
                .collect();
            rec.diagnostics = r.diagnostics;
        }
        Err(Error::NoInterpretation { slot }) => rec.diagnostics.starved_slot = Some(slot),
        Err(e) => return Err(e.into()),
    }
    Ok(rec)
}

fn interpret_cmd(a: InterpretArgs) -> CliResult<()> {
    let model = TrainedModel::load(&a.model)?;
    if let Some(path) = &a.image {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        let rec = interpretation_record(&load_image(path, &id)?, &model)?;
        write_json(&a.out, &rec)?;
        println!("{}: score {}", id, rec.score.map_or("none".to_string(), |s| format!("{s:.4}")));
        return Ok(());
    }
    let files: Vec<(String, PathBuf)> = match (&a.images, &a.manifest) {
        (Some(dir), _) => images_in(dir)?,
        (None, Some(m)) => {
            let path = resolve_manifest(m);
            let manifest: DatasetManifest = read_json(&path)?;
            let root = path.parent().unwrap_or(Path::new("."));
            manifest
                .entries
                .iter()
                .filter(|e| a.split.includes(e.split))
                .map(|e| {
                    let p = root.join(&e.image);
                    let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or(&e.image).to_string();
                    (id, p)
                })
                .collect()
        }
        (None, None) => return Err(CliError::Usage("one of --image, --images or --manifest is required".into())),
    };
    let records: Vec<InterpretationRecord> = files
        .par_iter()
        .map(|(id, p)| interpretation_record(&load_image(p, id)?, &model))
        .collect::<CliResult<_>>()?;
    for r in &records {
        write_json(&a.out.join(format!("{}.interp", r.image_id)), r)?;
    }
    let accepted = records.iter().filter(|r| r.accepted).count();
    println!("interpreted {} images ({accepted} accepted) into {}", records.len(), a.out.display());
    Ok(())
}

fn eval_config(theta: f64) -> EvalConfig {
    EvalConfig { correct_threshold: theta, ..EvalConfig::default() }
}

fn write_metrics(dir: &Path, name: &str, m: &MetricsReport) -> CliResult<()> {
    write_json(&dir.join(format!("{name}.json")), m)?;
    std::fs::write(dir.join(format!("{name}.csv")), m.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let path = resolve_manifest(&a.gt);
    let manifest: DatasetManifest = read_json(&path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let schema = schema_by_name(&manifest.schema_name, LibraryTier::Full)?;
    let wanted: Vec<&ManifestEntry> =
        manifest.entries.iter().filter(|e| e.label == Label::Positive && a.split.includes(e.split)).collect();
    let pairs: Vec<(AnnotationRecord, (String, Assignment))> = wanted
        .par_iter()
        .map(|e| {
            let ann_path = e
                .annotation
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("positive entry {} has no annotation", e.image)))?;
            let gt: AnnotationRecord = read_json(&root.join(ann_path))?;
            let rec: InterpretationRecord = read_json(&a.pred.join(format!("{}.interp", gt.image_id)))?;
            if rec.image_id != gt.image_id {
                return Err(Error::InvalidArgument(format!(
                    "interpretation for `{}` names image `{}`",
                    gt.image_id, rec.image_id
                ))
                .into());
            }
            let assignment = rec.to_assignment(&schema)?;
            Ok((gt, (rec.image_id, assignment)))
        })
        .collect::<CliResult<_>>()?;
    let (gt, preds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let metrics = evaluate_dataset(&preds, &gt, &schema, &eval_config(a.theta))?;
    let out = a.out.unwrap_or(a.pred);
    write_metrics(&out, "metrics", &metrics)?;
    println!(
        "{} images: mean error {:.4}, fraction correct {:.4}",
        metrics.image_count, metrics.mean_error, metrics.fraction_correct
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let (schema, data) = load_experiments(std::slice::from_ref(&a.manifest), &a.schema, LibraryTier::Full)?;
    let (full, reduced, report) = run_ablation(&data, &schema, &a.training.config(), &eval_config(a.theta))?;
    full.model.save(&a.out.join("full.interp"))?;
    reduced.model.save(&a.out.join("reduced.interp"))?;
    write_metrics(&a.out, "full_metrics", &full.metrics)?;
    write_metrics(&a.out, "reduced_metrics", &reduced.metrics)?;
    write_json(&a.out.join("ablation.json"), &report)?;
    let c = &report.comparison;
    println!(
        "fraction correct: full {:.4}, reduced {:.4}, ratio {}",
        c.full_fraction_correct,
        c.reduced_fraction_correct,
        c.ratio.map_or("undefined".to_string(), |r| format!("{r:.4}"))
    );
    Ok(())
}
