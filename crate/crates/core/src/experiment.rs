//! Train-and-evaluate runs over a split dataset, including the tier ablation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evaluate::{ablation_compare, evaluate_dataset, AblationResult, EvalConfig, MetricsReport};
use crate::formats::{default_version, load_image, read_json, AnnotationRecord, DatasetManifest, Label, Split};
use crate::geometry::LocalRegionImage;
use crate::pipeline::{interpret, train_interpretation_model, Assignment, ModelSchema, TrainConfig, TrainReport, TrainedModel};
use crate::relations::LibraryTier;
use crate::synth::SyntheticDataset;

/// Images and annotations grouped by label and split.
#[derive(Debug, Clone, Default)]
pub struct ExperimentData {
    pub train_annotations: Vec<AnnotationRecord>,
    pub train_positives: Vec<LocalRegionImage>,
    pub train_negatives: Vec<LocalRegionImage>,
    pub test_annotations: Vec<AnnotationRecord>,
    pub test_positives: Vec<LocalRegionImage>,
    pub test_negatives: Vec<LocalRegionImage>,
}

impl ExperimentData {
    pub fn from_synthetic(d: &SyntheticDataset) -> Self {
        Self {
            train_annotations: d.train_positives().map(|s| s.annotation.clone()).collect(),
            train_positives: d.train_positives().map(|s| s.image.clone()).collect(),
            train_negatives: d.negatives_in(Split::Train).cloned().collect(),
            test_annotations: d.test_positives().map(|s| s.annotation.clone()).collect(),
            test_positives: d.test_positives().map(|s| s.image.clone()).collect(),
            test_negatives: d.negatives_in(Split::Test).cloned().collect(),
        }
    }

    /// Loads every manifest entry; image ids are file stems.
    pub fn load(manifest_path: &Path) -> Result<(DatasetManifest, Self)> {
        let manifest: DatasetManifest = read_json(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let loaded: Vec<(Label, Split, LocalRegionImage, Option<AnnotationRecord>)> = manifest
            .entries
            .par_iter()
            .map(|e| {
                let path = root.join(&e.image);
                let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or(&e.image).to_string();
                let img = load_image(&path, &id)?;
                let ann = match &e.annotation {
                    Some(a) => {
                        let rec: AnnotationRecord = read_json(&root.join(a))?;
                        if rec.image_id != id {
                            return Err(invalid(format!("annotation {a} names image `{}`, expected `{id}`", rec.image_id)));
                        }
                        Some(rec)
                    }
                    None if e.label == Label::Positive => {
                        return Err(invalid(format!("positive entry {} has no annotation", e.image)))
                    }
                    None => None,
                };
                Ok((e.label, e.split, img, ann))
            })
            .collect::<Result<_>>()?;
        let mut d = Self::default();
        for (label, split, img, ann) in loaded {
            match (label, split) {
                (Label::Positive, Split::Train) => {
                    d.train_annotations.extend(ann);
                    d.train_positives.push(img);
                }
                (Label::Positive, Split::Test) => {
                    d.test_annotations.extend(ann);
                    d.test_positives.push(img);
                }
                (Label::Negative, Split::Train) => d.train_negatives.push(img),
                (Label::Negative, Split::Test) => d.test_negatives.push(img),
            }
        }
        Ok((manifest, d))
    }
}

/// Interprets each image, with an empty assignment where none is found.
pub fn interpret_all(images: &[LocalRegionImage], model: &TrainedModel) -> Vec<(String, Assignment)> {
    images
        .par_iter()
        .map(|img| (img.id().to_string(), interpret(img, model).map(|r| r.assignment).unwrap_or_default()))
        .collect()
}

/// One trained tier with its test-split metrics.
#[derive(Debug, Clone)]
pub struct TierRun {
    pub model: TrainedModel,
    pub report: TrainReport,
    pub predictions: Vec<(String, Assignment)>,
    pub metrics: MetricsReport,
}

pub fn run_tier(
    data: &ExperimentData,
    schema: &ModelSchema,
    tier: LibraryTier,
    train: &TrainConfig,
    eval: &EvalConfig,
) -> Result<TierRun> {
    let schema = schema.with_tier(tier);
    let (model, report) =
        train_interpretation_model(&data.train_annotations, &data.train_positives, &data.train_negatives, &schema, train)?;
    let predictions = interpret_all(&data.test_positives, &model);
    let metrics = evaluate_dataset(&predictions, &data.test_annotations, &schema, eval)?;
    Ok(TierRun { model, report, predictions, metrics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub full: MetricsReport,
    pub reduced: MetricsReport,
    pub comparison: AblationResult,
}

impl AblationReport {
    pub fn new(full: &MetricsReport, reduced: &MetricsReport) -> Result<Self> {
        let comparison = ablation_compare(full, reduced)?;
        Ok(Self { format_version: default_version(), full: full.clone(), reduced: reduced.clone(), comparison })
    }
}

/// Trains and evaluates the full and reduced tiers on the same data.
pub fn run_ablation(
    data: &ExperimentData,
    schema: &ModelSchema,
    train: &TrainConfig,
    eval: &EvalConfig,
) -> Result<(TierRun, TierRun, AblationReport)> {
    let full = run_tier(data, schema, LibraryTier::Full, train, eval)?;
    let reduced = run_tier(data, schema, LibraryTier::Reduced, train, eval)?;
    let report = AblationReport::new(&full.metrics, &reduced.metrics)?;
    Ok((full, reduced, report))
}
