//! Localization error metrics and the relation-library ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::formats::{default_version, AnnotationRecord};
use crate::geometry::{resample_contour, ContourPrimitive, Primitive};
use crate::pipeline::{Assignment, ModelSchema};

/// Error assigned to every slot of an image with no interpretation.
pub const MISSING_ERROR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_samples: usize,
    pub correct_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k_samples: 20, correct_threshold: 0.15 }
    }
}

/// Normalized localization error between two primitives of the same type.
pub fn primitive_error(pred: &Primitive, gt: &Primitive) -> Result<f64> {
    primitive_error_k(pred, gt, EvalConfig::default().k_samples)
}

pub fn primitive_error_k(pred: &Primitive, gt: &Primitive, k: usize) -> Result<f64> {
    let raw = match (pred, gt) {
        (Primitive::Point(a), Primitive::Point(b)) => a.position().dist(b.position()),
        (Primitive::Region(a), Primitive::Region(b)) => a.centroid().dist(b.centroid()),
        (Primitive::Contour(a), Primitive::Contour(b)) => {
            let sa = resample_contour(&canonical_orientation(a), k)?;
            let sb = resample_contour(&canonical_orientation(b), k)?;
            let fwd = sa.iter().zip(&sb).map(|(p, q)| p.dist(*q)).sum::<f64>() / k as f64;
            let rev = sa.iter().zip(sb.iter().rev()).map(|(p, q)| p.dist(*q)).sum::<f64>() / k as f64;
            fwd.min(rev)
        }
        _ => {
            return Err(invalid(format!(
                "cannot compare a {} with a {}",
                pred.primitive_type(),
                gt.primitive_type()
            )))
        }
    };
    Ok(raw / SQRT_2)
}

/// Traversal starting at the lexicographically smaller endpoint, so a contour
/// and its reversal resample to bit-identical points.
fn canonical_orientation(c: &ContourPrimitive) -> ContourPrimitive {
    let (f, l) = (c.first(), c.last());
    if (l.x, l.y) < (f.x, f.y) {
        c.reversed()
    } else {
        c.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot_id: String,
    pub mean_error: f64,
    pub fraction_correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub slots: Vec<SlotMetrics>,
    pub mean_error: f64,
    pub fraction_correct: f64,
    pub image_count: usize,
    pub correct_threshold: f64,
}

impl MetricsReport {
    /// Flat table with one row per slot and a final `overall` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("slot,mean_error,fraction_correct\n");
        for m in &self.slots {
            s.push_str(&format!("{},{},{}\n", m.slot_id, m.mean_error, m.fraction_correct));
        }
        s.push_str(&format!("overall,{},{}\n", self.mean_error, self.fraction_correct));
        s
    }

    pub fn from_csv(text: &str, image_count: usize, correct_threshold: f64) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("slot,mean_error,fraction_correct") {
            return Err(crate::Error::Parse("unexpected metrics table header".into()));
        }
        let mut slots = Vec::new();
        let mut overall = None;
        for line in lines.filter(|l| !l.is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(crate::Error::Parse(format!("bad metrics row `{line}`")));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| crate::Error::Parse(e.to_string()));
            let (e, f) = (parse(cols[1])?, parse(cols[2])?);
            if cols[0] == "overall" {
                overall = Some((e, f));
            } else {
                slots.push(SlotMetrics { slot_id: cols[0].to_string(), mean_error: e, fraction_correct: f });
            }
        }
        let (mean_error, fraction_correct) = overall.ok_or_else(|| crate::Error::Parse("missing overall row".into()))?;
        Ok(Self { format_version: default_version(), slots, mean_error, fraction_correct, image_count, correct_threshold })
    }
}

/// Scores predictions against ground truth, pooling all (slot, image) pairs.
///
/// Predictions are matched to annotations by image id; an empty assignment
/// counts as a missing interpretation.
pub fn evaluate_dataset(
    predictions: &[(String, Assignment)],
    ground_truth: &[AnnotationRecord],
    schema: &ModelSchema,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(invalid("no predictions to evaluate"));
    }
    if config.correct_threshold <= 0.0 {
        return Err(invalid("correct threshold must be positive"));
    }
    let gt: BTreeMap<&str, &AnnotationRecord> = ground_truth.iter().map(|a| (a.image_id.as_str(), a)).collect();
    let pred_ids: BTreeSet<&str> = predictions.iter().map(|(id, _)| id.as_str()).collect();
    if pred_ids.len() != predictions.len() || pred_ids.len() != gt.len() || pred_ids.iter().any(|id| !gt.contains_key(id)) {
        return Err(invalid("prediction and ground-truth image ids do not match"));
    }
    let n_slots = schema.slots.len();
    // Errors per slot in image-id order, so the result is permutation invariant.
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); n_slots];
    let by_id: BTreeMap<&str, &Assignment> = predictions.iter().map(|(id, a)| (id.as_str(), a)).collect();
    for (id, pred) in by_id {
        let truth = gt[id].primitives(schema)?;
        for (i, slot) in schema.slots.iter().enumerate() {
            let e = match pred.get(&slot.id) {
                Some(p) => primitive_error_k(p, &truth[i], config.k_samples)?.min(MISSING_ERROR),
                None => MISSING_ERROR,
            };
            errors[i].push(e);
        }
    }
    let n_img = predictions.len();
    let correct = |e: &f64| *e <= config.correct_threshold;
    let slots = schema
        .slots
        .iter()
        .zip(&errors)
        .map(|(s, e)| SlotMetrics {
            slot_id: s.id.clone(),
            mean_error: e.iter().sum::<f64>() / n_img as f64,
            fraction_correct: e.iter().filter(|x| correct(x)).count() as f64 / n_img as f64,
        })
        .collect();
    let all: Vec<f64> = errors.concat();
    Ok(MetricsReport {
        format_version: default_version(),
        slots,
        mean_error: all.iter().sum::<f64>() / all.len() as f64,
        fraction_correct: all.iter().filter(|x| correct(x)).count() as f64 / all.len() as f64,
        image_count: n_img,
        correct_threshold: config.correct_threshold,
    })
}

/// Ratio of correctly localized fractions; `None` when the reduced fraction is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub ratio: Option<f64>,
    pub full_fraction_correct: f64,
    pub reduced_fraction_correct: f64,
    pub slot_ratios: Vec<(String, Option<f64>)>,
}

impl AblationResult {
    pub fn is_undefined(&self) -> bool {
        self.ratio.is_none()
    }
}

pub fn ablation_compare(full: &MetricsReport, reduced: &MetricsReport) -> Result<AblationResult> {
    let ids = |r: &MetricsReport| r.slots.iter().map(|s| s.slot_id.clone()).collect::<Vec<_>>();
    if ids(full) != ids(reduced) {
        return Err(invalid("reports cover different slots"));
    }
    let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
    Ok(AblationResult {
        ratio: ratio(full.fraction_correct, reduced.fraction_correct),
        full_fraction_correct: full.fraction_correct,
        reduced_fraction_correct: reduced.fraction_correct,
        slot_ratios: full
            .slots
            .iter()
            .zip(&reduced.slots)
            .map(|(f, r)| (f.slot_id.clone(), ratio(f.fraction_correct, r.fraction_correct)))
            .collect(),
    })
}
