use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_candidate_pool, CandidateConfig, CandidatePool};
use crate::edgemap::{compute_edge_map, EdgeMap, EdgeParams};
use crate::error::{invalid, Error, Result};
use crate::evaluate::primitive_error;
use crate::forest::{train_forest, ForestConfig, TrainedForest};
use crate::formats::{default_version, AnnotationRecord, BindingLiteral};
use crate::geometry::{LocalRegionImage, Primitive};
use crate::relations::{build_relation_schema, compute_relation_vector, RelationSchema};

use super::search::{interpret_with_pool, prepare_slot_candidates, random_choices, Scorer, SlotCandidates};
use super::{GeometricGate, ModelSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Defaults to twice the number of positives.
    pub negatives_per_iteration: Option<usize>,
    pub beam_width: usize,
    pub seed: u64,
    pub accept_threshold: f64,
    pub forest: ForestConfig,
    pub edge_params: EdgeParams,
    pub candidate_config: CandidateConfig,
    /// Annotated slots are replaced by the best-matching candidate of their own
    /// image when it lies within this normalized error; `None` disables it.
    pub refine_tolerance: Option<f64>,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            iterations: 3,
            negatives_per_iteration: None,
            beam_width: 200,
            seed,
            accept_threshold: 0.5,
            forest: ForestConfig::new(seed),
            edge_params: EdgeParams::default(),
            candidate_config: CandidateConfig::default(),
            refine_tolerance: Some(0.1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.beam_width == 0 {
            return Err(invalid("iterations and beam width must be at least 1"));
        }
        self.edge_params.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations_run: usize,
    pub beam_width: usize,
    pub seed: u64,
    pub positive_count: usize,
    pub negative_image_count: usize,
    /// Negative vectors added at each iteration.
    pub negatives_per_iteration: Vec<usize>,
    /// Negative images that yielded no gate-passing assignment.
    pub starved_images: usize,
}

/// A complete learned interpretation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub schema: ModelSchema,
    pub relation_schema: RelationSchema,
    pub gate: GeometricGate,
    pub edge_params: EdgeParams,
    pub candidate_config: CandidateConfig,
    pub forest: TrainedForest,
    pub training_meta: TrainingMeta,
    pub accept_threshold: f64,
}

impl TrainedModel {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let expected = build_relation_schema(&self.schema, self.schema.relation_tier)?;
        if expected.descriptors != self.relation_schema.descriptors || expected.slots != self.relation_schema.slots {
            return Err(invalid("relation schema does not match the model schema"));
        }
        if self.forest.vector_length != self.relation_schema.total_length {
            return Err(invalid("forest input length does not match the relation schema"));
        }
        if self.gate.slots.len() != self.schema.slots.len() {
            return Err(invalid("gate does not match the model schema"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: TrainedModel = crate::formats::read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::formats::write_json(path, self)
    }
}

/// Negative vectors collected during training, per iteration.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub iteration_negatives: Vec<Vec<Vec<f64>>>,
    pub positive_vectors: Vec<Vec<f64>>,
}

fn images_by_id(images: &[LocalRegionImage]) -> HashMap<&str, &LocalRegionImage> {
    images.iter().map(|i| (i.id(), i)).collect()
}

/// One relation vector per annotation, computed directly from its primitives.
pub fn build_positive_vectors(
    annotations: &[AnnotationRecord],
    images: &[LocalRegionImage],
    schema: &ModelSchema,
    relation_schema: &RelationSchema,
    edge_params: &EdgeParams,
) -> Result<Vec<Vec<f64>>> {
    let by_id = images_by_id(images);
    annotations
        .par_iter()
        .map(|a| {
            let img = by_id.get(a.image_id.as_str()).ok_or_else(|| Error::UnknownImage(a.image_id.clone()))?;
            let assignment = a.to_assignment(schema)?;
            let edges = compute_edge_map(img, edge_params)?;
            Ok(compute_relation_vector(&assignment, img, &edges, relation_schema)?.values)
        })
        .collect()
}

/// Snaps each annotated slot to the closest candidate its image produces.
///
/// Training on candidate geometry keeps the positive vectors on the same
/// footing as the vectors scored at inference time.
pub fn refine_annotations(
    annotations: &[AnnotationRecord],
    images: &[LocalRegionImage],
    schema: &ModelSchema,
    edge_params: &EdgeParams,
    candidate_config: &CandidateConfig,
    tolerance: f64,
) -> Result<Vec<AnnotationRecord>> {
    let by_id = images_by_id(images);
    annotations
        .par_iter()
        .map(|a| {
            let img = by_id.get(a.image_id.as_str()).ok_or_else(|| Error::UnknownImage(a.image_id.clone()))?;
            let prims = a.primitives(schema)?;
            let edges = compute_edge_map(img, edge_params)?;
            let pool = build_candidate_pool(img, &edges, candidate_config)?;
            let mut out = a.clone();
            let mut changed = false;
            out.bindings = schema
                .slots
                .iter()
                .zip(&prims)
                .map(|(slot, gt)| {
                    let p = match closest_candidate(gt, &pool) {
                        Some((c, e)) if e <= tolerance => {
                            changed = true;
                            c
                        }
                        _ => gt.clone(),
                    };
                    BindingLiteral::from_primitive(&slot.id, &p)
                })
                .collect();
            out.refined = a.refined || changed;
            Ok(out)
        })
        .collect()
}

fn closest_candidate(gt: &Primitive, pool: &CandidatePool) -> Option<(Primitive, f64)> {
    let cands: Vec<Primitive> = match gt {
        Primitive::Point(_) => pool.points.iter().cloned().map(Primitive::from).collect(),
        Primitive::Contour(g) => pool
            .contours
            .iter()
            .map(|c| {
                let aligned = (c.last() - c.first()).dot(g.last() - g.first()) >= 0.0;
                Primitive::from(if aligned || c.is_closed() { c.clone() } else { c.reversed() })
            })
            .collect(),
        Primitive::Region(_) => pool.regions.iter().cloned().map(Primitive::from).collect(),
    };
    let mut best: Option<(Primitive, f64)> = None;
    for c in cands {
        if let Ok(e) = primitive_error(&c, gt) {
            if best.as_ref().is_none_or(|b| e < b.1) {
                best = Some((c, e));
            }
        }
    }
    best
}

/// Per-image data reused across training iterations.
struct Prepared {
    image: LocalRegionImage,
    edges: EdgeMap,
    cands: SlotCandidates,
}

fn prepare(images: &[LocalRegionImage], model: &TrainedModel) -> Result<Vec<Prepared>> {
    images
        .par_iter()
        .map(|img| {
            let edges = compute_edge_map(img, &model.edge_params)?;
            let pool = build_candidate_pool(img, &edges, &model.candidate_config)?;
            let cands = prepare_slot_candidates(&pool, model);
            Ok(Prepared { image: img.clone(), edges, cands })
        })
        .collect()
}

/// Iteration-0 negatives: random gate-passing assignments spread over the
/// images that admit at least one.
fn random_negatives(model: &TrainedModel, prepared: &[Prepared], m: usize, seed: u64) -> (Vec<Vec<f64>>, usize) {
    let rng_for = |i: usize| ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
    let viable: Vec<bool> = prepared
        .par_iter()
        .enumerate()
        .map(|(i, p)| !random_choices(&p.cands, model, 1, &mut rng_for(i)).is_empty())
        .collect();
    let n_viable = viable.iter().filter(|v| **v).count();
    let starved = prepared.len() - n_viable;
    if n_viable == 0 {
        return (Vec::new(), starved);
    }
    let per_image = m.div_ceil(n_viable).max(1);
    let drawn: Vec<Vec<Vec<f64>>> = prepared
        .par_iter()
        .enumerate()
        .filter(|(i, _)| viable[*i])
        .map(|(i, p)| {
            let choices = random_choices(&p.cands, model, per_image, &mut rng_for(i));
            Scorer { image: &p.image, edges: &p.edges, cands: &p.cands, model }.vectors(&choices)
        })
        .collect();
    let mut all: Vec<Vec<f64>> = drawn.into_iter().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(m);
    (all, starved)
}

/// Later iterations: the top-scoring interpretations over all negative images.
fn mined_negatives(model: &TrainedModel, prepared: &[Prepared], m: usize) -> (Vec<Vec<f64>>, usize) {
    let found: Vec<Option<(f64, Vec<f64>)>> = prepared
        .par_iter()
        .map(|p| {
            interpret_with_pool(&p.image, &p.edges, &p.cands, model, model.training_meta.beam_width)
                .ok()
                .map(|r| (r.score, r.vector))
        })
        .collect();
    let starved = found.iter().filter(|f| f.is_none()).count();
    let mut ranked: Vec<(usize, f64, Vec<f64>)> =
        found.into_iter().enumerate().filter_map(|(i, f)| f.map(|(s, v)| (i, s, v))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    (ranked.into_iter().take(m).map(|(_, _, v)| v).collect(), starved)
}

/// How negatives are drawn from negative images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeSampling {
    /// Random gate-passing assignments (no classifier needed).
    Random,
    /// Highest-scoring interpretations under the model's forest.
    TopScoring,
}

/// Draws `m` negative relation vectors from negative images.
pub fn sample_negative_vectors(
    model: &TrainedModel,
    negative_images: &[LocalRegionImage],
    m: usize,
    seed: u64,
    mode: NegativeSampling,
) -> Result<Vec<Vec<f64>>> {
    if negative_images.is_empty() {
        return Err(Error::NoNegativesAvailable);
    }
    let prepared = prepare(negative_images, model)?;
    let (v, _) = match mode {
        NegativeSampling::Random => random_negatives(model, &prepared, m, seed),
        NegativeSampling::TopScoring => mined_negatives(model, &prepared, m),
    };
    if v.is_empty() {
        return Err(Error::NoNegativesAvailable);
    }
    Ok(v)
}

fn fit(pos: &[Vec<f64>], neg: &[Vec<f64>], config: &ForestConfig) -> Result<TrainedForest> {
    let mut x: Vec<Vec<f64>> = pos.to_vec();
    x.extend(neg.iter().cloned());
    let mut y = vec![true; pos.len()];
    y.extend(std::iter::repeat_n(false, neg.len()));
    train_forest(&x, &y, config)
}

/// Full training loop with iterative hard-negative mining.
pub fn train_interpretation_model(
    annotations: &[AnnotationRecord],
    positive_images: &[LocalRegionImage],
    negative_images: &[LocalRegionImage],
    schema: &ModelSchema,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    schema.validate()?;
    config.validate()?;
    if annotations.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 annotations, got {}", annotations.len())));
    }
    if negative_images.is_empty() {
        return Err(Error::NoNegativesAvailable);
    }
    let refined = match config.refine_tolerance {
        Some(tol) => refine_annotations(
            annotations,
            positive_images,
            schema,
            &config.edge_params,
            &config.candidate_config,
            tol,
        )?,
        None => annotations.to_vec(),
    };
    let mut examples = Vec::with_capacity(2 * annotations.len());
    for a in annotations.iter().chain(&refined) {
        examples.push(a.primitives(schema)?);
    }
    let gate = GeometricGate::fit(&examples, schema.slots.len())?;
    let relation_schema = build_relation_schema(schema, schema.relation_tier)?;
    let positives = build_positive_vectors(&refined, positive_images, schema, &relation_schema, &config.edge_params)?;
    let m = config.negatives_per_iteration.unwrap_or(2 * positives.len()).max(1);

    let mut model = TrainedModel {
        format_version: default_version(),
        schema: schema.clone(),
        forest: TrainedForest { trees: Vec::new(), config: config.forest.clone(), vector_length: relation_schema.total_length },
        relation_schema,
        gate,
        edge_params: config.edge_params.clone(),
        candidate_config: config.candidate_config.clone(),
        training_meta: TrainingMeta {
            iterations_run: 0,
            beam_width: config.beam_width,
            seed: config.seed,
            positive_count: positives.len(),
            negative_image_count: negative_images.len(),
            negatives_per_iteration: Vec::new(),
            starved_images: 0,
        },
        accept_threshold: config.accept_threshold,
    };
    let prepared = prepare(negative_images, &model)?;
    let mut report = TrainReport { positive_vectors: positives.clone(), ..Default::default() };

    let (first, starved) = random_negatives(&model, &prepared, m, config.seed);
    if first.is_empty() {
        return Err(Error::NoNegativesAvailable);
    }
    model.training_meta.starved_images = starved;
    let mut negatives = first.clone();
    model.training_meta.negatives_per_iteration.push(first.len());
    report.iteration_negatives.push(first);
    model.forest = fit(&positives, &negatives, &config.forest)?;
    model.training_meta.iterations_run = 1;

    for _ in 1..config.iterations {
        let (mined, starved) = mined_negatives(&model, &prepared, m);
        model.training_meta.starved_images = model.training_meta.starved_images.max(starved);
        negatives.extend(mined.iter().cloned());
        model.training_meta.negatives_per_iteration.push(mined.len());
        report.iteration_negatives.push(mined);
        model.forest = fit(&positives, &negatives, &config.forest)?;
        model.training_meta.iterations_run += 1;
    }
    Ok((model, report))
}
