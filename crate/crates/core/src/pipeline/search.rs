use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_candidate_pool, CandidatePool};
use crate::edgemap::{compute_edge_map, Bridge, Corridor, EdgeMap};
use crate::error::{Error, Result};
use crate::forest::predict;
use crate::geometry::{LocalRegionImage, Primitive, PrimitiveType, Vec2};
use crate::relations::{evaluate_descriptor, push_features, RelationContext, RelationKind};

use super::{Assignment, TrainedModel};

/// A gate-passing candidate for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotCandidate {
    pub primitive: Primitive,
    /// Identifies the underlying pool primitive; no two slots may share one.
    pub physical_id: usize,
}

/// Per-slot candidate lists (schema slot order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotCandidates {
    pub per_slot: Vec<Vec<SlotCandidate>>,
}

impl SlotCandidates {
    /// Keeps at most `n` candidates per slot (the first ones).
    pub fn truncated(&self, n: usize) -> Self {
        Self { per_slot: self.per_slot.iter().map(|c| c.iter().take(n).cloned().collect()).collect() }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.per_slot.iter().map(Vec::len).collect()
    }
}

/// Search statistics reported with an interpretation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Gate-passing candidates per slot, in schema order.
    pub candidate_counts: Vec<usize>,
    /// Beam size after each search depth.
    pub beam_sizes: Vec<usize>,
    /// Slot ids in search order.
    pub search_order: Vec<String>,
    pub scored_assignments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starved_slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation {
    pub assignment: Assignment,
    pub score: f64,
    /// Chosen candidate index per slot (schema order).
    pub choice: Vec<usize>,
    pub vector: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Filters and orients pool candidates for each slot through the gate.
pub fn prepare_slot_candidates(pool: &CandidatePool, model: &TrainedModel) -> SlotCandidates {
    let np = pool.points.len();
    let nc = pool.contours.len();
    let per_slot = model
        .schema
        .slots
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            let all: Vec<SlotCandidate> = match slot.primitive_type {
                PrimitiveType::Point => pool
                    .points
                    .iter()
                    .enumerate()
                    .map(|(k, p)| SlotCandidate { primitive: p.clone().into(), physical_id: k })
                    .collect(),
                PrimitiveType::Contour => pool
                    .contours
                    .iter()
                    .enumerate()
                    .map(|(k, c)| SlotCandidate { primitive: model.gate.orient(i, c).into(), physical_id: np + k })
                    .collect(),
                PrimitiveType::Region => pool
                    .regions
                    .iter()
                    .enumerate()
                    .map(|(k, r)| SlotCandidate { primitive: r.clone().into(), physical_id: np + nc + k })
                    .collect(),
            };
            all.into_iter()
                .filter(|c| model.gate.slot_passes(i, c.primitive.reference_point()))
                .collect()
        })
        .collect();
    SlotCandidates { per_slot }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Descriptor(usize, [usize; 3]),
    Bridge([usize; 3]),
}

/// Evaluates relation vectors for many assignments over one candidate set,
/// sharing descriptor results between assignments.
pub(crate) struct Scorer<'a> {
    pub image: &'a LocalRegionImage,
    pub edges: &'a EdgeMap,
    pub cands: &'a SlotCandidates,
    pub model: &'a TrainedModel,
}

impl Scorer<'_> {
    fn key(&self, d: usize, choice: &[usize]) -> Key {
        let desc = &self.model.relation_schema.descriptors[d];
        let mut k = [usize::MAX; 3];
        match desc.kind {
            RelationKind::Bridging | RelationKind::BridgingCorridor => {
                for (j, &s) in desc.slot_indices.iter().enumerate() {
                    k[j] = self.cands.per_slot[s][choice[s]].physical_id;
                }
                Key::Bridge(k)
            }
            _ => {
                for (j, &s) in desc.slot_indices.iter().enumerate() {
                    k[j] = choice[s];
                }
                Key::Descriptor(d, k)
            }
        }
    }

    fn evaluate(&self, d: usize, choice: &[usize]) -> Result<Vec<f64>> {
        let desc = &self.model.relation_schema.descriptors[d];
        let prims: Vec<&Primitive> = desc.slot_indices.iter().map(|&s| &self.cands.per_slot[s][choice[s]].primitive).collect();
        let ctx = RelationContext {
            image: self.image,
            edges: self.edges,
            cover_tolerance: self.model.relation_schema.cover_tolerance,
        };
        evaluate_descriptor(desc, &prims, &ctx)
    }

    /// Relation vectors of complete choices (candidate index per slot).
    pub fn vectors(&self, choices: &[Vec<usize>]) -> Vec<Vec<f64>> {
        let n_desc = self.model.relation_schema.descriptors.len();
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut work: Vec<(usize, usize)> = Vec::new();
        let mut slots: Vec<Vec<usize>> = Vec::with_capacity(choices.len());
        for (ci, c) in choices.iter().enumerate() {
            let mut row = Vec::with_capacity(n_desc);
            for d in 0..n_desc {
                let k = self.key(d, c);
                let next = index.len();
                let slot = *index.entry(k).or_insert_with(|| {
                    work.push((d, ci));
                    next
                });
                row.push(slot);
            }
            slots.push(row);
        }
        // Corridor rasters are shared between bridging evaluations.
        let corridors = self.corridors(&work, choices);
        let results: Vec<Result<Vec<f64>>> = work
            .par_iter()
            .map(|&(d, ci)| {
                let desc = &self.model.relation_schema.descriptors[d];
                if matches!(desc.kind, RelationKind::Bridging | RelationKind::BridgingCorridor) {
                    self.bridge(d, &choices[ci], &corridors)
                } else {
                    self.evaluate(d, &choices[ci])
                }
            })
            .collect();
        slots
            .iter()
            .map(|row| {
                let mut v = Vec::with_capacity(self.model.relation_schema.total_length);
                for (d, &r) in row.iter().enumerate() {
                    push_features(&mut v, self.model.relation_schema.descriptors[d].feature_count, &results[r]);
                }
                v
            })
            .collect()
    }

    fn corridors(&self, work: &[(usize, usize)], choices: &[Vec<usize>]) -> HashMap<(usize, usize), Option<Corridor>> {
        let mut wanted: Vec<(usize, usize)> = Vec::new();
        for &(d, ci) in work {
            let desc = &self.model.relation_schema.descriptors[d];
            if desc.kind == RelationKind::BridgingCorridor {
                let s = desc.slot_indices[2];
                wanted.push((s, choices[ci][s]));
            }
        }
        wanted.sort_unstable();
        wanted.dedup();
        wanted
            .par_iter()
            .map(|&(s, k)| {
                let r = self.cands.per_slot[s][k].primitive.as_region().expect("corridor slot holds a region");
                let c = crate::relations::corridor_region_ok(r).then(|| Corridor::new(self.edges, r));
                ((s, k), c)
            })
            .collect()
    }

    fn bridge(&self, d: usize, choice: &[usize], corridors: &HashMap<(usize, usize), Option<Corridor>>) -> Result<Vec<f64>> {
        let desc = &self.model.relation_schema.descriptors[d];
        let s = &desc.slot_indices;
        let c1 = self.cands.per_slot[s[0]][choice[s[0]]].primitive.as_contour().expect("contour slot");
        let c2 = self.cands.per_slot[s[1]][choice[s[1]]].primitive.as_contour().expect("contour slot");
        let corridor = if desc.kind == RelationKind::BridgingCorridor {
            match &corridors[&(s[2], choice[s[2]])] {
                Some(c) => Some(c),
                None => return Err(crate::error::degenerate("region area is negligible")),
            }
        } else {
            None
        };
        if c1 == c2 {
            return Err(crate::error::invalid("bridging needs two distinct contours"));
        }
        let b: Bridge = crate::relations::bridge_endpoints(c1, c2, self.edges, corridor);
        Ok(vec![f64::from(u8::from(b.bridged)), b.cost_ratio])
    }
}

/// Reference points and per-slot margins of every candidate.
struct GateCache {
    refs: Vec<Vec<Vec2>>,
    margins: Vec<Vec<f64>>,
}

impl GateCache {
    fn new(cands: &SlotCandidates, model: &TrainedModel) -> Self {
        let refs: Vec<Vec<Vec2>> = cands
            .per_slot
            .iter()
            .map(|c| c.iter().map(|x| x.primitive.reference_point()).collect())
            .collect();
        let margins = refs
            .iter()
            .enumerate()
            .map(|(s, r)| r.iter().map(|p| model.gate.slots[s].margin(*p)).collect())
            .collect();
        Self { refs, margins }
    }
}

/// Slot visiting order: ascending training positional variance.
fn search_order(model: &TrainedModel) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.schema.slots.len()).collect();
    order.sort_by(|&a, &b| model.gate.slots[a].variance.total_cmp(&model.gate.slots[b].variance).then(a.cmp(&b)));
    order
}

/// Builds the candidate pool and runs the gated beam search.
pub fn interpret(image: &LocalRegionImage, model: &TrainedModel) -> Result<Interpretation> {
    interpret_with(image, model, model.training_meta.beam_width)
}

pub fn interpret_with(image: &LocalRegionImage, model: &TrainedModel, beam_width: usize) -> Result<Interpretation> {
    let edges = compute_edge_map(image, &model.edge_params)?;
    let pool = build_candidate_pool(image, &edges, &model.candidate_config)?;
    let cands = prepare_slot_candidates(&pool, model);
    interpret_with_pool(image, &edges, &cands, model, beam_width)
}

/// Beam search over prepared slot candidates.
pub fn interpret_with_pool(
    image: &LocalRegionImage,
    edges: &EdgeMap,
    cands: &SlotCandidates,
    model: &TrainedModel,
    beam_width: usize,
) -> Result<Interpretation> {
    let n = model.schema.slots.len();
    let beam_width = beam_width.max(1);
    let mut diag = Diagnostics { candidate_counts: cands.counts(), ..Default::default() };
    let order = search_order(model);
    diag.search_order = order.iter().map(|&s| model.schema.slots[s].id.clone()).collect();
    if let Some(s) = (0..n).find(|&s| cands.per_slot[s].is_empty()) {
        return Err(Error::NoInterpretation { slot: model.schema.slots[s].id.clone() });
    }
    let gc = GateCache::new(cands, model);

    // Entries: (margin, chosen candidate per depth).
    let mut beam: Vec<(f64, Vec<usize>)> = vec![(0.0, Vec::new())];
    for &slot in &order {
        let mut next: Vec<(f64, Vec<usize>)> = beam
            .par_iter()
            .flat_map_iter(|(margin, chosen)| {
                let gc = &gc;
                let order = &order;
                (0..cands.per_slot[slot].len()).filter_map(move |k| {
                    let pid = cands.per_slot[slot][k].physical_id;
                    let p = gc.refs[slot][k];
                    let mut m = margin + gc.margins[slot][k];
                    for (d, &c) in chosen.iter().enumerate() {
                        let s = order[d];
                        if cands.per_slot[s][c].physical_id == pid {
                            return None;
                        }
                        let q = gc.refs[s][c];
                        if !model.gate.pair_passes(s, q, slot, p) {
                            return None;
                        }
                        m += model.gate.pair_margin(s, q, slot, p);
                    }
                    let mut ch = chosen.clone();
                    ch.push(k);
                    Some((m, ch))
                })
            })
            .collect();
        next.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        next.truncate(beam_width);
        diag.beam_sizes.push(next.len());
        if next.is_empty() {
            diag.starved_slot = Some(model.schema.slots[slot].id.clone());
            return Err(Error::NoInterpretation { slot: model.schema.slots[slot].id.clone() });
        }
        beam = next;
    }

    let mut complete: Vec<Vec<usize>> = beam
        .into_iter()
        .map(|(_, chosen)| {
            let mut c = vec![0; n];
            for (d, k) in chosen.into_iter().enumerate() {
                c[order[d]] = k;
            }
            c
        })
        .collect();
    complete.sort();
    best_of(image, edges, cands, model, complete, diag)
}

/// Scores every complete choice and returns the argmax (ties: smallest choice).
fn best_of(
    image: &LocalRegionImage,
    edges: &EdgeMap,
    cands: &SlotCandidates,
    model: &TrainedModel,
    complete: Vec<Vec<usize>>,
    mut diag: Diagnostics,
) -> Result<Interpretation> {
    let scorer = Scorer { image, edges, cands, model };
    let vectors = scorer.vectors(&complete);
    let scores: Vec<f64> = vectors.par_iter().map(|v| predict(&model.forest, v)).collect::<Result<_>>()?;
    diag.scored_assignments = complete.len();
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let choice = complete[best].clone();
    let prims = choice
        .iter()
        .enumerate()
        .map(|(s, &k)| cands.per_slot[s][k].primitive.clone())
        .collect();
    let score = scores[best];
    Ok(Interpretation {
        assignment: Assignment::from_slots(&model.schema, prims, Some(score))?,
        score,
        choice,
        vector: vectors[best].clone(),
        diagnostics: diag,
    })
}

/// Exhaustive search over every gate-passing complete assignment.
pub fn brute_force_over(
    image: &LocalRegionImage,
    edges: &EdgeMap,
    cands: &SlotCandidates,
    model: &TrainedModel,
    max_per_slot: usize,
) -> Result<Interpretation> {
    const MAX_COMBINATIONS: f64 = 1e6;
    let n = model.schema.slots.len();
    for (s, c) in cands.per_slot.iter().enumerate() {
        if c.len() > max_per_slot {
            return Err(Error::BudgetExceeded(format!(
                "slot `{}` has {} candidates (limit {max_per_slot})",
                model.schema.slots[s].id,
                c.len()
            )));
        }
        if c.is_empty() {
            return Err(Error::NoInterpretation { slot: model.schema.slots[s].id.clone() });
        }
    }
    let total: f64 = cands.per_slot.iter().map(|c| c.len() as f64).product();
    if total > MAX_COMBINATIONS {
        return Err(Error::BudgetExceeded(format!("{total} combinations")));
    }
    let gc = GateCache::new(cands, model);
    let mut complete = Vec::new();
    let mut cur = Vec::with_capacity(n);
    enumerate(&mut cur, cands, model, &gc, &mut complete);
    if complete.is_empty() {
        return Err(Error::NoInterpretation { slot: model.schema.slots[n - 1].id.clone() });
    }
    let diag = Diagnostics {
        candidate_counts: cands.counts(),
        search_order: model.schema.slots.iter().map(|s| s.id.clone()).collect(),
        ..Default::default()
    };
    best_of(image, edges, cands, model, complete, diag)
}

fn enumerate(cur: &mut Vec<usize>, cands: &SlotCandidates, model: &TrainedModel, gc: &GateCache, out: &mut Vec<Vec<usize>>) {
    let slot = cur.len();
    if slot == cands.per_slot.len() {
        out.push(cur.clone());
        return;
    }
    for k in 0..cands.per_slot[slot].len() {
        let pid = cands.per_slot[slot][k].physical_id;
        let p = gc.refs[slot][k];
        let ok = cur.iter().enumerate().all(|(s, &c)| {
            cands.per_slot[s][c].physical_id != pid && model.gate.pair_passes(s, gc.refs[s][c], slot, p)
        });
        if ok {
            cur.push(k);
            enumerate(cur, cands, model, gc, out);
            cur.pop();
        }
    }
}

/// Uniformly random gate-passing complete choices, built slot by slot.
pub(crate) fn random_choices(
    cands: &SlotCandidates,
    model: &TrainedModel,
    count: usize,
    rng: &mut impl rand::Rng,
) -> Vec<Vec<usize>> {
    const ATTEMPTS: usize = 20;
    let n = cands.per_slot.len();
    if cands.per_slot.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let order = search_order(model);
    let gc = GateCache::new(cands, model);
    let mut out = Vec::new();
    for _ in 0..count {
        'attempt: for _ in 0..ATTEMPTS {
            let mut choice = vec![usize::MAX; n];
            for (d, &slot) in order.iter().enumerate() {
                let ok: Vec<usize> = (0..cands.per_slot[slot].len())
                    .filter(|&k| {
                        let pid = cands.per_slot[slot][k].physical_id;
                        order[..d].iter().all(|&s| {
                            let c = choice[s];
                            cands.per_slot[s][c].physical_id != pid
                                && model.gate.pair_passes(s, gc.refs[s][c], slot, gc.refs[slot][k])
                        })
                    })
                    .collect();
                if ok.is_empty() {
                    continue 'attempt;
                }
                choice[slot] = ok[rng.random_range(0..ok.len())];
            }
            out.push(choice);
            break;
        }
    }
    out
}
