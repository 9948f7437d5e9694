//! Procedural head-like scenes with exact ground truth, and the exhaustive
//! interpretation oracle.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::build_candidate_pool;
use crate::edgemap::compute_edge_map;
use crate::error::{invalid, Result};
use crate::formats::{default_version, save_image, write_json, AnnotationRecord, BindingLiteral, DatasetManifest, Label, ManifestEntry, Split};
use crate::geometry::{
    point_at_arc_length, point_in_polygon, point_polyline_distance, polyline_length, ContourPrimitive, LocalRegionImage,
    PointKind, PointPrimitive, Primitive, PrimitiveType, RegionPrimitive, Vec2,
};
use crate::pipeline::{brute_force_over, prepare_slot_candidates, Assignment, ModelSchema, SlotSpec, TrainedModel};
use crate::relations::LibraryTier;

pub const HEAD8: &str = "head8";

/// The eight-slot head schema.
pub fn head8_schema(tier: LibraryTier) -> ModelSchema {
    use PrimitiveType::*;
    let slot = |id: &str, name: &str, t| SlotSpec { id: id.into(), name: name.into(), primitive_type: t };
    ModelSchema {
        class_name: HEAD8.into(),
        slots: vec![
            slot("upper_head", "upper head contour", Contour),
            slot("lower_head", "lower head contour", Contour),
            slot("ear_front", "front ear contour", Contour),
            slot("ear_back", "back ear contour", Contour),
            slot("eye", "eye", Point),
            slot("nostril", "nostril", Point),
            slot("mouth", "mouth region", Region),
            slot("cheek", "cheek region", Region),
        ],
        relation_tier: tier,
    }
}

/// Looks up a shipped schema by name.
pub fn schema_by_name(name: &str, tier: LibraryTier) -> Result<ModelSchema> {
    match name {
        HEAD8 => Ok(head8_schema(tier)),
        other => Err(invalid(format!("unknown schema `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub crop_size: usize,
    /// Maximum absolute rotation (radians).
    pub rotation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Maximum absolute translation per axis (normalized).
    pub translation: f64,
    pub noise_sigma: f64,
    pub occlusion_probability: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            crop_size: 64,
            rotation: 0.2,
            scale_min: 0.8,
            scale_max: 1.25,
            translation: 0.1,
            noise_sigma: 0.03,
            occlusion_probability: 0.1,
            seed: 0,
        }
    }
}

impl SceneParams {
    /// No jitter, noise or occlusion: renders the canonical template.
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            translation: 0.0,
            noise_sigma: 0.0,
            occlusion_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.crop_size >= 32
            && self.rotation >= 0.0
            && self.scale_min > 0.0
            && self.scale_min <= self.scale_max
            && self.translation >= 0.0
            && self.noise_sigma >= 0.0
            && (0.0..=1.0).contains(&self.occlusion_probability);
        if ok {
            Ok(())
        } else {
            Err(invalid("invalid scene parameters"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: LocalRegionImage,
    pub annotation: AnnotationRecord,
    pub params_used: SceneParams,
}

const BACKGROUND: f64 = 0.9;
const STROKE: f64 = 0.15;
const STROKE_HALF_WIDTH: f64 = 1.25;
const MOUTH: f64 = 0.4;
const CHEEK: f64 = 0.7;
const EYE: f64 = 0.1;
const EYE_RADIUS: f64 = 2.0;
const NOSTRIL: f64 = 1.0;
const NOSTRIL_RADIUS: f64 = 1.5;
const OCCLUSION_PX: f64 = 3.0;
const TEMPLATE_SHRINK: f64 = 0.8;
const MARGIN: f64 = 0.03;

/// Scene geometry in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
struct Parts {
    contours: [Vec<Vec2>; 4],
    eye: Vec2,
    nostril: Vec2,
    mouth: Vec<Vec2>,
    cheek: Vec<Vec2>,
}

fn bezier(p0: (f64, f64), c: (f64, f64), p1: (f64, f64), n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let u = 1.0 - t;
            Vec2::new(u * u * p0.0 + 2.0 * u * t * c.0 + t * t * p1.0, u * u * p0.1 + 2.0 * u * t * c.1 + t * t * p1.1)
        })
        .collect()
}

fn template() -> Parts {
    let shrink = |p: Vec2| Vec2::new(0.5 + TEMPLATE_SHRINK * (p.x - 0.5), 0.5 + TEMPLATE_SHRINK * (p.y - 0.5));
    let poly = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| shrink(Vec2::new(x, y))).collect::<Vec<_>>();
    let curve = |p0, c, p1| bezier(p0, c, p1, 12).into_iter().map(shrink).collect::<Vec<_>>();
    Parts {
        contours: [
            curve((0.85, 0.38), (0.55, 0.26), (0.30, 0.48)),
            curve((0.85, 0.85), (0.55, 0.86), (0.31, 0.65)),
            curve((0.62, 0.24), (0.57, 0.14), (0.56, 0.02)),
            curve((0.74, 0.27), (0.78, 0.16), (0.79, 0.04)),
        ],
        eye: shrink(Vec2::new(0.58, 0.59)),
        nostril: shrink(Vec2::new(0.23, 0.57)),
        mouth: poly(&[(0.22, 0.44), (0.34, 0.45), (0.36, 0.66), (0.24, 0.70), (0.17, 0.57)]),
        cheek: poly(&[(0.48, 0.52), (0.66, 0.48), (0.74, 0.62), (0.62, 0.74), (0.46, 0.68)]),
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Similarity transform about the image center.
#[derive(Clone, Copy)]
struct Pose {
    angle: f64,
    scale: f64,
    tx: f64,
    ty: f64,
}

impl Pose {
    fn is_identity(&self) -> bool {
        self.angle == 0.0 && self.scale == 1.0 && self.tx == 0.0 && self.ty == 0.0
    }

    fn apply(&self, p: Vec2, center: Vec2) -> Vec2 {
        if self.is_identity() {
            return p;
        }
        let d = p - center;
        let (s, c) = self.angle.sin_cos();
        Vec2::new(
            center.x + self.scale * (c * d.x - s * d.y) + self.tx,
            center.y + self.scale * (s * d.x + c * d.y) + self.ty,
        )
    }
}

impl Parts {
    fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Parts {
        Parts {
            contours: self.contours.clone().map(|c| c.into_iter().map(&f).collect()),
            eye: f(self.eye),
            nostril: f(self.nostril),
            mouth: self.mouth.iter().copied().map(&f).collect(),
            cheek: self.cheek.iter().copied().map(&f).collect(),
        }
    }

    fn all_points(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.contours
            .iter()
            .flatten()
            .copied()
            .chain([self.eye, self.nostril])
            .chain(self.mouth.iter().copied())
            .chain(self.cheek.iter().copied())
    }

    fn inside(&self, margin: f64) -> bool {
        self.all_points().all(|p| p.x >= margin && p.x <= 1.0 - margin && p.y >= margin && p.y <= 1.0 - margin)
    }

    fn primitives(&self) -> Result<Vec<Primitive>> {
        let mut out: Vec<Primitive> = Vec::with_capacity(8);
        for c in &self.contours {
            out.push(ContourPrimitive::open(c.clone())?.into());
        }
        out.push(PointPrimitive::new(self.eye, PointKind::Generic, 0.0)?.into());
        out.push(PointPrimitive::new(self.nostril, PointKind::Generic, 0.0)?.into());
        out.push(RegionPrimitive::new(self.mouth.clone())?.into());
        out.push(RegionPrimitive::new(self.cheek.clone())?.into());
        Ok(out)
    }
}

fn random_pose(rng: &mut ChaCha8Rng, p: &SceneParams) -> Pose {
    Pose {
        angle: uniform(rng, -p.rotation, p.rotation),
        scale: uniform(rng, p.scale_min, p.scale_max),
        tx: uniform(rng, -p.translation, p.translation),
        ty: uniform(rng, -p.translation, p.translation),
    }
}

/// Raster canvas with anti-aliased painting in pixel units.
struct Canvas {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Self { w: size, h: size, data: vec![BACKGROUND; size * size] }
    }

    fn px(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x * self.w as f64, p.y * self.h as f64)
    }

    fn paint(&mut self, x: usize, y: usize, value: f64, coverage: f64) {
        if coverage > 0.0 {
            let i = y * self.w + x;
            self.data[i] += (value - self.data[i]) * coverage.min(1.0);
        }
    }

    fn stroke(&mut self, poly: &[Vec2], value: f64, half_width: f64) {
        if poly.len() < 2 {
            return;
        }
        let pts: Vec<Vec2> = poly.iter().map(|p| self.px(*p)).collect();
        for y in 0..self.h {
            for x in 0..self.w {
                let d = point_polyline_distance(Vec2::new(x as f64, y as f64), &pts, false);
                self.paint(x, y, value, half_width + 0.5 - d);
            }
        }
    }

    fn fill(&mut self, poly: &[Vec2], value: f64, texture: (f64, f64, f64)) {
        let pts: Vec<Vec2> = poly.iter().map(|p| self.px(*p)).collect();
        for y in 0..self.h {
            for x in 0..self.w {
                let p = Vec2::new(x as f64, y as f64);
                let d = point_polyline_distance(p, &pts, true);
                let sd = if point_in_polygon(p, &pts) { d } else { -d };
                let tex = texture.0 * (texture.1 * x as f64 + texture.2 * y as f64).sin();
                self.paint(x, y, value + tex, 0.5 + sd);
            }
        }
    }

    fn disk(&mut self, c: Vec2, r: f64, value: f64) {
        let c = self.px(c);
        for y in 0..self.h {
            for x in 0..self.w {
                let d = Vec2::new(x as f64, y as f64).dist(c);
                self.paint(x, y, value, r + 0.5 - d);
            }
        }
    }

    fn finish(mut self, noise_sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if noise_sigma > 0.0 {
            let n = Normal::new(0.0, noise_sigma).expect("valid sigma");
            for v in &mut self.data {
                *v += n.sample(rng);
            }
        }
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect()
    }
}

/// Portion of a polyline between two arc lengths.
fn sub_polyline(v: &[Vec2], s0: f64, s1: f64) -> Vec<Vec2> {
    let mut out = vec![point_at_arc_length(v, false, s0)];
    let mut acc = 0.0;
    for w in v.windows(2) {
        acc += w[0].dist(w[1]);
        if acc > s0 && acc < s1 {
            out.push(w[1]);
        }
    }
    out.push(point_at_arc_length(v, false, s1));
    out.dedup();
    out
}

fn render(parts: &Parts, params: &SceneParams, rng: &mut ChaCha8Rng, occluded: Option<(usize, f64)>) -> Vec<f64> {
    let mut canvas = Canvas::new(params.crop_size);
    let tex = |rng: &mut ChaCha8Rng| (0.03, uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5));
    let t1 = tex(rng);
    let t2 = tex(rng);
    canvas.fill(&parts.mouth, MOUTH, t1);
    canvas.fill(&parts.cheek, CHEEK, t2);
    for (i, c) in parts.contours.iter().enumerate() {
        match occluded {
            Some((k, t)) if k == i => {
                let len = polyline_length(c, false);
                let gap = OCCLUSION_PX / params.crop_size as f64;
                let mid = t * len;
                canvas.stroke(&sub_polyline(c, 0.0, (mid - gap / 2.0).max(0.0)), STROKE, STROKE_HALF_WIDTH);
                canvas.stroke(&sub_polyline(c, (mid + gap / 2.0).min(len), len), STROKE, STROKE_HALF_WIDTH);
            }
            _ => canvas.stroke(c, STROKE, STROKE_HALF_WIDTH),
        }
    }
    canvas.disk(parts.eye, EYE_RADIUS, EYE);
    canvas.disk(parts.nostril, NOSTRIL_RADIUS, NOSTRIL);
    canvas.finish(params.noise_sigma, rng)
}

fn annotation(image_id: &str, prims: &[Primitive]) -> AnnotationRecord {
    let schema = head8_schema(LibraryTier::Full);
    AnnotationRecord {
        format_version: default_version(),
        image_id: image_id.to_string(),
        schema_name: HEAD8.into(),
        annotator: "synth".into(),
        refined: false,
        bindings: schema.slots.iter().zip(prims).map(|(s, p)| BindingLiteral::from_primitive(&s.id, p)).collect(),
    }
}

/// Renders one positive scene.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<SyntheticScene> {
    generate_scene_with_id(params, seed, &format!("scene_{seed}"))
}

pub fn generate_scene_with_id(params: &SceneParams, seed: u64, id: &str) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = template();
    let center = Vec2::new(0.5, 0.5);
    let mut parts = base.clone();
    for _ in 0..100 {
        let pose = random_pose(&mut rng, params);
        let candidate = base.map(|p| pose.apply(p, center));
        if candidate.inside(MARGIN) {
            parts = candidate;
            break;
        }
    }
    let occluded = (rng.random::<f64>() < params.occlusion_probability)
        .then(|| (rng.random_range(0..4), uniform(&mut rng, 0.3, 0.7)));
    let data = render(&parts, params, &mut rng, occluded);
    let image = LocalRegionImage::new(id, params.crop_size, params.crop_size, data)?;
    let prims = parts.primitives()?;
    Ok(SyntheticScene { image, annotation: annotation(id, &prims), params_used: SceneParams { seed, ..params.clone() } })
}

const PART_SHIFT: f64 = 0.04;
const PART_ROTATION: f64 = 0.5;

/// Scene whose parts are each displaced and rotated independently, so they sit
/// near their usual places without forming the configuration.
pub fn generate_shuffled_negative(params: &SceneParams, seed: u64, id: &str) -> Result<LocalRegionImage> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Vec2::new(0.5, 0.5);
    let pose = random_pose(&mut rng, params);
    let base = template().map(|p| pose.apply(p, center));
    let in_bounds = |p: &Vec2| p.x >= MARGIN && p.x <= 1.0 - MARGIN && p.y >= MARGIN && p.y <= 1.0 - MARGIN;
    let place = |rng: &mut ChaCha8Rng, pts: &[Vec2]| -> Vec<Vec2> {
        let c = pts.iter().fold(Vec2::new(0.0, 0.0), |a, p| a + *p) * (1.0 / pts.len() as f64);
        for _ in 0..100 {
            let part = Pose {
                angle: uniform(rng, -PART_ROTATION, PART_ROTATION),
                scale: uniform(rng, params.scale_min, params.scale_max),
                tx: uniform(rng, -PART_SHIFT, PART_SHIFT),
                ty: uniform(rng, -PART_SHIFT, PART_SHIFT),
            };
            let out: Vec<Vec2> = pts.iter().map(|p| part.apply(*p, c)).collect();
            if out.iter().all(in_bounds) {
                return out;
            }
        }
        pts.to_vec()
    };
    let contours = base.contours.clone().map(|c| place(&mut rng, &c));
    let mouth = place(&mut rng, &base.mouth);
    let cheek = place(&mut rng, &base.cheek);
    let eye = place(&mut rng, &[base.eye])[0];
    let nostril = place(&mut rng, &[base.nostril])[0];
    let parts = Parts { contours, eye, nostril, mouth, cheek };
    let data = render(&parts, params, &mut rng, None);
    LocalRegionImage::new(id, params.crop_size, params.crop_size, data)
}

/// Smooth random texture without the template's parts.
pub fn generate_texture_negative(params: &SceneParams, seed: u64, id: &str) -> Result<LocalRegionImage> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.crop_size;
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let angle = uniform(&mut rng, 0.0, std::f64::consts::PI);
            let freq = uniform(&mut rng, 0.05, 0.4);
            (uniform(&mut rng, 0.05, 0.15), freq * angle.cos(), freq * angle.sin(), uniform(&mut rng, 0.0, 6.3))
        })
        .collect();
    let base = uniform(&mut rng, 0.5, 0.8);
    let mut canvas = Canvas::new(n);
    for y in 0..n {
        for x in 0..n {
            canvas.data[y * n + x] =
                base + waves.iter().map(|(a, fx, fy, ph)| a * (fx * x as f64 + fy * y as f64 + ph).sin()).sum::<f64>();
        }
    }
    let data = canvas.finish(params.noise_sigma, &mut rng);
    LocalRegionImage::new(id, n, n, data)
}

/// A generated dataset held in memory.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub positives: Vec<SyntheticScene>,
    pub negatives: Vec<LocalRegionImage>,
    /// Split of each positive / negative, by index.
    pub positive_splits: Vec<Split>,
    pub negative_splits: Vec<Split>,
}

impl SyntheticDataset {
    pub fn train_positives(&self) -> impl Iterator<Item = &SyntheticScene> {
        self.positives.iter().zip(&self.positive_splits).filter(|(_, s)| **s == Split::Train).map(|(p, _)| p)
    }

    pub fn test_positives(&self) -> impl Iterator<Item = &SyntheticScene> {
        self.positives.iter().zip(&self.positive_splits).filter(|(_, s)| **s == Split::Test).map(|(p, _)| p)
    }

    pub fn negatives_in(&self, split: Split) -> impl Iterator<Item = &LocalRegionImage> {
        self.negatives.iter().zip(&self.negative_splits).filter(move |(_, s)| **s == split).map(|(p, _)| p)
    }

    /// Writes images, annotations and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir.join("images"))?;
        std::fs::create_dir_all(dir.join("annotations"))?;
        let mut entries = Vec::new();
        for (s, split) in self.positives.iter().zip(&self.positive_splits) {
            let image = format!("images/{}.png", s.image.id());
            let ann = format!("annotations/{}.json", s.image.id());
            save_image(&dir.join(&image), &s.image)?;
            write_json(&dir.join(&ann), &s.annotation)?;
            entries.push(ManifestEntry { image, annotation: Some(ann), label: Label::Positive, split: *split });
        }
        for (img, split) in self.negatives.iter().zip(&self.negative_splits) {
            let image = format!("images/{}.png", img.id());
            save_image(&dir.join(&image), img)?;
            entries.push(ManifestEntry { image, annotation: None, label: Label::Negative, split: *split });
        }
        let manifest = DatasetManifest { format_version: default_version(), schema_name: HEAD8.into(), entries };
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

/// Positives and negatives (half shuffled-part, half texture), split 50/50.
pub fn generate_dataset(n_pos: usize, n_neg: usize, params: &SceneParams, seed: u64) -> Result<SyntheticDataset> {
    if n_pos == 0 || n_neg == 0 {
        return Err(invalid("dataset needs at least one positive and one negative"));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_seeds: Vec<u64> = (0..n_pos).map(|_| rng.random()).collect();
    let neg_seeds: Vec<u64> = (0..n_neg).map(|_| rng.random()).collect();
    let positives = pos_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| generate_scene_with_id(params, s, &format!("pos_{i:05}")))
        .collect::<Result<Vec<_>>>()?;
    let negatives = neg_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let id = format!("neg_{i:05}");
            if i % 2 == 0 {
                generate_shuffled_negative(params, s, &id)
            } else {
                generate_texture_negative(params, s, &id)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let split = |n: usize| (0..n).map(|i| if i < n.div_ceil(2) { Split::Train } else { Split::Test }).collect();
    Ok(SyntheticDataset { positives, negatives, positive_splits: split(n_pos), negative_splits: split(n_neg) })
}

/// Exhaustive argmax over gate-passing assignments.
pub fn brute_force_interpret(image: &LocalRegionImage, model: &TrainedModel, max_per_slot: usize) -> Result<(Assignment, f64)> {
    let edges = compute_edge_map(image, &model.edge_params)?;
    let pool = build_candidate_pool(image, &edges, &model.candidate_config)?;
    let cands = prepare_slot_candidates(&pool, model);
    let r = brute_force_over(image, &edges, &cands, model, max_per_slot)?;
    Ok((r.assignment, r.score))
}
