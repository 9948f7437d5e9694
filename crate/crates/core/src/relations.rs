//! The relation library and fixed-layout relation vectors.
//!
//! A [`RelationSchema`] enumerates every relation evaluated for a model: unary
//! properties per slot, displacements between slots, the binary contact
//! relations (cover, containment, ends-in, continuity, parallelism) and the
//! edge-map bridging relations. Each feature is emitted together with a
//! validity flag so undefined relations stay distinguishable from zeros.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::edgemap::{bridge_with, Bridge, Corridor, EdgeMap};
use crate::error::{degenerate, invalid, Error, Result};
use crate::geometry::{
    curvature_profile, point_in_polygon, point_polyline_distance, polygon_second_moments, principal_orientation,
    ContourPrimitive, LocalRegionImage, PointPrimitive, Primitive, PrimitiveType, RegionPrimitive, Vec2,
};
use crate::pipeline::{Assignment, ModelSchema};

/// Default distance below which a point counts as covered by a contour.
pub const DEFAULT_COVER_TOLERANCE: f64 = 0.03;

/// Offset of the intensity bands on either side of a contour (pixels).
const BAND_OFFSET: f64 = 2.0;

/// Regions smaller than this (normalized area) are degenerate for relations.
const MIN_REGION_AREA: f64 = 1e-8;

/// Which relation a descriptor evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Unary,
    Displacement,
    Cover,
    Containment,
    EndsIn,
    Continuity,
    Parallelism,
    Bridging,
    BridgingCorridor,
}

impl RelationKind {
    pub fn tier(self) -> RelationTier {
        match self {
            RelationKind::Unary | RelationKind::Displacement => RelationTier::Simple,
            _ => RelationTier::Compound,
        }
    }
}

/// Complexity class of a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelationTier {
    Simple,
    Compound,
}

/// Relation library selection: everything, or unary + displacement only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LibraryTier {
    Full,
    Reduced,
}

impl std::str::FromStr for LibraryTier {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(LibraryTier::Full),
            "reduced" => Ok(LibraryTier::Reduced),
            other => Err(invalid(format!("unknown tier `{other}`"))),
        }
    }
}

/// One relation applied to an ordered tuple of slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDescriptor {
    #[serde(rename = "name")]
    pub kind: RelationKind,
    pub arity: usize,
    pub slot_indices: Vec<usize>,
    pub feature_count: usize,
    pub tier: RelationTier,
}

/// Slot signature recorded inside a relation schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSignature {
    pub slot_id: String,
    pub primitive_type: PrimitiveType,
}

/// Ordered descriptor list defining the relation-vector layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct RelationSchema {
    pub slots: Vec<SlotSignature>,
    pub cover_tolerance: f64,
    pub descriptors: Vec<RelationDescriptor>,
    pub total_length: usize,
}

#[derive(Deserialize)]
struct RawSchema {
    slots: Vec<SlotSignature>,
    cover_tolerance: f64,
    descriptors: Vec<RelationDescriptor>,
    total_length: usize,
}

impl TryFrom<RawSchema> for RelationSchema {
    type Error = Error;
    fn try_from(raw: RawSchema) -> Result<Self> {
        let s = RelationSchema {
            slots: raw.slots,
            cover_tolerance: raw.cover_tolerance,
            descriptors: raw.descriptors,
            total_length: raw.total_length,
        };
        s.validate()?;
        Ok(s)
    }
}

impl RelationSchema {
    fn validate(&self) -> Result<()> {
        let sum: usize = self.descriptors.iter().map(|d| d.feature_count).sum();
        if sum * 2 != self.total_length {
            return Err(invalid("relation schema total_length is inconsistent"));
        }
        for d in &self.descriptors {
            if d.slot_indices.len() != d.arity || d.slot_indices.iter().any(|&i| i >= self.slots.len()) {
                return Err(invalid("relation descriptor references unknown slots"));
            }
            let types: Vec<PrimitiveType> = d.slot_indices.iter().map(|&i| self.slots[i].primitive_type).collect();
            if !signature_ok(d.kind, &types) || d.feature_count != feature_count(d.kind, &types) {
                return Err(invalid(format!("descriptor {:?} does not fit its slot types", d.kind)));
            }
        }
        Ok(())
    }

    /// Offset of each descriptor's first entry in the vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.descriptors
            .iter()
            .map(|d| {
                let o = off;
                off += 2 * d.feature_count;
                o
            })
            .collect()
    }
}

/// Fixed-length relation encoding of one complete assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationVector {
    pub values: Vec<f64>,
}

impl RelationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn signature_ok(kind: RelationKind, t: &[PrimitiveType]) -> bool {
    use PrimitiveType::*;
    match kind {
        RelationKind::Unary => t.len() == 1,
        RelationKind::Displacement => t.len() == 2,
        RelationKind::Cover => t == [Point, Contour],
        RelationKind::Containment => t.len() == 2 && t[0] != Region && t[1] == Region,
        RelationKind::EndsIn => t == [Contour, Region],
        RelationKind::Continuity | RelationKind::Parallelism | RelationKind::Bridging => t == [Contour, Contour],
        RelationKind::BridgingCorridor => t == [Contour, Contour, Region],
    }
}

fn feature_count(kind: RelationKind, t: &[PrimitiveType]) -> usize {
    match kind {
        RelationKind::Unary => match t[0] {
            PrimitiveType::Point => 3,
            PrimitiveType::Contour => 7,
            PrimitiveType::Region => 6,
        },
        RelationKind::Displacement => 3,
        _ => 2,
    }
}

fn descriptor(kind: RelationKind, slots: Vec<usize>, types: &[PrimitiveType]) -> RelationDescriptor {
    let t: Vec<PrimitiveType> = slots.iter().map(|&i| types[i]).collect();
    RelationDescriptor {
        kind,
        arity: slots.len(),
        feature_count: feature_count(kind, &t),
        slot_indices: slots,
        tier: kind.tier(),
    }
}

/// Enumerates the relation descriptors for a model.
pub fn build_relation_schema(model: &ModelSchema, tier: LibraryTier) -> Result<RelationSchema> {
    build_relation_schema_with(model, tier, DEFAULT_COVER_TOLERANCE)
}

pub fn build_relation_schema_with(model: &ModelSchema, tier: LibraryTier, cover_tolerance: f64) -> Result<RelationSchema> {
    if model.slots.is_empty() {
        return Err(invalid("model has no slots"));
    }
    use PrimitiveType::*;
    let types: Vec<PrimitiveType> = model.slots.iter().map(|s| s.primitive_type).collect();
    let n = types.len();
    let of = |t: PrimitiveType| -> Vec<usize> { (0..n).filter(|&i| types[i] == t).collect() };
    let mut d = Vec::new();
    for i in 0..n {
        d.push(descriptor(RelationKind::Unary, vec![i], &types));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d.push(descriptor(RelationKind::Displacement, vec![i, j], &types));
            }
        }
    }
    if tier == LibraryTier::Full {
        for p in of(Point) {
            for c in of(Contour) {
                d.push(descriptor(RelationKind::Cover, vec![p, c], &types));
            }
        }
        for x in (0..n).filter(|&i| types[i] != Region) {
            for r in of(Region) {
                d.push(descriptor(RelationKind::Containment, vec![x, r], &types));
            }
        }
        for c in of(Contour) {
            for r in of(Region) {
                d.push(descriptor(RelationKind::EndsIn, vec![c, r], &types));
            }
        }
        let contours = of(Contour);
        let pairs: Vec<(usize, usize)> = contours
            .iter()
            .enumerate()
            .flat_map(|(k, &a)| contours[k + 1..].iter().map(move |&b| (a, b)))
            .collect();
        for &(a, b) in &pairs {
            d.push(descriptor(RelationKind::Continuity, vec![a, b], &types));
        }
        for &(a, b) in &pairs {
            d.push(descriptor(RelationKind::Parallelism, vec![a, b], &types));
        }
        for &(a, b) in &pairs {
            d.push(descriptor(RelationKind::Bridging, vec![a, b], &types));
        }
        for &(a, b) in &pairs {
            for r in of(Region) {
                d.push(descriptor(RelationKind::BridgingCorridor, vec![a, b, r], &types));
            }
        }
    }
    let total_length = d.iter().map(|x| 2 * x.feature_count).sum();
    Ok(RelationSchema {
        slots: model
            .slots
            .iter()
            .map(|s| SlotSignature { slot_id: s.id.clone(), primitive_type: s.primitive_type })
            .collect(),
        cover_tolerance,
        descriptors: d,
        total_length,
    })
}

// ---------------------------------------------------------------------------
// Individual relations

/// `(dx, dy, distance)` between the reference points of `a` and `b`.
pub fn rel_displacement(a: &Primitive, b: &Primitive) -> [f64; 3] {
    let pa = a.reference_point();
    let pb = b.reference_point();
    let d = pb - pa;
    [d.x, d.y, d.norm()]
}

/// Whether a contour passes within `tolerance` of a point, and how close it gets.
pub fn rel_cover(p: &PointPrimitive, c: &ContourPrimitive, tolerance: f64) -> (bool, f64) {
    let d = point_polyline_distance(p.position(), c.vertices(), c.is_closed());
    (d <= tolerance, d)
}

/// Fraction of a point or contour strictly inside a region, and the signed
/// boundary distance of its reference point (positive inside).
pub fn rel_containment(x: &Primitive, r: &RegionPrimitive) -> Result<(f64, f64)> {
    check_region(r)?;
    let fraction = match x {
        Primitive::Point(p) => f64::from(u8::from(r.contains(p.position()))),
        Primitive::Contour(c) => {
            let s = c.canonical_samples();
            s.iter().filter(|p| r.contains(**p)).count() as f64 / s.len() as f64
        }
        Primitive::Region(_) => return Err(invalid("containment takes a point or contour")),
    };
    Ok((fraction, r.signed_boundary_distance(x.reference_point())))
}

/// Per-endpoint containment of an open contour; closed contours give `(false, false)`.
pub fn rel_ends_in(c: &ContourPrimitive, r: &RegionPrimitive) -> (bool, bool) {
    if c.is_closed() {
        return (false, false);
    }
    (r.contains(c.first()), r.contains(c.last()))
}

/// Gap and tangent deviation at the closest pair of endpoints.
///
/// The angle compares the outgoing direction of the first contour with the
/// incoming direction of the second, so a smooth continuation gives zero.
pub fn rel_continuity(c1: &ContourPrimitive, c2: &ContourPrimitive) -> Result<(f64, f64)> {
    if c1.is_closed() || c2.is_closed() {
        return Err(invalid("continuity needs open contours"));
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for e1 in [End::First, End::Last] {
        for e2 in [End::First, End::Last] {
            let gap = e1.point(c1).dist(e2.point(c2));
            let out1 = e1.outward(c1);
            let in2 = e2.outward(c2) * -1.0;
            let angle = vector_angle(out1, in2);
            if (gap, angle) < best {
                best = (gap, angle);
            }
        }
    }
    Ok(best)
}

/// Orientation difference in `[0, π/2]` and spread of mutual sample distances.
pub fn rel_parallelism(c1: &ContourPrimitive, c2: &ContourPrimitive) -> Result<(f64, f64)> {
    let o1 = principal_orientation(c1)?;
    let o2 = principal_orientation(c2)?;
    let d = (o1 - o2).abs().rem_euclid(PI);
    let angle = d.min(PI - d);
    let mut dists: Vec<f64> = c1
        .canonical_samples()
        .iter()
        .map(|p| point_polyline_distance(*p, c2.vertices(), c2.is_closed()))
        .collect();
    dists.extend(
        c2.canonical_samples()
            .iter()
            .map(|p| point_polyline_distance(*p, c1.vertices(), c1.is_closed())),
    );
    Ok((angle, std_dev(&dists)))
}

/// Best bridge over the four endpoint pairs of two contours, optionally
/// confined to a corridor region.
pub fn rel_bridging(
    c1: &ContourPrimitive,
    c2: &ContourPrimitive,
    edges: &EdgeMap,
    corridor: Option<&RegionPrimitive>,
) -> Result<Bridge> {
    if std::ptr::eq(c1, c2) || c1 == c2 {
        return Err(invalid("bridging needs two distinct contours"));
    }
    let corridor = corridor.map(|r| Corridor::new(edges, r));
    Ok(bridge_endpoints(c1, c2, edges, corridor.as_ref()))
}

pub(crate) fn bridge_endpoints(c1: &ContourPrimitive, c2: &ContourPrimitive, edges: &EdgeMap, corridor: Option<&Corridor>) -> Bridge {
    let px = |p: Vec2| -> (usize, usize) {
        let x = (p.x * edges.width() as f64).round().clamp(0.0, (edges.width() - 1) as f64);
        let y = (p.y * edges.height() as f64).round().clamp(0.0, (edges.height() - 1) as f64);
        (x as usize, y as usize)
    };
    let mut best: Option<Bridge> = None;
    for a in [c1.first(), c1.last()] {
        for b in [c2.first(), c2.last()] {
            let (pa, pb) = (px(a), px(b));
            let r = if pa == pb { Bridge { bridged: true, cost_ratio: 1.0 } } else { bridge_with(edges, pa, pb, corridor) };
            if best.is_none_or(|bb| r.cost_ratio < bb.cost_ratio) {
                best = Some(r);
            }
        }
    }
    best.expect("four endpoint pairs")
}

/// Shape and texture properties of a single primitive.
///
/// * point: `(x, y, strength)`
/// * contour: `(mean x, mean y, length, mean |κ|, std κ, left band, right band)`
/// * region: `(centroid x, centroid y, area, mean intensity, intensity std, aspect ratio)`
pub fn unary_features(p: &Primitive, image: &LocalRegionImage) -> Result<Vec<f64>> {
    if p.coordinates().iter().any(|v| !(0.0..=1.0).contains(&v.x) || !(0.0..=1.0).contains(&v.y)) {
        return Err(invalid("primitive lies outside the image"));
    }
    match p {
        Primitive::Point(pt) => Ok(vec![pt.position().x, pt.position().y, pt.strength()]),
        Primitive::Contour(c) => contour_unary(c, image),
        Primitive::Region(r) => region_unary(r, image),
    }
}

fn contour_unary(c: &ContourPrimitive, image: &LocalRegionImage) -> Result<Vec<f64>> {
    let s = c.canonical_samples();
    let n = s.len() as f64;
    let mx = s.iter().map(|p| p.x).sum::<f64>() / n;
    let my = s.iter().map(|p| p.y).sum::<f64>() / n;
    let curv = curvature_profile(c)?;
    let mean_abs = curv.iter().map(|k| k.abs()).sum::<f64>() / n;
    let k_std = std_dev(&curv);
    let (mut left, mut right) = (0.0, 0.0);
    for i in 0..s.len() {
        let prev = if c.is_closed() { s[(i + s.len() - 1) % s.len()] } else { s[i.saturating_sub(1)] };
        let next = if c.is_closed() { s[(i + 1) % s.len()] } else { s[(i + 1).min(s.len() - 1)] };
        let t = image.to_pixel(next) - image.to_pixel(prev);
        let norm = t.norm();
        if norm == 0.0 {
            return Err(degenerate("contour tangent undefined"));
        }
        let left_normal = Vec2::new(t.y / norm, -t.x / norm);
        let p = image.to_pixel(s[i]);
        let l = p + left_normal * BAND_OFFSET;
        let r = p - left_normal * BAND_OFFSET;
        left += image.sample(l.x, l.y);
        right += image.sample(r.x, r.y);
    }
    Ok(vec![mx, my, c.arc_length(), mean_abs, k_std, left / n, right / n])
}

fn region_unary(r: &RegionPrimitive, image: &LocalRegionImage) -> Result<Vec<f64>> {
    check_region(r)?;
    let values = region_pixels(r, image.width(), image.height())
        .into_iter()
        .map(|(x, y)| image.get(x, y))
        .collect::<Vec<_>>();
    if values.is_empty() {
        return Err(degenerate("region covers no pixel"));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (sxx, syy, sxy) = polygon_second_moments(r.boundary(), r.centroid());
    let tr = sxx + syy;
    let disc = ((sxx - syy) * (sxx - syy) / 4.0 + sxy * sxy).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if l2 <= 1e-15 {
        return Err(degenerate("region has no extent along its minor axis"));
    }
    Ok(vec![r.centroid().x, r.centroid().y, r.area(), mean, std_dev(&values), (l1 / l2).sqrt()])
}

/// Pixels whose normalized position lies inside (or on) the region.
pub(crate) fn region_pixels(r: &RegionPrimitive, w: usize, h: usize) -> Vec<(usize, usize)> {
    let (lo, hi) = r.bounds();
    let x0 = (lo.x * w as f64).floor().max(0.0) as usize;
    let y0 = (lo.y * h as f64).floor().max(0.0) as usize;
    let x1 = ((hi.x * w as f64).ceil() as usize).min(w - 1);
    let y1 = ((hi.y * h as f64).ceil() as usize).min(h - 1);
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Vec2::new(x as f64 / w as f64, y as f64 / h as f64);
            if point_in_polygon(p, r.boundary()) || point_polyline_distance(p, r.boundary(), true) < 1e-12 {
                out.push((x, y));
            }
        }
    }
    out
}

pub(crate) fn corridor_region_ok(r: &RegionPrimitive) -> bool {
    r.area() >= MIN_REGION_AREA
}

fn check_region(r: &RegionPrimitive) -> Result<()> {
    if !corridor_region_ok(r) {
        return Err(degenerate("region area is negligible"));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum End {
    First,
    Last,
}

impl End {
    fn point(self, c: &ContourPrimitive) -> Vec2 {
        match self {
            End::First => c.first(),
            End::Last => c.last(),
        }
    }

    /// Unit direction leaving the contour at this end.
    fn outward(self, c: &ContourPrimitive) -> Vec2 {
        let s = c.canonical_samples();
        let d = match self {
            End::First => s[0] - s[1],
            End::Last => s[s.len() - 1] - s[s.len() - 2],
        };
        d * (1.0 / d.norm())
    }
}

fn vector_angle(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).abs().atan2(a.dot(b))
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

// ---------------------------------------------------------------------------
// Vector assembly

/// Raster inputs shared by every descriptor evaluation on one image.
pub struct RelationContext<'a> {
    pub image: &'a LocalRegionImage,
    pub edges: &'a EdgeMap,
    pub cover_tolerance: f64,
}

/// Raw feature values of one descriptor on the given primitives (in slot order).
pub fn evaluate_descriptor(d: &RelationDescriptor, prims: &[&Primitive], ctx: &RelationContext<'_>) -> Result<Vec<f64>> {
    let contour = |i: usize| prims[i].as_contour().ok_or_else(|| invalid("expected contour"));
    let region = |i: usize| prims[i].as_region().ok_or_else(|| invalid("expected region"));
    Ok(match d.kind {
        RelationKind::Unary => unary_features(prims[0], ctx.image)?,
        RelationKind::Displacement => rel_displacement(prims[0], prims[1]).to_vec(),
        RelationKind::Cover => {
            let p = prims[0].as_point().ok_or_else(|| invalid("expected point"))?;
            let (covered, dist) = rel_cover(p, contour(1)?, ctx.cover_tolerance);
            vec![f64::from(u8::from(covered)), dist]
        }
        RelationKind::Containment => {
            let (f, b) = rel_containment(prims[0], region(1)?)?;
            vec![f, b]
        }
        RelationKind::EndsIn => {
            let (a, b) = rel_ends_in(contour(0)?, region(1)?);
            vec![f64::from(u8::from(a)), f64::from(u8::from(b))]
        }
        RelationKind::Continuity => {
            let (g, a) = rel_continuity(contour(0)?, contour(1)?)?;
            vec![g, a]
        }
        RelationKind::Parallelism => {
            let (a, s) = rel_parallelism(contour(0)?, contour(1)?)?;
            vec![a, s]
        }
        RelationKind::Bridging => {
            let b = rel_bridging(contour(0)?, contour(1)?, ctx.edges, None)?;
            vec![f64::from(u8::from(b.bridged)), b.cost_ratio]
        }
        RelationKind::BridgingCorridor => {
            let r = region(2)?;
            check_region(r)?;
            let b = rel_bridging(contour(0)?, contour(1)?, ctx.edges, Some(r))?;
            vec![f64::from(u8::from(b.bridged)), b.cost_ratio]
        }
    })
}

/// Appends the `(value, validity)` pairs for one descriptor result.
pub(crate) fn push_features(out: &mut Vec<f64>, count: usize, result: &Result<Vec<f64>>) {
    match result {
        Ok(v) if v.len() == count && v.iter().all(|x| x.is_finite()) => {
            for x in v {
                out.push(*x);
                out.push(1.0);
            }
        }
        _ => out.extend(std::iter::repeat_n(0.0, 2 * count)),
    }
}

/// Evaluates every descriptor of `schema` on a complete assignment.
pub fn compute_relation_vector(
    assignment: &Assignment,
    image: &LocalRegionImage,
    edges: &EdgeMap,
    schema: &RelationSchema,
) -> Result<RelationVector> {
    let bound = resolve_slots(assignment, schema)?;
    let ctx = RelationContext { image, edges, cover_tolerance: schema.cover_tolerance };
    let mut values = Vec::with_capacity(schema.total_length);
    for d in &schema.descriptors {
        let prims: Vec<&Primitive> = d.slot_indices.iter().map(|&i| bound[i]).collect();
        let r = evaluate_descriptor(d, &prims, &ctx);
        push_features(&mut values, d.feature_count, &r);
    }
    Ok(RelationVector { values })
}

/// Primitives of an assignment in schema slot order, type-checked.
pub(crate) fn resolve_slots<'a>(assignment: &'a Assignment, schema: &RelationSchema) -> Result<Vec<&'a Primitive>> {
    schema
        .slots
        .iter()
        .map(|s| {
            let p = assignment
                .bindings
                .get(&s.slot_id)
                .ok_or_else(|| Error::IncompleteAssignment(s.slot_id.clone()))?;
            if p.primitive_type() != s.primitive_type {
                return Err(invalid(format!(
                    "slot `{}` expects a {}, got a {}",
                    s.slot_id,
                    s.primitive_type,
                    p.primitive_type()
                )));
            }
            Ok(p)
        })
        .collect()
}

/// Helper for tests and callers that want a model schema from bare types.
pub fn schema_for_types(types: &[PrimitiveType], tier: LibraryTier) -> Result<RelationSchema> {
    let model = ModelSchema::from_types("anonymous", types, tier);
    build_relation_schema(&model, tier)
}
