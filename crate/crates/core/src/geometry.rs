//! Geometric primitives and measurements.
//!
//! Everything above the raster layer works in normalized image-relative
//! coordinates: a pixel at column `i`, row `j` of a `w`×`h` image sits at
//! `(i / w, j / h)`. Primitives validate their defining fields on
//! construction and cache their derived fields.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Result};

/// Number of arc-length-equispaced samples kept for every contour.
pub const CANONICAL_SAMPLES: usize = 20;

const EPS: f64 = 1e-12;

/// A 2-D coordinate or vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

/// A small grayscale crop: the unit of processing.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRegionImage {
    width: usize,
    height: usize,
    intensities: Vec<f64>,
    id: String,
}

impl LocalRegionImage {
    /// Builds an image from row-major intensities in `[0, 1]`.
    pub fn new(id: impl Into<String>, width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if intensities.len() != width * height {
            return Err(invalid(format!(
                "expected {} intensities, got {}",
                width * height,
                intensities.len()
            )));
        }
        if let Some(v) = intensities.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self { width, height, intensities, id: id.into() })
    }

    /// Constant-intensity image.
    pub fn filled(id: impl Into<String>, width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(id, width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.intensities[y * self.width + x]
    }

    /// Bilinear sample at pixel coordinates, clamped to the image.
    pub fn sample(&self, px: f64, py: f64) -> f64 {
        let px = px.clamp(0.0, (self.width - 1) as f64);
        let py = py.clamp(0.0, (self.height - 1) as f64);
        let x0 = px.floor() as usize;
        let y0 = py.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = px - x0 as f64;
        let fy = py - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Normalized coordinates of a pixel.
    pub fn to_normalized(&self, px: f64, py: f64) -> Vec2 {
        Vec2::new(px / self.width as f64, py / self.height as f64)
    }

    /// Pixel coordinates of a normalized position.
    pub fn to_pixel(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x * self.width as f64, p.y * self.height as f64)
    }
}

/// Detector that produced a point primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    HighCurvature,
    IntensityExtremum,
    Generic,
}

/// 0-D primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPrimitive {
    position: Vec2,
    kind: PointKind,
    strength: f64,
}

impl PointPrimitive {
    pub fn new(position: Vec2, kind: PointKind, strength: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&position.x) || !(0.0..=1.0).contains(&position.y) {
            return Err(invalid(format!("point ({}, {}) outside [0,1]^2", position.x, position.y)));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(invalid("point strength must be finite and non-negative"));
        }
        Ok(Self { position, kind, strength })
    }

    pub fn position(&self) -> Vec2 {
        self.position
    }

    pub fn kind(&self) -> PointKind {
        self.kind
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

/// 1-D primitive: an open or closed polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourPrimitive {
    vertices: Vec<Vec2>,
    closed: bool,
    samples: Vec<Vec2>,
    length: f64,
}

impl ContourPrimitive {
    pub fn new(mut vertices: Vec<Vec2>, closed: bool) -> Result<Self> {
        if closed && vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        let min = if closed { 3 } else { 2 };
        if vertices.len() < min {
            return Err(invalid(format!("contour needs at least {min} vertices")));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(invalid("contour vertex is not finite"));
        }
        if vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("consecutive contour vertices must be distinct"));
        }
        let length = polyline_length(&vertices, closed);
        if length <= EPS {
            return Err(degenerate("contour has zero arc length"));
        }
        let samples = resample_points(&vertices, closed, CANONICAL_SAMPLES, length);
        Ok(Self { vertices, closed, samples, length })
    }

    /// Open polyline through the given points.
    pub fn open(vertices: Vec<Vec2>) -> Result<Self> {
        Self::new(vertices, false)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// The cached `CANONICAL_SAMPLES` arc-length-equispaced samples.
    pub fn canonical_samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn arc_length(&self) -> f64 {
        self.length
    }

    pub fn first(&self) -> Vec2 {
        self.vertices[0]
    }

    pub fn last(&self) -> Vec2 {
        *self.vertices.last().unwrap()
    }

    /// Same geometry traversed in the opposite direction.
    pub fn reversed(&self) -> ContourPrimitive {
        let mut v = self.vertices.clone();
        v.reverse();
        ContourPrimitive::new(v, self.closed).expect("reversal preserves validity")
    }

    /// Point at half the arc length.
    pub fn midpoint(&self) -> Vec2 {
        point_at_arc_length(&self.vertices, self.closed, self.length / 2.0)
    }

    /// Segments of the polyline, including the closing one for closed contours.
    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        segments_of(&self.vertices, self.closed)
    }
}

/// 2-D primitive: a simple polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPrimitive {
    boundary: Vec<Vec2>,
    centroid: Vec2,
    area: f64,
}

impl RegionPrimitive {
    pub fn new(mut boundary: Vec<Vec2>) -> Result<Self> {
        if boundary.len() > 1 && boundary.first() == boundary.last() {
            boundary.pop();
        }
        if boundary.len() < 3 {
            return Err(invalid("region boundary needs at least 3 vertices"));
        }
        if boundary.iter().any(|v| !v.is_finite()) {
            return Err(invalid("region vertex is not finite"));
        }
        let (centroid, area) = polygon_centroid_area(&boundary)?;
        if !polygon_is_simple(&boundary) {
            return Err(degenerate("region boundary self-intersects"));
        }
        Ok(Self { boundary, centroid, area })
    }

    pub fn boundary(&self) -> &[Vec2] {
        &self.boundary
    }

    pub fn centroid(&self) -> Vec2 {
        self.centroid
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(p, &self.boundary)
    }

    /// Distance from `p` to the boundary, positive inside.
    pub fn signed_boundary_distance(&self, p: Vec2) -> f64 {
        let d = segments_of(&self.boundary, true)
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min);
        if self.contains(p) {
            d
        } else {
            -d
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        bounds_of(&self.boundary)
    }
}

/// Primitive type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveType {
    Point,
    Contour,
    Region,
}

impl std::fmt::Display for PrimitiveType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrimitiveType::Point => "point",
            PrimitiveType::Contour => "contour",
            PrimitiveType::Region => "region",
        })
    }
}

/// A semantic component of a local region.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Point(PointPrimitive),
    Contour(ContourPrimitive),
    Region(RegionPrimitive),
}

impl Primitive {
    pub fn primitive_type(&self) -> PrimitiveType {
        match self {
            Primitive::Point(_) => PrimitiveType::Point,
            Primitive::Contour(_) => PrimitiveType::Contour,
            Primitive::Region(_) => PrimitiveType::Region,
        }
    }

    /// Reference point: point position, contour arc-length midpoint, region centroid.
    pub fn reference_point(&self) -> Vec2 {
        match self {
            Primitive::Point(p) => p.position(),
            Primitive::Contour(c) => c.midpoint(),
            Primitive::Region(r) => r.centroid(),
        }
    }

    /// All defining coordinates.
    pub fn coordinates(&self) -> &[Vec2] {
        match self {
            Primitive::Point(p) => std::slice::from_ref(&p.position),
            Primitive::Contour(c) => c.vertices(),
            Primitive::Region(r) => r.boundary(),
        }
    }

    pub fn as_point(&self) -> Option<&PointPrimitive> {
        match self {
            Primitive::Point(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_contour(&self) -> Option<&ContourPrimitive> {
        match self {
            Primitive::Contour(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_region(&self) -> Option<&RegionPrimitive> {
        match self {
            Primitive::Region(r) => Some(r),
            _ => None,
        }
    }
}

impl From<PointPrimitive> for Primitive {
    fn from(p: PointPrimitive) -> Self {
        Primitive::Point(p)
    }
}

impl From<ContourPrimitive> for Primitive {
    fn from(c: ContourPrimitive) -> Self {
        Primitive::Contour(c)
    }
}

impl From<RegionPrimitive> for Primitive {
    fn from(r: RegionPrimitive) -> Self {
        Primitive::Region(r)
    }
}

// ---------------------------------------------------------------------------
// Operations

/// Resamples a contour to `k` points equispaced in arc length.
///
/// Open contours get samples at `i·L/(k−1)`, closed ones at `i·L/k`; the first
/// sample is always the first vertex.
pub fn resample_contour(contour: &ContourPrimitive, k: usize) -> Result<Vec<Vec2>> {
    if k < 2 {
        return Err(invalid("resample needs k >= 2"));
    }
    if contour.length <= EPS {
        return Err(degenerate("zero-length contour"));
    }
    Ok(resample_points(&contour.vertices, contour.closed, k, contour.length))
}

/// Unsigned discrete curvature at every canonical sample.
///
/// Each interior sample uses the circle through it and its two neighbours;
/// open-contour endpoints copy the nearest interior value, closed contours wrap.
pub fn curvature_profile(contour: &ContourPrimitive) -> Result<Vec<f64>> {
    let s = &contour.samples;
    let n = s.len();
    if n < 3 {
        return Err(degenerate("curvature needs at least 3 samples"));
    }
    let mut out = vec![0.0; n];
    if contour.closed {
        for i in 0..n {
            out[i] = circumcircle_curvature(s[(i + n - 1) % n], s[i], s[(i + 1) % n]);
        }
    } else {
        for i in 1..n - 1 {
            out[i] = circumcircle_curvature(s[i - 1], s[i], s[i + 1]);
        }
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    Ok(out)
}

/// Centroid and (absolute) area of a region's boundary polygon.
pub fn centroid_and_area(region: &RegionPrimitive) -> Result<(Vec2, f64)> {
    polygon_centroid_area(&region.boundary)
}

/// Minimum Euclidean distance between two primitives' point sets.
///
/// Regions are filled: anything inside a region is at distance zero from it.
pub fn min_distance(a: &Primitive, b: &Primitive) -> f64 {
    if let Primitive::Region(r) = a {
        if b.coordinates().iter().any(|&p| r.contains(p)) {
            return 0.0;
        }
    }
    if let Primitive::Region(r) = b {
        if a.coordinates().iter().any(|&p| r.contains(p)) {
            return 0.0;
        }
    }
    let sa = primitive_segments(a);
    let sb = primitive_segments(b);
    let mut best = f64::INFINITY;
    for &(p, q) in &sa {
        for &(r, s) in &sb {
            if segments_intersect(p, q, r, s) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(p, r, s))
                .min(point_segment_distance(q, r, s))
                .min(point_segment_distance(r, p, q))
                .min(point_segment_distance(s, p, q));
        }
    }
    best
}

/// Orientation in `[0, π)` of the first principal axis of the canonical samples.
pub fn principal_orientation(contour: &ContourPrimitive) -> Result<f64> {
    principal_axis_angle(&contour.samples)
}

pub(crate) fn principal_axis_angle(points: &[Vec2]) -> Result<f64> {
    if points.len() < 2 {
        return Err(degenerate("orientation needs at least 2 samples"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy <= EPS * EPS {
        return Err(degenerate("all samples coincide"));
    }
    let mut angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    if angle < 0.0 {
        angle += PI;
    }
    if angle >= PI {
        angle -= PI;
    }
    Ok(angle)
}

// ---------------------------------------------------------------------------
// Helpers shared across modules

pub(crate) fn segments_of(vertices: &[Vec2], closed: bool) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let n = vertices.len();
    let count = if closed { n } else { n.saturating_sub(1) };
    (0..count).map(move |i| (vertices[i], vertices[(i + 1) % n]))
}

fn primitive_segments(p: &Primitive) -> Vec<(Vec2, Vec2)> {
    match p {
        Primitive::Point(pt) => vec![(pt.position, pt.position)],
        Primitive::Contour(c) => c.segments().collect(),
        Primitive::Region(r) => segments_of(&r.boundary, true).collect(),
    }
}

pub fn polyline_length(vertices: &[Vec2], closed: bool) -> f64 {
    segments_of(vertices, closed).map(|(a, b)| a.dist(b)).sum()
}

/// Point at arc length `s` along a polyline (clamped to its extent).
pub(crate) fn point_at_arc_length(vertices: &[Vec2], closed: bool, s: f64) -> Vec2 {
    let mut remaining = s.max(0.0);
    for (a, b) in segments_of(vertices, closed) {
        let len = a.dist(b);
        if remaining <= len {
            let t = if len > 0.0 { remaining / len } else { 0.0 };
            return a + (b - a) * t;
        }
        remaining -= len;
    }
    if closed {
        vertices[0]
    } else {
        *vertices.last().unwrap()
    }
}

fn resample_points(vertices: &[Vec2], closed: bool, k: usize, length: f64) -> Vec<Vec2> {
    let step = if closed { length / k as f64 } else { length / (k - 1) as f64 };
    let segs: Vec<(Vec2, Vec2, f64)> = segments_of(vertices, closed).map(|(a, b)| (a, b, a.dist(b))).collect();
    let mut out = Vec::with_capacity(k);
    out.push(vertices[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 1..k {
        if !closed && i == k - 1 {
            out.push(*vertices.last().unwrap());
            break;
        }
        let target = step * i as f64;
        while seg + 1 < segs.len() && seg_start + segs[seg].2 < target {
            seg_start += segs[seg].2;
            seg += 1;
        }
        let (a, b, len) = segs[seg];
        let t = if len > 0.0 { ((target - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(a + (b - a) * t);
    }
    out
}

fn circumcircle_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = a.dist(b);
    let bc = b.dist(c);
    let ca = c.dist(a);
    let denom = ab * bc * ca;
    if denom <= EPS * EPS * EPS {
        return 0.0;
    }
    2.0 * (b - a).cross(c - a).abs() / denom
}

pub(crate) fn polygon_centroid_area(poly: &[Vec2]) -> Result<(Vec2, f64)> {
    if poly.len() < 3 {
        return Err(degenerate("polygon needs at least 3 vertices"));
    }
    // Shift to the first vertex for numerical stability.
    let o = poly[0];
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (p, q) in segments_of(poly, true) {
        let p = p - o;
        let q = q - o;
        let cr = p.cross(q);
        a2 += cr;
        cx += (p.x + q.x) * cr;
        cy += (p.y + q.y) * cr;
    }
    if a2.abs() <= 1e-14 {
        return Err(degenerate("polygon has zero area"));
    }
    let centroid = Vec2::new(cx / (3.0 * a2) + o.x, cy / (3.0 * a2) + o.y);
    Ok((centroid, a2.abs() / 2.0))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Distance from `p` to a polyline.
pub fn point_polyline_distance(p: Vec2, vertices: &[Vec2], closed: bool) -> f64 {
    if vertices.len() == 1 {
        return p.dist(vertices[0]);
    }
    segments_of(vertices, closed)
        .map(|(a, b)| point_segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// True when no two non-adjacent edges touch and no adjacent edges fold back.
pub fn polygon_is_simple(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in i + 1..n {
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is fine unless the two edges overlap.
                let shared = if j == i + 1 { b } else { a };
                let other_i = if shared == b { a } else { b };
                let other_j = if shared == c { d } else { c };
                let u = other_i - shared;
                let v = other_j - shared;
                if u.cross(v).abs() <= 1e-18 && u.dot(v) > 0.0 {
                    return false;
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

pub(crate) fn bounds_of(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Second-moment matrix `(sxx, syy, sxy)` of a filled polygon about its centroid.
pub(crate) fn polygon_second_moments(poly: &[Vec2], centroid: Vec2) -> (f64, f64, f64) {
    let mut ixx = 0.0;
    let mut iyy = 0.0;
    let mut ixy = 0.0;
    let mut a2 = 0.0;
    for (p, q) in segments_of(poly, true) {
        let p = p - centroid;
        let q = q - centroid;
        let cr = p.cross(q);
        a2 += cr;
        ixx += (p.y * p.y + p.y * q.y + q.y * q.y) * cr;
        iyy += (p.x * p.x + p.x * q.x + q.x * q.x) * cr;
        ixy += (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y) * cr;
    }
    let area = a2 / 2.0;
    // ixx integrates y^2, iyy integrates x^2.
    let syy = ixx / 12.0 / area;
    let sxx = iyy / 12.0 / area;
    let sxy = ixy / 24.0 / area;
    (sxx, syy, sxy)
}

/// Douglas–Peucker simplification keeping both endpoints.
pub(crate) fn simplify_polyline(points: &[Vec2], tolerance: f64) -> Vec<Vec2> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((s, e)) = stack.pop() {
        let mut best = 0.0;
        let mut idx = s;
        for i in s + 1..e {
            let d = point_segment_distance(points[i], points[s], points[e]);
            if d > best {
                best = d;
                idx = i;
            }
        }
        if best > tolerance {
            keep[idx] = true;
            stack.push((s, idx));
            stack.push((idx, e));
        }
    }
    points.iter().zip(keep).filter_map(|(p, k)| k.then_some(*p)).collect()
}
