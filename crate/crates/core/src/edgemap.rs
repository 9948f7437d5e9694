//! Edge detection and edge-constrained path search.
//!
//! The edge map is a Canny-style detector (Gaussian smoothing, central
//! differences, non-maximum suppression, percentile hysteresis). On top of it
//! sits a gap-tolerant shortest-path search used for the bridging relation and
//! a polyline snapper used to refine hand annotations.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{point_polyline_distance, LocalRegionImage, RegionPrimitive, Vec2};

/// Cost ratio reported when two points cannot be bridged.
pub const UNREACHABLE_RATIO: f64 = 10.0;

/// Edge detector and path-search parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    /// Gaussian smoothing sigma (pixels).
    pub smoothing_sigma: f64,
    /// High hysteresis threshold as a percentile of non-zero gradient magnitudes.
    pub high_threshold_percentile: f64,
    /// Low threshold as a fraction of the high one.
    pub low_fraction: f64,
    /// Longest run of off-edge pixels a path may cross.
    pub gap_jump: usize,
    /// Extra cost per off-edge pixel.
    pub gap_penalty: f64,
    /// Maximum path-cost / Euclidean ratio accepted as a bridge.
    pub bridge_ratio_beta: f64,
    /// Search radius for snapping (pixels).
    pub snap_radius: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.0,
            high_threshold_percentile: 90.0,
            low_fraction: 0.4,
            gap_jump: 2,
            gap_penalty: 4.0,
            bridge_ratio_beta: 1.8,
            snap_radius: 5.0,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.smoothing_sigma,
            self.high_threshold_percentile,
            self.low_fraction,
            self.gap_penalty,
            self.bridge_ratio_beta,
            self.snap_radius,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.gap_jump == 0 {
            return Err(invalid("edge parameters must be positive"));
        }
        if self.low_fraction >= 1.0 {
            return Err(invalid("low_fraction must lie in (0,1)"));
        }
        if !(self.high_threshold_percentile > 50.0 && self.high_threshold_percentile < 100.0) {
            return Err(invalid("high_threshold_percentile must lie in (50,100)"));
        }
        Ok(())
    }
}

/// Binary edge raster with per-pixel gradient data.
#[derive(Debug, Clone)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    orientation: Vec<f64>,
    magnitude: Vec<f64>,
    params: EdgeParams,
    components: OnceLock<Vec<u32>>,
}

impl PartialEq for EdgeMap {
    fn eq(&self, o: &Self) -> bool {
        self.width == o.width
            && self.height == o.height
            && self.mask == o.mask
            && self.orientation == o.orientation
            && self.magnitude == o.magnitude
            && self.params == o.params
    }
}

/// Outcome of a bridgeability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bridge {
    pub bridged: bool,
    pub cost_ratio: f64,
}

impl EdgeMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &EdgeParams {
        &self.params
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Gradient orientation in `[0, π)`; meaningful on edge pixels.
    #[inline]
    pub fn orientation(&self, x: usize, y: usize) -> f64 {
        self.orientation[y * self.width + x]
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    pub fn edge_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Copy of this map with a replaced edge mask (gradients kept).
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<EdgeMap> {
        if mask.len() != self.mask.len() {
            return Err(invalid("mask size does not match edge map"));
        }
        Ok(EdgeMap {
            width: self.width,
            height: self.height,
            mask,
            orientation: self.orientation.clone(),
            magnitude: self.magnitude.clone(),
            params: self.params.clone(),
            components: OnceLock::new(),
        })
    }

    /// Gap-connected component label per pixel (`u32::MAX` off edges).
    fn components(&self) -> &[u32] {
        self.components.get_or_init(|| {
            let (w, h) = (self.width, self.height);
            let mut parent: Vec<u32> = (0..(w * h) as u32).collect();
            fn find(p: &mut [u32], mut i: u32) -> u32 {
                while p[i as usize] != i {
                    p[i as usize] = p[p[i as usize] as usize];
                    i = p[i as usize];
                }
                i
            }
            let reach = self.params.gap_jump as isize + 1;
            for y in 0..h {
                for x in 0..w {
                    if !self.mask[y * w + x] {
                        continue;
                    }
                    for dy in 0..=reach {
                        for dx in -reach..=reach {
                            if dy == 0 && dx <= 0 {
                                continue;
                            }
                            let (nx, ny) = (x as isize + dx, y as isize + dy);
                            if nx < 0 || nx >= w as isize || ny >= h as isize {
                                continue;
                            }
                            let j = ny as usize * w + nx as usize;
                            if self.mask[j] {
                                let a = find(&mut parent, (y * w + x) as u32);
                                let b = find(&mut parent, j as u32);
                                if a != b {
                                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                                    parent[hi as usize] = lo;
                                }
                            }
                        }
                    }
                }
            }
            (0..w * h)
                .map(|i| if self.mask[i] { find(&mut parent, i as u32) } else { u32::MAX })
                .collect()
        })
    }

    /// Edge pixels within `gap_jump` of `p`, optionally restricted to a corridor.
    fn edge_pixels_near(&self, p: (usize, usize), corridor: Option<&Corridor>) -> Vec<usize> {
        let r = self.params.gap_jump as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (x, y) = (p.0 as isize + dx, p.1 as isize + dy);
                if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
                    continue;
                }
                let idx = y as usize * self.width + x as usize;
                if self.mask[idx] && corridor.is_none_or(|c| c.allows(idx)) {
                    out.push(idx);
                }
            }
        }
        out
    }

    fn check_pixel(&self, p: (usize, usize)) -> Result<()> {
        if p.0 >= self.width || p.1 >= self.height {
            return Err(invalid(format!("pixel ({}, {}) outside {}x{} image", p.0, p.1, self.width, self.height)));
        }
        Ok(())
    }
}

/// Computes the edge map of an image.
pub fn compute_edge_map(image: &LocalRegionImage, params: &EdgeParams) -> Result<EdgeMap> {
    let (w, h) = (image.width(), image.height());
    if w < 5 || h < 5 {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    params.validate()?;
    let smooth = gaussian_blur(image.intensities(), w, h, params.smoothing_sigma);
    let (gx, gy) = central_gradients(&smooth, w, h);
    let n = w * h;
    let mut magnitude = vec![0.0; n];
    let mut orientation = vec![0.0; n];
    for i in 0..n {
        magnitude[i] = gx[i].hypot(gy[i]);
        orientation[i] = fold_pi(gy[i].atan2(gx[i]));
    }

    let mut nonzero: Vec<f64> = magnitude.iter().copied().filter(|m| *m > 1e-12).collect();
    let mut mask = vec![false; n];
    if !nonzero.is_empty() {
        nonzero.sort_by(f64::total_cmp);
        let rank = ((params.high_threshold_percentile / 100.0) * nonzero.len() as f64).ceil() as usize;
        let high = nonzero[rank.clamp(1, nonzero.len()) - 1];
        let low = params.low_fraction * high;

        let mut candidate = vec![false; n];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let m = magnitude[i];
                if m <= 1e-12 || m < low {
                    continue;
                }
                let (dx, dy) = nms_direction(orientation[i]);
                let fwd = magnitude[(y as isize + dy) as usize * w + (x as isize + dx) as usize];
                let back = magnitude[(y as isize - dy) as usize * w + (x as isize - dx) as usize];
                // Asymmetric comparison keeps exactly one pixel of a symmetric ridge.
                if m > back && m >= fwd {
                    candidate[i] = true;
                }
            }
        }

        let mut queue = VecDeque::new();
        for i in 0..n {
            if candidate[i] && magnitude[i] >= high {
                mask[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in neighbors8(x, y, w, h) {
                let j = ny * w + nx;
                if candidate[j] && !mask[j] {
                    mask[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }

    Ok(EdgeMap {
        width: w,
        height: h,
        mask,
        orientation,
        magnitude,
        params: params.clone(),
        components: OnceLock::new(),
    })
}

/// Minimum cost of an 8-connected path between any edge pixel within
/// `gap_jump` of `a` and any within `gap_jump` of `b`, plus the straight-line
/// distances from `a` and `b` to those pixels.
///
/// Steps onto edge pixels cost their Euclidean length; off-edge pixels add
/// `gap_penalty` each and may only appear in runs of at most `gap_jump`.
/// `None` means unreachable.
pub fn edge_path_cost(
    edges: &EdgeMap,
    a: (usize, usize),
    b: (usize, usize),
    corridor: Option<&RegionPrimitive>,
) -> Result<Option<f64>> {
    edges.check_pixel(a)?;
    edges.check_pixel(b)?;
    let corridor = corridor.map(|r| Corridor::new(edges, r));
    Ok(bounded_path_cost(edges, a, b, corridor.as_ref(), f64::INFINITY))
}

/// Tests whether `a` and `b` are linked by a cheap edge path.
pub fn is_bridgeable(
    edges: &EdgeMap,
    a: (usize, usize),
    b: (usize, usize),
    corridor: Option<&RegionPrimitive>,
) -> Result<Bridge> {
    edges.check_pixel(a)?;
    edges.check_pixel(b)?;
    if a == b {
        return Err(invalid("bridge endpoints coincide"));
    }
    let corridor = corridor.map(|r| Corridor::new(edges, r));
    Ok(bridge_with(edges, a, b, corridor.as_ref()))
}

pub(crate) fn bridge_with(edges: &EdgeMap, a: (usize, usize), b: (usize, usize), corridor: Option<&Corridor>) -> Bridge {
    let euclid = (a.0 as f64 - b.0 as f64).hypot(a.1 as f64 - b.1 as f64);
    let bound = UNREACHABLE_RATIO * euclid;
    match bounded_path_cost(edges, a, b, corridor, bound) {
        Some(cost) => Bridge {
            bridged: cost <= edges.params.bridge_ratio_beta * euclid,
            cost_ratio: (cost / euclid).min(UNREACHABLE_RATIO),
        },
        None => Bridge { bridged: false, cost_ratio: UNREACHABLE_RATIO },
    }
}

/// Rasterized corridor polygon; pixels on or within one pixel of the
/// boundary count as inside so paths may follow the region's own edge.
pub(crate) struct Corridor {
    inside: Vec<bool>,
}

impl Corridor {
    pub(crate) fn new(edges: &EdgeMap, region: &RegionPrimitive) -> Self {
        let (w, h) = (edges.width, edges.height);
        let tol = 1.0 / w.max(h) as f64;
        let (lo, hi) = region.bounds();
        let mut inside = vec![false; w * h];
        for y in 0..h {
            let ny = y as f64 / h as f64;
            if ny < lo.y - tol || ny > hi.y + tol {
                continue;
            }
            for x in 0..w {
                let nx = x as f64 / w as f64;
                if nx < lo.x - tol || nx > hi.x + tol {
                    continue;
                }
                let p = Vec2::new(nx, ny);
                inside[y * w + x] =
                    region.contains(p) || point_polyline_distance(p, region.boundary(), true) <= tol + 1e-12;
            }
        }
        Self { inside }
    }

    #[inline]
    fn allows(&self, idx: usize) -> bool {
        self.inside[idx]
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    state: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on f, then on state index for determinism.
        o.f.total_cmp(&self.f).then_with(|| o.state.cmp(&self.state))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn bounded_path_cost(
    edges: &EdgeMap,
    a: (usize, usize),
    b: (usize, usize),
    corridor: Option<&Corridor>,
    bound: f64,
) -> Option<f64> {
    let w = edges.width;
    let h = edges.height;
    let starts = edges.edge_pixels_near(a, corridor);
    let goals = edges.edge_pixels_near(b, corridor);
    if starts.is_empty() || goals.is_empty() {
        return None;
    }
    let comps = edges.components();
    if !starts.iter().any(|&s| goals.iter().any(|&t| comps[s] == comps[t])) {
        return None;
    }
    let mut is_goal = vec![false; w * h];
    goals.iter().for_each(|&t| is_goal[t] = true);
    let runs = edges.params.gap_jump + 1;
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (bx, by) = (b.0 as f64, b.1 as f64);
    let heuristic = |i: usize| ((i % w) as f64 - bx).hypot((i / w) as f64 - by);

    // One extra state past the pixel grid: reaching b from a goal pixel.
    let sink = w * h * runs;
    let mut best = vec![f64::INFINITY; sink + 1];
    let mut heap = BinaryHeap::new();
    for &s in &starts {
        let g = ((s % w) as f64 - ax).hypot((s / w) as f64 - ay);
        best[s * runs] = g;
        heap.push(Open { f: g + heuristic(s), g, state: s * runs });
    }
    while let Some(Open { g, state, .. }) = heap.pop() {
        if g > best[state] {
            continue;
        }
        if state == sink {
            return Some(g);
        }
        let (pix, run) = (state / runs, state % runs);
        if is_goal[pix] {
            let ng = g + heuristic(pix);
            if ng < best[sink] && ng <= bound + 1e-9 {
                best[sink] = ng;
                heap.push(Open { f: ng, g: ng, state: sink });
            }
        }
        let (x, y) = (pix % w, pix / w);
        for (nx, ny) in neighbors8(x, y, w, h) {
            let j = ny * w + nx;
            if corridor.is_some_and(|c| !c.allows(j)) {
                continue;
            }
            let step = if nx != x && ny != y { SQRT_2 } else { 1.0 };
            let (cost, nrun) = if edges.mask[j] {
                (step, 0)
            } else if run + 1 < runs {
                (step + edges.params.gap_penalty, run + 1)
            } else {
                continue;
            };
            let ng = g + cost;
            let nstate = j * runs + nrun;
            let f = ng + heuristic(j);
            if ng < best[nstate] && f <= bound + 1e-9 {
                best[nstate] = ng;
                heap.push(Open { f, g: ng, state: nstate });
            }
        }
    }
    None
}

/// Moves each polyline point onto a nearby, consistently oriented edge pixel.
///
/// Coordinates are in pixels. Snapping repeats with refreshed normals until
/// nothing moves, so the result is a fixed point. Returns the refined
/// polyline and whether at least half its points lie on edge pixels.
pub fn snap_polyline(edges: &EdgeMap, polyline: &[Vec2]) -> Result<(Vec<Vec2>, bool)> {
    if polyline.len() < 2 {
        return Err(invalid("polyline needs at least 2 points"));
    }
    let (w, h) = (edges.width, edges.height);
    if polyline
        .iter()
        .any(|p| !p.is_finite() || p.x < 0.0 || p.y < 0.0 || p.x > (w - 1) as f64 || p.y > (h - 1) as f64)
    {
        return Err(invalid("polyline point outside image"));
    }
    // Points on edge pixels never move, so each pass either snaps a new
    // point or changes nothing.
    let mut current = polyline.to_vec();
    for _ in 0..=polyline.len() {
        let (next, on_edge) = snap_pass(edges, &current);
        if next == current {
            return Ok((next, 2 * on_edge >= polyline.len()));
        }
        current = next;
    }
    let on_edge = current.iter().filter(|p| on_edge_pixel(edges, **p)).count();
    Ok((current, 2 * on_edge >= polyline.len()))
}

fn on_edge_pixel(edges: &EdgeMap, p: Vec2) -> bool {
    let (rx, ry) = (p.x.round(), p.y.round());
    p.x == rx && p.y == ry && edges.is_edge(rx as usize, ry as usize)
}

fn snap_pass(edges: &EdgeMap, polyline: &[Vec2]) -> (Vec<Vec2>, usize) {
    let (w, h) = (edges.width, edges.height);
    let radius = edges.params.snap_radius;
    let r = radius.ceil() as isize;
    let n = polyline.len();
    let mut out = Vec::with_capacity(n);
    let mut on_edge = 0usize;
    for i in 0..n {
        let p = polyline[i];
        let tangent = polyline[(i + 1).min(n - 1)] - polyline[i.saturating_sub(1)];
        let normal = fold_pi(tangent.x.atan2(-tangent.y));
        let (rx, ry) = (p.x.round() as usize, p.y.round() as usize);
        if on_edge_pixel(edges, p) {
            out.push(p);
            on_edge += 1;
            continue;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (rx as isize + dx, ry as isize + dy);
                if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                if !edges.is_edge(x, y) {
                    continue;
                }
                let d = (x as f64 - p.x).hypot(y as f64 - p.y);
                if d > radius || angle_diff_mod_pi(edges.orientation(x, y), normal) >= FRAC_PI_4 {
                    continue;
                }
                if best.is_none_or(|(bd, by, bx)| (d, y, x) < (bd, by, bx)) {
                    best = Some((d, y, x));
                }
            }
        }
        match best {
            Some((_, y, x)) => {
                out.push(Vec2::new(x as f64, y as f64));
                on_edge += 1;
            }
            None => out.push(p),
        }
    }

    // Keep the result monotone along the original polyline.
    let params: Vec<f64> = out.iter().map(|q| project_parameter(*q, polyline)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| params[a].total_cmp(&params[b]).then(a.cmp(&b)));
    (order.into_iter().map(|i| out[i]).collect(), on_edge)
}

fn project_parameter(p: Vec2, poly: &[Vec2]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut acc = 0.0;
    for seg in poly.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let d = p.dist(a + ab * t);
        let len = len2.sqrt();
        if d < best.0 {
            best = (d, acc + t * len);
        }
        acc += len;
    }
    best.1
}

// ---------------------------------------------------------------------------
// Raster helpers shared with candidate extraction.

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * data[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Central-difference gradients; zero on the one-pixel border.
pub(crate) fn central_gradients(data: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            gx[i] = (data[i + 1] - data[i - 1]) / 2.0;
            gy[i] = (data[i + w] - data[i - w]) / 2.0;
        }
    }
    (gx, gy)
}

pub(crate) fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    const D: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
    D.iter().filter_map(move |&(dx, dy)| {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize).then_some((nx as usize, ny as usize))
    })
}

/// Angle folded into `[0, π)`.
pub(crate) fn fold_pi(a: f64) -> f64 {
    let mut r = a.rem_euclid(PI);
    if r >= PI {
        r -= PI;
    }
    r
}

/// Difference between two axial angles, in `[0, π/2]`.
pub(crate) fn angle_diff_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn nms_direction(theta: f64) -> (isize, isize) {
    let deg = theta.to_degrees();
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}


#[cfg(test)]
mod tests {
    use super::test_images::*;
    use super::*;

    fn step_edges() -> EdgeMap {
        compute_edge_map(&vertical_step(32), &EdgeParams::default()).unwrap()
    }

    fn step_column(e: &EdgeMap) -> usize {
        let col = (0..32).find(|&x| e.is_edge(x, 16)).unwrap();
        assert!((4..=28).all(|y| e.is_edge(col, y)));
        col
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = LocalRegionImage::filled("c", 32, 32, 0.4).unwrap();
        assert_eq!(compute_edge_map(&img, &EdgeParams::default()).unwrap().edge_count(), 0);
    }

    #[test]
    fn tiny_image_is_rejected() {
        let img = LocalRegionImage::filled("c", 4, 8, 0.4).unwrap();
        assert!(matches!(compute_edge_map(&img, &EdgeParams::default()), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn step_edge_is_single_column() {
        // Hand analysis: smoothing is symmetric about the step, so the central
        // differences at columns 15 and 16 tie and the asymmetric NMS keeps 15.
        let e = step_edges();
        let mut rows = 0;
        for y in 0..32 {
            let cols: Vec<usize> = (0..32).filter(|&x| e.is_edge(x, y)).collect();
            assert!(cols.len() <= 1, "row {y} has {cols:?}");
            if let Some(&c) = cols.first() {
                assert!((15..=16).contains(&c));
                rows += 1;
            }
        }
        assert!(rows >= 28, "only {rows} rows marked");
    }

    #[test]
    fn white_square_ring() {
        let e = compute_edge_map(&white_square(64, 16), &EdgeParams::default()).unwrap();
        assert!(e.edge_count() > 40);
        for y in 0..64 {
            for x in 0..64 {
                if e.is_edge(x, y) {
                    // Border pixels sit at 24 and 39; edges must hug them.
                    let dx = (x as isize - 24).abs().min((x as isize - 39).abs());
                    let dy = (y as isize - 24).abs().min((y as isize - 39).abs());
                    let inside_band = (23..=40).contains(&x) && (23..=40).contains(&y);
                    assert!(inside_band && (dx <= 1 || dy <= 1), "stray edge at ({x},{y})");
                }
            }
        }
        // Every side is represented.
        for t in 26..38 {
            assert!((23..=25).any(|x| e.is_edge(x, t)));
            assert!((38..=40).any(|x| e.is_edge(x, t)));
            assert!((23..=25).any(|y| e.is_edge(t, y)));
            assert!((38..=40).any(|y| e.is_edge(t, y)));
        }
    }

    #[test]
    fn on_edge_path_cost() {
        let e = step_edges();
        let col = step_column(&e);
        let c = edge_path_cost(&e, (col, 4), (col, 28), None).unwrap().unwrap();
        assert!((c - 24.0).abs() <= 1.0, "cost {c}");
    }

    #[test]
    fn blank_image_is_unreachable() {
        let img = LocalRegionImage::filled("b", 32, 32, 0.5).unwrap();
        let e = compute_edge_map(&img, &EdgeParams::default()).unwrap();
        assert_eq!(edge_path_cost(&e, (16, 4), (16, 28), None).unwrap(), None);
        let b = is_bridgeable(&e, (16, 4), (16, 28), None).unwrap();
        assert!(!b.bridged);
        assert_eq!(b.cost_ratio, UNREACHABLE_RATIO);
    }

    #[test]
    fn erased_gap_adds_penalty() {
        let e = step_edges();
        let col = step_column(&e);
        let mut mask = e.mask().to_vec();
        mask[16 * 32 + col] = false;
        mask[17 * 32 + col] = false;
        let gapped = e.with_mask(mask).unwrap();
        let c = edge_path_cost(&gapped, (col, 4), (col, 28), None).unwrap().unwrap();
        assert!((c - 32.0).abs() <= 1.0, "cost {c}");
    }

    #[test]
    fn bridgeable_straight_path() {
        let e = step_edges();
        let col = step_column(&e);
        let b = is_bridgeable(&e, (col, 4), (col, 28), None).unwrap();
        assert!(b.bridged);
        assert!((b.cost_ratio - 1.0).abs() < 0.05);
    }

    #[test]
    fn bridge_threshold_rule() {
        // Two vertical edges joined only through a long detour: cost is twice
        // the straight-line distance, above beta = 1.8.
        let mut data = vec![0.0; 32 * 32];
        for y in 0..32 {
            for x in 0..32 {
                if (8..24).contains(&x) && (4..28).contains(&y) && !((12..20).contains(&x) && y >= 8) {
                    data[y * 32 + x] = 1.0;
                }
            }
        }
        let img = LocalRegionImage::new("u", 32, 32, data).unwrap();
        let e = compute_edge_map(&img, &EdgeParams::default()).unwrap();
        let a = (0..32).rev().map(|x| (x, 26)).find(|&(x, y)| e.is_edge(x, y) && x < 16).unwrap();
        let b = (0..32).map(|x| (x, 26)).find(|&(x, y)| e.is_edge(x, y) && x > 16).unwrap();
        let cost = edge_path_cost(&e, a, b, None).unwrap().unwrap();
        let euclid = (a.0 as f64 - b.0 as f64).abs();
        let r = is_bridgeable(&e, a, b, None).unwrap();
        assert!(cost > 1.8 * euclid);
        assert!(!r.bridged);
    }

    #[test]
    fn coincident_bridge_endpoints_rejected() {
        assert!(is_bridgeable(&step_edges(), (3, 3), (3, 3), None).is_err());
        assert!(edge_path_cost(&step_edges(), (40, 3), (3, 3), None).is_err());
    }

    #[test]
    fn snap_moves_polyline_onto_edge() {
        let e = step_edges();
        let col = (0..32).find(|&x| e.is_edge(x, 16)).unwrap() as f64;
        let poly: Vec<Vec2> = (4..=28).step_by(4).map(|y| Vec2::new(col - 1.5, y as f64)).collect();
        let (out, snapped) = snap_polyline(&e, &poly).unwrap();
        assert!(snapped);
        for p in out {
            assert_eq!(p.x, col);
        }
    }

    #[test]
    fn snap_far_polyline_unchanged() {
        let e = step_edges();
        let poly = vec![Vec2::new(3.0, 4.0), Vec2::new(3.0, 16.0), Vec2::new(3.0, 28.0)];
        let (out, snapped) = snap_polyline(&e, &poly).unwrap();
        assert!(!snapped);
        assert_eq!(out, poly);
    }

    #[test]
    fn snap_on_empty_map_unchanged() {
        let img = LocalRegionImage::filled("b", 32, 32, 0.5).unwrap();
        let e = compute_edge_map(&img, &EdgeParams::default()).unwrap();
        let poly = vec![Vec2::new(10.0, 4.0), Vec2::new(12.5, 20.0)];
        assert_eq!(snap_polyline(&e, &poly).unwrap(), (poly, false));
    }

    #[test]
    fn params_validation() {
        let p = EdgeParams { low_fraction: 1.2, ..EdgeParams::default() };
        assert!(p.validate().is_err());
        let p = EdgeParams { high_threshold_percentile: 40.0, ..EdgeParams::default() };
        assert!(p.validate().is_err());
    }
}
