//! Bottom-up candidate primitives: corner and extremum points, edge chains,
//! and threshold/grid regions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::edgemap::{central_gradients, gaussian_blur, EdgeMap};
use crate::error::{Error, Result};
use crate::geometry::{
    simplify_polyline, ContourPrimitive, LocalRegionImage, PointKind, PointPrimitive, RegionPrimitive, Vec2,
};

/// Detector settings and pool caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Cap per point kind.
    pub max_points: usize,
    pub max_contours: usize,
    pub max_regions: usize,
    pub harris_k: f64,
    pub harris_window_sigma: f64,
    /// Corner responses below this fraction of the maximum are ignored.
    pub harris_relative_threshold: f64,
    pub extremum_sigma: f64,
    pub extremum_min_strength: f64,
    pub min_chain_pixels: usize,
    pub split_angle: f64,
    pub simplify_tolerance_px: f64,
    pub region_sigma: f64,
    /// Radius (pixels) of the morphological opening applied to threshold masks.
    pub region_opening_radius: usize,
    pub region_min_area: f64,
    pub region_max_area: f64,
    pub dedupe_iou: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            max_points: 30,
            max_contours: 40,
            max_regions: 20,
            harris_k: 0.04,
            harris_window_sigma: 1.5,
            harris_relative_threshold: 0.01,
            extremum_sigma: 2.0,
            extremum_min_strength: 0.01,
            min_chain_pixels: 8,
            split_angle: PI / 4.0,
            simplify_tolerance_px: 1.0,
            region_sigma: 2.0,
            region_opening_radius: 2,
            region_min_area: 0.01,
            region_max_area: 0.6,
            dedupe_iou: 0.8,
        }
    }
}

/// All candidates extracted from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub points: Vec<PointPrimitive>,
    pub contours: Vec<ContourPrimitive>,
    pub regions: Vec<RegionPrimitive>,
    pub source_image_id: String,
}

/// Runs all three detectors.
pub fn build_candidate_pool(image: &LocalRegionImage, edges: &EdgeMap, config: &CandidateConfig) -> Result<CandidatePool> {
    Ok(CandidatePool {
        points: detect_point_candidates(image, edges, config)?,
        contours: detect_contour_candidates(edges, config),
        regions: detect_region_candidates(image, config),
        source_image_id: image.id().to_string(),
    })
}

fn to_norm(w: usize, h: usize, x: f64, y: f64) -> Vec2 {
    Vec2::new(x / w as f64, y / h as f64)
}

// ---------------------------------------------------------------------------
// Points

/// Harris corners (high curvature) followed by smoothed-intensity extrema.
pub fn detect_point_candidates(image: &LocalRegionImage, _edges: &EdgeMap, config: &CandidateConfig) -> Result<Vec<PointPrimitive>> {
    let (w, h) = (image.width(), image.height());
    if w < 5 || h < 5 {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    let mut out = harris_points(image, config);
    out.extend(extremum_points(image, config));
    Ok(out)
}

fn harris_points(image: &LocalRegionImage, config: &CandidateConfig) -> Vec<PointPrimitive> {
    let (w, h) = (image.width(), image.height());
    let smooth = gaussian_blur(image.intensities(), w, h, 1.0);
    let (gx, gy) = central_gradients(&smooth, w, h);
    let xx: Vec<f64> = gx.iter().map(|g| g * g).collect();
    let yy: Vec<f64> = gy.iter().map(|g| g * g).collect();
    let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let s = config.harris_window_sigma;
    let (xx, yy, xy) = (gaussian_blur(&xx, w, h, s), gaussian_blur(&yy, w, h, s), gaussian_blur(&xy, w, h, s));
    let response: Vec<f64> = (0..w * h)
        .map(|i| xx[i] * yy[i] - xy[i] * xy[i] - config.harris_k * (xx[i] + yy[i]).powi(2))
        .collect();
    let max = response.iter().copied().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Vec::new();
    }
    let floor = config.harris_relative_threshold * max;
    let peaks = local_peaks(&response, w, h, |v| v > floor, false);
    peaks
        .into_iter()
        .take(config.max_points)
        .filter_map(|(i, r)| PointPrimitive::new(to_norm(w, h, (i % w) as f64, (i / w) as f64), PointKind::HighCurvature, r).ok())
        .collect()
}

fn extremum_points(image: &LocalRegionImage, config: &CandidateConfig) -> Vec<PointPrimitive> {
    let (w, h) = (image.width(), image.height());
    let s2 = gaussian_blur(image.intensities(), w, h, config.extremum_sigma);
    let s4 = gaussian_blur(image.intensities(), w, h, 2.0 * config.extremum_sigma);
    let mut found = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let v = s2[i];
            let mut is_max = true;
            let mut is_min = true;
            for (dx, dy) in NEIGHBORS {
                let j = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                is_max &= v > s2[j];
                is_min &= v < s2[j];
            }
            if is_max || is_min {
                let strength = (v - s4[i]).abs();
                if strength > config.extremum_min_strength {
                    found.push((i, strength));
                }
            }
        }
    }
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    found
        .into_iter()
        .take(config.max_points)
        .filter_map(|(i, r)| PointPrimitive::new(to_norm(w, h, (i % w) as f64, (i / w) as f64), PointKind::IntensityExtremum, r).ok())
        .collect()
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// 3×3 maxima (ties resolved toward the earlier pixel), sorted by value.
fn local_peaks(values: &[f64], w: usize, h: usize, accept: impl Fn(f64) -> bool, include_border: bool) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let b = usize::from(!include_border);
    for y in b..h - b {
        for x in b..w - b {
            let i = y * w + x;
            let v = values[i];
            if !accept(v) {
                continue;
            }
            let peak = NEIGHBORS.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    return true;
                }
                let j = ny as usize * w + nx as usize;
                if j < i {
                    v > values[j]
                } else {
                    v >= values[j]
                }
            });
            if peak {
                out.push((i, v));
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

// ---------------------------------------------------------------------------
// Contours

/// Links edge pixels into chains, splits them at corners and keeps the most salient.
pub fn detect_contour_candidates(edges: &EdgeMap, config: &CandidateConfig) -> Vec<ContourPrimitive> {
    let (w, h) = (edges.width(), edges.height());
    let mut pieces: Vec<(Vec<(usize, usize)>, bool)> = Vec::new();
    for (chain, closed) in trace_chains(edges) {
        pieces.extend(split_chain(chain, closed, config.split_angle));
    }
    let mut scored: Vec<(f64, ContourPrimitive)> = Vec::new();
    for (px, closed) in pieces {
        if px.len() < config.min_chain_pixels {
            continue;
        }
        let mean_mag = px.iter().map(|&(x, y)| edges.magnitude(x, y)).sum::<f64>() / px.len() as f64;
        let saliency = px.len() as f64 * mean_mag;
        let pts: Vec<Vec2> = px.iter().map(|&(x, y)| Vec2::new(x as f64, y as f64)).collect();
        let simplified = if closed {
            let mut ring = pts.clone();
            ring.push(pts[0]);
            let mut s = simplify_polyline(&ring, config.simplify_tolerance_px);
            s.pop();
            s
        } else {
            simplify_polyline(&pts, config.simplify_tolerance_px)
        };
        let verts: Vec<Vec2> = simplified.iter().map(|p| to_norm(w, h, p.x, p.y)).collect();
        let contour = if closed && verts.len() >= 3 {
            ContourPrimitive::new(verts, true)
        } else {
            ContourPrimitive::open(verts)
        };
        if let Ok(c) = contour {
            scored.push((saliency, c));
        }
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.first().x.total_cmp(&b.1.first().x))
            .then(a.1.first().y.total_cmp(&b.1.first().y))
    });
    scored.into_iter().take(config.max_contours).map(|(_, c)| c).collect()
}

/// Unvisited edge neighbours, 4-connected ones first.
fn next_pixel(edges: &EdgeMap, visited: &[bool], x: usize, y: usize) -> Option<(usize, usize)> {
    const ORDER: [(isize, isize); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];
    let (w, h) = (edges.width() as isize, edges.height() as isize);
    ORDER.iter().find_map(|&(dx, dy)| {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        if nx < 0 || ny < 0 || nx >= w || ny >= h {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        (edges.is_edge(nx, ny) && !visited[ny * edges.width() + nx]).then_some((nx, ny))
    })
}

fn edge_degree(edges: &EdgeMap, x: usize, y: usize) -> usize {
    crate::edgemap::neighbors8(x, y, edges.width(), edges.height())
        .filter(|&(nx, ny)| edges.is_edge(nx, ny))
        .count()
}

fn walk(edges: &EdgeMap, visited: &mut [bool], start: (usize, usize)) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut cur = start;
    while let Some(n) = next_pixel(edges, visited, cur.0, cur.1) {
        visited[n.1 * edges.width() + n.0] = true;
        out.push(n);
        cur = n;
    }
    out
}

/// 8-connected pixel chains; the flag marks closed loops.
pub(crate) fn trace_chains(edges: &EdgeMap) -> Vec<(Vec<(usize, usize)>, bool)> {
    let (w, h) = (edges.width(), edges.height());
    let mut visited = vec![false; w * h];
    let mut starts: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if edges.is_edge(x, y) && edge_degree(edges, x, y) == 1 {
                starts.push((x, y));
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if edges.is_edge(x, y) {
                starts.push((x, y));
            }
        }
    }
    let mut chains = Vec::new();
    for s in starts {
        if visited[s.1 * w + s.0] {
            continue;
        }
        visited[s.1 * w + s.0] = true;
        let fwd = walk(edges, &mut visited, s);
        let back = walk(edges, &mut visited, s);
        let mut chain: Vec<(usize, usize)> = back.into_iter().rev().collect();
        chain.push(s);
        chain.extend(fwd);
        let (a, b) = (chain[0], chain[chain.len() - 1]);
        let closed = chain.len() >= 8 && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1;
        chains.push((chain, closed));
    }
    chains
}

fn turning(p: &[(usize, usize)], i: usize, closed: bool) -> f64 {
    let n = p.len();
    let (a, c) = if closed {
        (p[(i + n - 2) % n], p[(i + 2) % n])
    } else {
        if i < 2 || i + 2 >= n {
            return 0.0;
        }
        (p[i - 2], p[i + 2])
    };
    let b = p[i];
    let v1 = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
    let v2 = (c.0 as f64 - b.0 as f64, c.1 as f64 - b.1 as f64);
    let cross = v1.0 * v2.1 - v1.1 * v2.0;
    let dot = v1.0 * v2.0 + v1.1 * v2.1;
    cross.abs().atan2(dot)
}

/// Splits a chain at turning-angle peaks above `limit`.
fn split_chain(chain: Vec<(usize, usize)>, closed: bool, limit: f64) -> Vec<(Vec<(usize, usize)>, bool)> {
    let n = chain.len();
    if n < 5 {
        return vec![(chain, false)];
    }
    let t: Vec<f64> = (0..n).map(|i| turning(&chain, i, closed)).collect();
    let mut cuts = Vec::new();
    for i in 0..n {
        if t[i] <= limit + 1e-9 {
            continue;
        }
        let mut peak = true;
        for d in 1..=2usize {
            for (j, earlier) in [(i as isize - d as isize, true), ((i + d) as isize, false)] {
                let j = if closed {
                    j.rem_euclid(n as isize) as usize
                } else if j < 0 || j >= n as isize {
                    continue;
                } else {
                    j as usize
                };
                if (earlier && t[j] >= t[i]) || (!earlier && t[j] > t[i]) {
                    peak = false;
                }
            }
        }
        if peak {
            cuts.push(i);
        }
    }
    if cuts.is_empty() {
        return vec![(chain, closed)];
    }
    let mut out = Vec::new();
    if closed {
        for k in 0..cuts.len() {
            let s = cuts[k];
            let e = cuts[(k + 1) % cuts.len()];
            let mut piece = Vec::new();
            let mut i = s;
            loop {
                piece.push(chain[i]);
                if i == e && piece.len() > 1 {
                    break;
                }
                i = (i + 1) % n;
                if piece.len() > n {
                    break;
                }
            }
            out.push((piece, false));
        }
    } else {
        let mut s = 0;
        for &c in &cuts {
            out.push((chain[s..=c].to_vec(), false));
            s = c;
        }
        out.push((chain[s..].to_vec(), false));
    }
    out
}

// ---------------------------------------------------------------------------
// Regions

struct RegionCandidate {
    region: RegionPrimitive,
    pixels: Vec<u32>,
    contrast: f64,
}

/// Threshold components of the smoothed image plus a fixed grid of windows.
pub fn detect_region_candidates(image: &LocalRegionImage, config: &CandidateConfig) -> Vec<RegionPrimitive> {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let smooth = gaussian_blur(image.intensities(), w, h, config.region_sigma);
    let mut cands: Vec<RegionCandidate> = Vec::new();

    let lo = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > 1e-6 {
        let mut sorted = smooth.clone();
        sorted.sort_by(f64::total_cmp);
        let mut levels = Vec::new();
        for f in [0.2, 0.4, 0.6, 0.8] {
            levels.push(sorted[((f * n as f64) as usize).min(n - 1)]);
            levels.push(lo + f * (hi - lo));
        }
        let min_px = (config.region_min_area * n as f64).ceil() as usize;
        let max_px = (config.region_max_area * n as f64).floor() as usize;
        for level in levels {
            for dark in [true, false] {
                let mask: Vec<bool> = smooth.iter().map(|&v| if dark { v < level } else { v > level }).collect();
                let mask = open_mask(&mask, w, h, config.region_opening_radius);
                for comp in components(&mask, w, h) {
                    if comp.len() < min_px.max(3) || comp.len() > max_px {
                        continue;
                    }
                    if let Some(region) = component_polygon(&comp, w, h, config.simplify_tolerance_px) {
                        let contrast = pixel_contrast(&smooth, &comp, w, h);
                        cands.push(RegionCandidate { region, pixels: comp, contrast });
                    }
                }
            }
        }
    }

    for oy in [0.0, 0.25, 0.5] {
        for ox in [0.0, 0.25, 0.5] {
            let region = RegionPrimitive::new(vec![
                Vec2::new(ox, oy),
                Vec2::new(ox + 0.5, oy),
                Vec2::new(ox + 0.5, oy + 0.5),
                Vec2::new(ox, oy + 0.5),
            ])
            .expect("grid window is a valid square");
            let pixels: Vec<u32> = crate::relations::region_pixels(&region, w, h)
                .into_iter()
                .map(|(x, y)| (y * w + x) as u32)
                .collect();
            let contrast = pixel_contrast(&smooth, &pixels, w, h);
            cands.push(RegionCandidate { region, pixels, contrast });
        }
    }

    cands.sort_by(|a, b| {
        b.contrast
            .total_cmp(&a.contrast)
            .then(a.region.centroid().x.total_cmp(&b.region.centroid().x))
            .then(a.region.centroid().y.total_cmp(&b.region.centroid().y))
    });
    let mut kept: Vec<RegionCandidate> = Vec::new();
    for c in cands {
        if kept.len() >= config.max_regions {
            break;
        }
        if kept.iter().all(|k| iou(&k.pixels, &c.pixels) <= config.dedupe_iou) {
            kept.push(c);
        }
    }
    kept.into_iter().map(|c| c.region).collect()
}

fn iou(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// |mean inside − mean of a 3-pixel surrounding ring|.
fn pixel_contrast(values: &[f64], pixels: &[u32], w: usize, h: usize) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let mut inside = vec![false; w * h];
    for &p in pixels {
        inside[p as usize] = true;
    }
    let ring = dilate(&inside, w, h, 3);
    let mut ring_sum = 0.0;
    let mut ring_n = 0usize;
    for i in 0..w * h {
        if ring[i] && !inside[i] {
            ring_sum += values[i];
            ring_n += 1;
        }
    }
    let mean_in = pixels.iter().map(|&p| values[p as usize]).sum::<f64>() / pixels.len() as f64;
    if ring_n == 0 {
        return 0.0;
    }
    (mean_in - ring_sum / ring_n as f64).abs()
}

fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    morph(mask, w, h, r, true)
}

fn erode(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    morph(mask, w, h, r, false)
}

/// Separable square dilation/erosion; outside pixels count as background.
fn morph(mask: &[bool], w: usize, h: usize, r: usize, grow: bool) -> Vec<bool> {
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
            let row = &mask[y * w + a..=y * w + b];
            tmp[y * w + x] = if grow {
                row.iter().any(|m| *m)
            } else {
                x >= r && x + r < w && row.iter().all(|m| *m)
            };
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
            out[y * w + x] = if grow {
                (a..=b).any(|yy| tmp[yy * w + x])
            } else {
                y >= r && y + r < h && (a..=b).all(|yy| tmp[yy * w + x])
            };
        }
    }
    out
}

fn open_mask(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let e = erode(mask, w, h, r);
    let d = dilate(&e, w, h, r);
    d.iter().zip(mask).map(|(a, b)| *a && *b).collect()
}

/// 4-connected components as sorted pixel index lists.
fn components(mask: &[bool], w: usize, h: usize) -> Vec<Vec<u32>> {
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for s in 0..w * h {
        if !mask[s] || label[s] {
            continue;
        }
        label[s] = true;
        stack.push(s);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i as u32);
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if mask[j] && !label[j] {
                    label[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Simplified outer boundary of a component, falling back to its convex hull.
fn component_polygon(comp: &[u32], w: usize, h: usize, tol: f64) -> Option<RegionPrimitive> {
    let mut inside = vec![false; w * h];
    for &p in comp {
        inside[p as usize] = true;
    }
    let boundary = moore_trace(&inside, w, h, comp[0] as usize);
    let pts: Vec<Vec2> = boundary.iter().map(|&i| Vec2::new((i % w) as f64, (i / w) as f64)).collect();
    if pts.len() >= 3 {
        let mut ring = pts.clone();
        ring.push(pts[0]);
        let mut s = simplify_polyline(&ring, tol);
        s.pop();
        if s.len() >= 3 {
            let poly: Vec<Vec2> = s.iter().map(|p| to_norm(w, h, p.x, p.y)).collect();
            if let Ok(r) = RegionPrimitive::new(poly) {
                return Some(r);
            }
        }
    }
    let all: Vec<Vec2> = comp
        .iter()
        .map(|&i| Vec2::new((i as usize % w) as f64, (i as usize / w) as f64))
        .collect();
    let hull = convex_hull(&all);
    RegionPrimitive::new(hull.iter().map(|p| to_norm(w, h, p.x, p.y)).collect()).ok()
}

/// Moore-neighbour boundary trace starting from the component's first raster pixel.
fn moore_trace(inside: &[bool], w: usize, h: usize, start: usize) -> Vec<usize> {
    // Clockwise on screen (y down), starting west.
    const DIRS: [(isize, isize); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let at = |x: isize, y: isize| x >= 0 && y >= 0 && x < w as isize && y < h as isize && inside[y as usize * w + x as usize];
    let (sx, sy) = ((start % w) as isize, (start / w) as isize);
    let mut out = vec![start];
    let (mut cx, mut cy) = (sx, sy);
    let mut back = 0usize;
    let mut first_move: Option<(isize, isize)> = None;
    let limit = 4 * inside.len() + 8;
    for _ in 0..limit {
        let mut found = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (cx + DIRS[d].0, cy + DIRS[d].1);
            if at(nx, ny) {
                let prev = (back + k - 1) % 8;
                found = Some((nx, ny, cx + DIRS[prev].0, cy + DIRS[prev].1));
                break;
            }
        }
        let Some((nx, ny, bx, by)) = found else {
            break;
        };
        if (cx, cy) == (sx, sy) {
            match first_move {
                None => first_move = Some((nx, ny)),
                Some(m) if m == (nx, ny) => {
                    out.pop();
                    break;
                }
                _ => {}
            }
        }
        let rel = (bx - nx, by - ny);
        back = DIRS.iter().position(|&d| d == rel).unwrap_or(0);
        cx = nx;
        cy = ny;
        out.push(cy as usize * w + cx as usize);
    }
    out
}

fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<Vec2> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(q - lower[lower.len() - 2]) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(q - upper[upper.len() - 2]) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
