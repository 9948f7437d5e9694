//! Confusable-window mining with a gradient-orientation-histogram matcher.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edgemap::central_gradients;
use crate::error::{invalid, Result};
use crate::geometry::LocalRegionImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub cells: usize,
    pub bins: usize,
    /// Window sizes as fractions of the pool image's shorter side.
    pub scales: Vec<f64>,
    pub stride_fraction: f64,
    /// Side of the returned crops.
    pub crop_size: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self { cells: 4, bins: 8, scales: vec![1.0, 0.75, 0.5], stride_fraction: 0.25, crop_size: 64 }
    }
}

/// Square window in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedWindow {
    pub image_id: String,
    pub window: Window,
    pub similarity: f64,
    pub crop: LocalRegionImage,
}

/// Cell histograms of unsigned gradient orientation, normalized over 2×2 blocks.
pub fn gradient_descriptor(image: &LocalRegionImage, cells: usize, bins: usize) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let (gx, gy) = central_gradients(image.intensities(), w, h);
    let mut hist = vec![0.0; cells * cells * bins];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mag = gx[i].hypot(gy[i]);
            if mag == 0.0 {
                continue;
            }
            let theta = gy[i].atan2(gx[i]).rem_euclid(PI);
            let pos = theta / PI * bins as f64 - 0.5;
            let b0 = pos.floor();
            let frac = pos - b0;
            let b0 = (b0 as isize).rem_euclid(bins as isize) as usize;
            let b1 = (b0 + 1) % bins;
            let cx = (x * cells / w).min(cells - 1);
            let cy = (y * cells / h).min(cells - 1);
            let base = (cy * cells + cx) * bins;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }
    let mut out = Vec::with_capacity((cells - 1) * (cells - 1) * 4 * bins);
    for by in 0..cells - 1 {
        for bx in 0..cells - 1 {
            let start = out.len();
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let base = ((by + dy) * cells + bx + dx) * bins;
                out.extend_from_slice(&hist[base..base + bins]);
            }
            let norm = out[start..].iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-9;
            for v in &mut out[start..] {
                *v /= norm;
            }
        }
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Bilinear resampling of a window to a `size`×`size` crop.
fn crop(image: &LocalRegionImage, win: Window, size: usize) -> LocalRegionImage {
    let id = format!("{}@{},{},{}", image.id(), win.x, win.y, win.size);
    if win.size == size {
        let data = (0..size * size).map(|i| image.get(win.x + i % size, win.y + i / size)).collect();
        return LocalRegionImage::new(id, size, size, data).expect("window lies inside the image");
    }
    let scale = win.size as f64 / size as f64;
    let data = (0..size * size)
        .map(|i| {
            let px = win.x as f64 + ((i % size) as f64 + 0.5) * scale - 0.5;
            let py = win.y as f64 + ((i / size) as f64 + 0.5) * scale - 0.5;
            image.sample(px, py)
        })
        .collect();
    LocalRegionImage::new(id, size, size, data).expect("resampled window is valid")
}

fn windows(w: usize, h: usize, config: &MiningConfig) -> Vec<Window> {
    let mut out = Vec::new();
    let side = w.min(h);
    for &s in &config.scales {
        let size = ((s * side as f64).round() as usize).clamp(1, side);
        let stride = ((config.stride_fraction * size as f64).round() as usize).max(1);
        for y in (0..=h - size).step_by(stride) {
            for x in (0..=w - size).step_by(stride) {
                out.push(Window { x, y, size });
            }
        }
    }
    out.sort_by_key(|w| (std::cmp::Reverse(w.size), w.y, w.x));
    out.dedup();
    out
}

/// Ranks pool windows by their best cosine similarity to any positive.
pub fn mine_confusable_windows(
    positives: &[LocalRegionImage],
    pool: &[LocalRegionImage],
    k: usize,
    config: &MiningConfig,
) -> Result<Vec<MinedWindow>> {
    if positives.is_empty() {
        return Err(invalid("mining needs at least one positive image"));
    }
    if pool.is_empty() {
        return Err(invalid("negative pool is empty"));
    }
    if config.cells < 2 || config.bins == 0 || config.crop_size < 2 {
        return Err(invalid("invalid mining configuration"));
    }
    let pos: Vec<Vec<f64>> = positives
        .par_iter()
        .map(|p| {
            let c = crop(p, Window { x: 0, y: 0, size: p.width().min(p.height()) }, config.crop_size);
            gradient_descriptor(&c, config.cells, config.bins)
        })
        .collect();
    let mut scored: Vec<(usize, Window, f64)> = pool
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, img)| {
            let pos = &pos;
            windows(img.width(), img.height(), config).into_iter().map(move |win| {
                let c = crop(img, win, config.crop_size);
                let d = gradient_descriptor(&c, config.cells, config.bins);
                let sim = pos.iter().map(|p| cosine(p, &d)).fold(f64::NEG_INFINITY, f64::max);
                (i, win, sim)
            })
        })
        .collect();
    scored.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.0.cmp(&b.0))
            .then((std::cmp::Reverse(a.1.size), a.1.y, a.1.x).cmp(&(std::cmp::Reverse(b.1.size), b.1.y, b.1.x)))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, win, similarity)| MinedWindow {
            image_id: pool[i].id().to_string(),
            window: win,
            similarity,
            crop: crop(&pool[i], win, config.crop_size),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(id: &str, seed: u64) -> LocalRegionImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = (0..64 * 64).map(|_| 0.5 + 0.05 * (rng.random::<f64>() - 0.5)).collect();
        LocalRegionImage::new(id, 64, 64, v).unwrap()
    }

    fn bars(id: &str) -> LocalRegionImage {
        let v = (0..64 * 64).map(|i| if (i % 64) / 8 % 2 == 0 { 0.2 } else { 0.8 }).collect();
        LocalRegionImage::new(id, 64, 64, v).unwrap()
    }

    #[test]
    fn descriptor_length() {
        assert_eq!(gradient_descriptor(&bars("b"), 4, 8).len(), 288);
    }

    #[test]
    fn exact_copy_ranks_first() {
        let p = bars("p");
        let pool = vec![noise("n0", 1), p.clone().with_id("copy"), noise("n1", 2)];
        let r = mine_confusable_windows(&[p], &pool, 5, &MiningConfig::default()).unwrap();
        assert_eq!(r[0].image_id, "copy");
        assert_eq!(r[0].window, Window { x: 0, y: 0, size: 64 });
        assert!((r[0].similarity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_window_count() {
        let p = bars("p");
        let cfg = MiningConfig::default();
        let total = windows(64, 64, &cfg).len();
        let r = mine_confusable_windows(&[p], &[noise("n", 3)], total + 50, &cfg).unwrap();
        assert_eq!(r.len(), total);
        assert!(r.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert!(mine_confusable_windows(&[bars("p")], &[], 3, &cfg).is_err());
    }
}
