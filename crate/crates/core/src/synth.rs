//! Synthetic mirrors: smooth random curves engraved as parabolic depth
//! grooves with Gamma-distributed widths, shallow scratches that are not part
//! of the ground truth, and an imperfect initial prediction.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_mirror, Mirror};
use crate::morphology::{dilate_radius, distance_to_mask};
use crate::raster::{BinaryMask, DepthMap, Grid};
use crate::seed;
use crate::stats::GammaParams;

/// Width distribution fitted on real engravings.
pub const REFERENCE_GAMMA: GammaParams = GammaParams {
    shape: 49.13,
    loc: -4.28,
    scale: 0.21,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub curves: (usize, usize),
    pub curve_length: (f64, f64),
    pub gamma: GammaParams,
    pub groove_depth: f64,
    pub scratches: usize,
    pub scratch_depth: f64,
    pub noise_std: f64,
    /// Peak magnitude of the low-frequency bowl and tilt.
    pub background_relief: f64,
    /// Probability that a curve has a gap in the initial prediction.
    pub gap_probability: f64,
    /// Probability that a scratch shows up as a false positive.
    pub scratch_fp_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 256,
            width: 256,
            curves: (5, 8),
            curve_length: (60.0, 160.0),
            gamma: REFERENCE_GAMMA,
            groove_depth: 1.0,
            scratches: 4,
            scratch_depth: 0.25,
            noise_std: 0.02,
            background_relief: 2.0,
            gap_probability: 0.8,
            scratch_fp_probability: 0.5,
        }
    }
}

/// A generated mirror plus what went into it.
#[derive(Clone, Debug)]
pub struct SynthMirror {
    pub mirror: Mirror,
    /// Sampled width per ground-truth curve.
    pub widths: Vec<f64>,
    /// Union of the scratch footprints (never in the ground truth).
    pub scratches: BinaryMask,
}

fn random_curve(
    rng: &mut ChaCha8Rng,
    fg_center: (f64, f64),
    fg_radius: f64,
    length: f64,
) -> Vec<(usize, usize)> {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let d = fg_radius * rng.random_range(0.0f64..0.8).sqrt();
    let (mut y, mut x) = (fg_center.0 + d * a.sin(), fg_center.1 + d * a.cos());
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let mut curvature: f64 = rng.random_range(-0.03..0.03);
    let mut points: Vec<(usize, usize)> = Vec::new();
    let mut travelled = 0.0;
    while travelled < length {
        curvature = (curvature + rng.random_range(-0.004..0.004)).clamp(-0.06, 0.06);
        heading += curvature * 0.5;
        y += 0.5 * heading.sin();
        x += 0.5 * heading.cos();
        travelled += 0.5;
        if ((y - fg_center.0).powi(2) + (x - fg_center.1).powi(2)).sqrt() > fg_radius - 8.0 {
            break;
        }
        let p = (y.round() as usize, x.round() as usize);
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    points
}

fn carve(depth: &mut Grid<f64>, center_line: &BinaryMask, half_width: f64, amplitude: f64) {
    let dist = distance_to_mask(center_line);
    for (v, &d) in depth.as_mut_slice().iter_mut().zip(dist.as_slice()) {
        if d < half_width {
            let t = d / half_width;
            *v -= amplitude * (1.0 - t * t);
        }
    }
}

/// Generates one mirror from `seed`.
pub fn synth_mirror(config: &SynthConfig, id: &str, root_seed: u64) -> Result<SynthMirror> {
    let (h, w) = (config.height, config.width);
    if h < 32 || w < 32 {
        return Err(Error::InvalidArgument("synthetic mirrors need at least 32x32 pixels".into()));
    }
    if config.curves.0 == 0 || config.curves.0 > config.curves.1 {
        return Err(Error::InvalidArgument("curve count range must be 1 <= min <= max".into()));
    }
    let mut rng = seed::rng(root_seed);
    let center = (h as f64 / 2.0, w as f64 / 2.0);
    let fg_radius = h.min(w) as f64 / 2.0 - 2.0;
    let foreground = Grid::from_fn(h, w, |r, c| {
        ((r as f64 - center.0).powi(2) + (c as f64 - center.1).powi(2)).sqrt() <= fg_radius
    });

    let mut depth = Grid::from_fn(h, w, |r, c| {
        let (y, x) = ((r as f64 - center.0) / h as f64, (c as f64 - center.1) / w as f64);
        config.background_relief * (0.5 * (y * y + x * x) + 0.25 * (y - x))
    });
    let mut gt = BinaryMask::empty(h, w);
    let mut pred = BinaryMask::empty(h, w);
    let mut widths = Vec::new();

    let n_curves = rng.random_range(config.curves.0..=config.curves.1);
    for _ in 0..n_curves {
        let length = rng.random_range(config.curve_length.0..=config.curve_length.1);
        let points = random_curve(&mut rng, center, fg_radius, length);
        if points.len() < 10 {
            continue;
        }
        let width = config.gamma.sample(&mut rng).max(2.0);
        // skeleton EDT of a curved digital band sits about half a pixel past its radius
        let radius = ((width - 0.5).round() as usize).max(1);
        widths.push(width);
        let line = BinaryMask::from_pixels(h, w, &points);
        let stroke = dilate_radius(&line, radius);
        carve(&mut depth, &line, radius as f64 + 1.0, config.groove_depth);
        let mut visible = stroke.clone();
        if rng.random_bool(config.gap_probability) {
            let gap_len = rng.random_range(points.len() / 4..=points.len() * 3 / 4).max(1);
            let start = rng.random_range(0..=points.len() - gap_len);
            let gap_line = BinaryMask::from_pixels(h, w, &points[start..start + gap_len]);
            visible = visible.and_not(&dilate_radius(&gap_line, radius + 2))?;
        }
        gt = gt.or(&stroke)?;
        pred = pred.or(&visible)?;
    }

    let mut scratches = BinaryMask::empty(h, w);
    for _ in 0..config.scratches {
        let length = rng.random_range(30.0..90.0);
        let points = random_curve(&mut rng, center, fg_radius, length);
        if points.is_empty() {
            continue;
        }
        let line = BinaryMask::from_pixels(h, w, &points);
        carve(&mut depth, &line, 1.5, config.scratch_depth);
        let footprint = dilate_radius(&line, 1);
        scratches = scratches.or(&footprint)?;
        if rng.random_bool(config.scratch_fp_probability) {
            pred = pred.or(&footprint)?;
        }
    }

    if config.noise_std > 0.0 {
        let noise = Normal::new(0.0, config.noise_std)
            .map_err(|e| Error::InvalidArgument(format!("noise std: {e}")))?;
        for v in depth.as_mut_slice() {
            *v += noise.sample(&mut rng);
        }
    }

    let gt = gt.and(&foreground)?;
    let scratches = scratches.and_not(&gt)?;
    let pred = pred.and(&foreground)?;
    let depth = DepthMap::new(depth.map(|v| v as f32))?;
    Ok(SynthMirror {
        mirror: Mirror {
            id: id.to_string(),
            depth,
            gt: Some(gt),
            foreground,
            pred_init: pred,
        },
        widths,
        scratches,
    })
}

/// Mirror ids are `synth_000`, `synth_001`, ...; mirror `i` uses the seed
/// derived from `(seed, i)`.
pub fn synth_corpus(config: &SynthConfig, count: usize, root_seed: u64) -> Result<Vec<SynthMirror>> {
    (0..count)
        .map(|i| synth_mirror(config, &format!("synth_{i:03}"), seed::derive(root_seed, &[i as u64])))
        .collect()
}

/// Writes a corpus in the standard dataset layout under `root`.
pub fn write_corpus(root: &Path, config: &SynthConfig, count: usize, root_seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(root)?;
    synth_corpus(config, count, root_seed)?
        .iter()
        .map(|m| save_mirror(root, &m.mirror))
        .collect()
}
