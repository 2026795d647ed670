//! Depth-map preprocessing and patch/tile planning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, DepthMap, Grid};

/// Default Gaussian sigma (pixels) for removing low-frequency depth.
pub const DEFAULT_HIGHPASS_SIGMA: f64 = 16.0;
/// Side of the square evaluation patches.
pub const DEFAULT_PATCH_SIZE: usize = 512;
/// Training tile size `(axis 0, axis 1)`.
pub const TRAINING_TILE: (usize, usize) = (2988, 2240);

/// Normalised Gaussian kernel truncated at four sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Index into `0..n` with half-sample symmetric reflection (`d c b a | a b c d`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn convolve_rows(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let (h, w) = src.dims();
    let radius = (kernel.len() / 2) as isize;
    let mut out = Grid::filled(h, w, 0.0);
    let mut line = vec![0.0; w];
    for r in 0..h {
        let row = &src.as_slice()[r * w..(r + 1) * w];
        for (c, slot) in line.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &weight) in kernel.iter().enumerate() {
                acc += weight * row[reflect_index(c as isize + k as isize - radius, w)];
            }
            *slot = acc;
        }
        out.as_mut_slice()[r * w..(r + 1) * w].copy_from_slice(&line);
    }
    out
}

fn transpose(src: &Grid<f64>) -> Grid<f64> {
    let (h, w) = src.dims();
    Grid::from_fn(w, h, |r, c| src.get(c, r))
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur(src: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if src.is_empty() {
        return src.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let rows = convolve_rows(src, &kernel);
    transpose(&convolve_rows(&transpose(&rows), &kernel))
}

fn region_stats(values: &[f32], region: Option<&BinaryMask>) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if region.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        let v = v as f64;
        n += 1;
        sum += v;
        sum_sq += v * v;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt(), n)
}

/// Removes low frequencies: `depth - blur(clamp(depth, mean ± 3·std))`.
///
/// Mean and standard deviation come from the foreground pixels when a
/// non-empty `foreground` is given, otherwise from the whole map.
pub fn highpass(depth: &DepthMap, sigma_gauss: f64, foreground: Option<&BinaryMask>) -> Result<DepthMap> {
    if !(sigma_gauss > 0.0 && sigma_gauss.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be positive, got {sigma_gauss}"
        )));
    }
    if let Some(fg) = foreground {
        depth.ensure_same_dims(fg)?;
    }
    let region = foreground.filter(|fg| fg.any());
    let (mean, std, _) = region_stats(depth.as_slice(), region);
    let (lo, hi) = (mean - 3.0 * std, mean + 3.0 * std);
    let capped = depth.map(|v| (v as f64).clamp(lo, hi));
    let low = gaussian_blur(&capped, sigma_gauss);
    let data = depth
        .as_slice()
        .iter()
        .zip(low.as_slice())
        .map(|(&d, &l)| (d as f64 - l) as f32)
        .collect();
    DepthMap::from_vec(depth.height(), depth.width(), data)
}

/// High-pass filter followed by foreground normalisation, the depth
/// conditioning applied before refinement.
pub fn prepare_depth(depth: &DepthMap, foreground: &BinaryMask, sigma_gauss: f64) -> Result<DepthMap> {
    normalize(&highpass(depth, sigma_gauss, Some(foreground))?, foreground)
}

/// Standardises `depth` with statistics taken over the foreground only;
/// background pixels go through the same affine map.
pub fn normalize(depth: &DepthMap, foreground: &BinaryMask) -> Result<DepthMap> {
    depth.ensure_same_dims(foreground)?;
    let (mean, std, n) = region_stats(depth.as_slice(), Some(foreground));
    if n == 0 {
        return Err(Error::InvalidArgument("foreground mask is empty".into()));
    }
    if !(std > 0.0) {
        return Err(Error::InvalidArgument(
            "foreground depth has zero variance".into(),
        ));
    }
    let data = depth
        .as_slice()
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect();
    DepthMap::from_vec(depth.height(), depth.width(), data)
}

/// Placement of one evaluation patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    /// False when the patch has no foreground and is skipped a priori.
    pub keep: bool,
}

/// Non-overlapping square patches covering an image; partial patches on the
/// last row and column are zero-padded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub height: usize,
    pub width: usize,
    pub patches: Vec<PatchSpec>,
}

impl PatchGrid {
    pub fn rows(&self) -> usize {
        self.height.div_ceil(self.patch_size)
    }

    pub fn cols(&self) -> usize {
        self.width.div_ceil(self.patch_size)
    }

    pub fn kept(&self) -> impl Iterator<Item = &PatchSpec> {
        self.patches.iter().filter(|p| p.keep)
    }

    /// Cuts the patch out of a full-size raster, padding with `fill`.
    pub fn extract<T: Copy>(&self, spec: &PatchSpec, full: &Grid<T>, fill: T) -> Grid<T> {
        full.window(spec.row, spec.col, self.patch_size, self.patch_size, fill)
    }

    /// Reassembles full-size raster from one patch per spec, cropping padding.
    pub fn stitch<T: Copy>(&self, patches: &[Grid<T>], fill: T) -> Result<Grid<T>> {
        if patches.len() != self.patches.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} patches, got {}",
                self.patches.len(),
                patches.len()
            )));
        }
        let mut out = Grid::filled(self.height, self.width, fill);
        for (spec, patch) in self.patches.iter().zip(patches) {
            out.paste(spec.row, spec.col, patch);
        }
        Ok(out)
    }
}

/// Plans the evaluation grid; a patch is kept when it overlaps the
/// foreground.
pub fn extract_eval_patches(
    height: usize,
    width: usize,
    foreground: &BinaryMask,
    patch_size: usize,
) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    if foreground.dims() != (height, width) {
        return Err(Error::DimensionMismatch {
            expected: (height, width),
            found: foreground.dims(),
        });
    }
    let mut patches = Vec::new();
    for row in (0..height).step_by(patch_size) {
        for col in (0..width).step_by(patch_size) {
            let keep = (row..(row + patch_size).min(height))
                .any(|r| (col..(col + patch_size).min(width)).any(|c| foreground.get(r, c)));
            patches.push(PatchSpec {
                index: patches.len(),
                row,
                col,
                keep,
            });
        }
    }
    Ok(PatchGrid {
        patch_size,
        height,
        width,
        patches,
    })
}

/// Overlapping training tiles at half-tile stride.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub tile_size: (usize, usize),
    pub stride: (usize, usize),
    /// Pixels appended at the end of each axis.
    pub padding: (usize, usize),
    /// Tile origins `(axis 0, axis 1)`.
    pub tiles: Vec<(usize, usize)>,
}

impl TilePlan {
    pub fn padded_dims(&self, dims: (usize, usize)) -> (usize, usize) {
        (dims.0 + self.padding.0, dims.1 + self.padding.1)
    }
}

fn axis_plan(len: usize, tile: usize, stride: usize) -> (usize, Vec<usize>) {
    let excess = len - tile;
    let padding = (stride - excess % stride) % stride;
    let steps = (excess + padding) / stride;
    (padding, (0..=steps).map(|i| i * stride).collect())
}

/// Tiles of `tile_size` at a stride of half the tile, padding each axis just
/// enough for the last tile to end on the padded border.
pub fn plan_tiles(dims: (usize, usize), tile_size: (usize, usize)) -> Result<TilePlan> {
    if dims.0 < tile_size.0 || dims.1 < tile_size.1 {
        return Err(Error::InvalidArgument(format!(
            "image {dims:?} smaller than one tile {tile_size:?}"
        )));
    }
    if tile_size.0 < 2 || tile_size.1 < 2 {
        return Err(Error::InvalidArgument("tiles need at least 2 pixels per axis".into()));
    }
    let stride = (tile_size.0 / 2, tile_size.1 / 2);
    let (pad0, rows) = axis_plan(dims.0, tile_size.0, stride.0);
    let (pad1, cols) = axis_plan(dims.1, tile_size.1, stride.1);
    let tiles = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    Ok(TilePlan {
        tile_size,
        stride,
        padding: (pad0, pad1),
        tiles,
    })
}

/// Training tile plan with the default 2988 x 2240 tiles.
pub fn extract_training_tiles(dims: (usize, usize)) -> Result<TilePlan> {
    plan_tiles(dims, TRAINING_TILE)
}
