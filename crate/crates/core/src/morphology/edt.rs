//! Exact Euclidean distance transform using the separable lower-envelope
//! method (Felzenszwalb & Huttenlocher): one 1-D pass down the columns, one
//! along the rows, each linear in the number of pixels.

use crate::raster::{BinaryMask, Grid};

/// Squared distance from every pixel to the nearest pixel of `features`.
///
/// With `exterior_is_feature`, every point just outside the raster counts as
/// a feature as well. Pixels with no reachable feature get `f64::INFINITY`.
pub(crate) fn squared_distance_to(features: &BinaryMask, exterior_is_feature: bool) -> Grid<f64> {
    let (height, width) = features.dims();
    let mut out = Grid::filled(height, width, f64::INFINITY);
    if height == 0 || width == 0 {
        return out;
    }
    let n = height.max(width);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    let buf = out.as_mut_slice();
    for c in 0..width {
        for r in 0..height {
            f[r] = if features.as_slice()[r * width + c] {
                0.0
            } else {
                f64::INFINITY
            };
        }
        lower_envelope(&f[..height], &mut d[..height], &mut v, &mut z);
        for r in 0..height {
            let mut value = d[r];
            if exterior_is_feature {
                let above = (r + 1) as f64;
                let below = (height - r) as f64;
                value = value.min(above * above).min(below * below);
            }
            buf[r * width + c] = value;
        }
    }
    for r in 0..height {
        let row = &mut buf[r * width..(r + 1) * width];
        f[..width].copy_from_slice(row);
        lower_envelope(&f[..width], &mut d[..width], &mut v, &mut z);
        for c in 0..width {
            let mut value = d[c];
            if exterior_is_feature {
                let left = (c + 1) as f64;
                let right = (width - c) as f64;
                value = value.min(left * left).min(right * right);
            }
            row[c] = value;
        }
    }
    out
}

/// 1-D squared distance transform of the sampled function `f` (entries may be
/// infinite) into `d`. `v` and `z` are scratch buffers of length ≥ `f.len()`
/// and `f.len() + 1`.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        // z[0] is -inf, so this never pops past the first parabola.
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    if !started {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

/// Exact Euclidean distance from each pixel to the nearest background pixel.
///
/// Background pixels map to 0. The region outside the raster counts as
/// background, so an all-ones mask measures distance to the raster border.
pub fn euclidean_distance_transform(mask: &BinaryMask) -> Grid<f64> {
    squared_distance_to(&mask.not(), true).map(f64::sqrt)
}

/// Euclidean distance from each pixel to the nearest set pixel of `mask`
/// (infinite when `mask` is empty). Nothing outside the raster counts.
pub fn distance_to_mask(mask: &BinaryMask) -> Grid<f64> {
    squared_distance_to(mask, false).map(f64::sqrt)
}
