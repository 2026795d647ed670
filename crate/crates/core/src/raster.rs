//! Row-major rasters shared by every stage of the pipeline.
//!
//! All indexing is `(row, col)`; dimensions are reported as `(height, width)`.
//! Three concrete rasters exist: [`BinaryMask`] for predictions, ground truth
//! and foreground masks, [`DepthMap`] for the real-valued surface depth and
//! [`HintMap`] for accumulated annotator strokes.

use std::ops::{Deref, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense row-major 2-D raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "raster of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Grid {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index_of(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[self.index_of(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.index_of(row, col);
        self.data[i] = value;
    }

    /// Signed lookup; `None` outside the raster.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> Option<T> {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            None
        } else {
            Some(self.data[row as usize * self.width + col as usize])
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: (other.height, other.width),
            });
        }
        Ok(())
    }

    /// Copies a `height x width` window starting at `(row, col)`. Parts of the
    /// window outside the raster take `fill`.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize, fill: T) -> Grid<T> {
        let mut out = Grid::filled(height, width, fill);
        let rows = height.min(self.height.saturating_sub(row));
        let cols = width.min(self.width.saturating_sub(col));
        for r in 0..rows {
            let src = (row + r) * self.width + col;
            out.data[r * width..r * width + cols].copy_from_slice(&self.data[src..src + cols]);
        }
        out
    }

    /// Writes `patch` at `(row, col)`, cropping whatever falls outside.
    pub fn paste(&mut self, row: usize, col: usize, patch: &Grid<T>) {
        let rows = patch.height.min(self.height.saturating_sub(row));
        let cols = patch.width.min(self.width.saturating_sub(col));
        for r in 0..rows {
            let dst = (row + r) * self.width + col;
            self.data[dst..dst + cols]
                .copy_from_slice(&patch.data[r * patch.width..r * patch.width + cols]);
        }
    }
}

impl<T: Copy> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[row * self.width + col]
    }
}

impl<T: Copy> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        &mut self.data[row * self.width + col]
    }
}

/// Boolean raster used for predictions, ground truth and foreground masks.
pub type BinaryMask = Grid<bool>;

impl Grid<bool> {
    pub fn empty(height: usize, width: usize) -> Self {
        Grid::filled(height, width, false)
    }

    /// Mask with exactly the listed `(row, col)` pixels set.
    pub fn from_pixels(height: usize, width: usize, pixels: &[(usize, usize)]) -> Self {
        let mut m = Grid::empty(height, width);
        for &(r, c) in pixels {
            m.set(r, c, true);
        }
        m
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// Coordinates of set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn not(&self) -> BinaryMask {
        self.map(|v| !v)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// `self ∧ ¬other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Number of pixels set in both masks.
    pub fn overlap(&self, other: &BinaryMask) -> Result<usize> {
        self.ensure_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn hamming(&self, other: &BinaryMask) -> Result<usize> {
        self.ensure_same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count())
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.ensure_same_dims(other)?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Real-valued surface depth; every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap(Grid<f32>);

impl DepthMap {
    pub fn new(grid: Grid<f32>) -> Result<Self> {
        if let Some(i) = grid.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth value at ({}, {}) is not finite",
                i / grid.width().max(1),
                i % grid.width().max(1)
            )));
        }
        Ok(DepthMap(grid))
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        DepthMap::new(Grid::from_vec(height, width, data)?)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        DepthMap(Grid::filled(height, width, 0.0))
    }

    pub fn grid(&self) -> &Grid<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f32> {
        self.0
    }
}

impl Deref for DepthMap {
    type Target = Grid<f32>;

    fn deref(&self) -> &Grid<f32> {
        &self.0
    }
}

/// Stroke polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Add,
    Erase,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Add => 1,
            Sign::Erase => -1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Add => "add",
            Sign::Erase => "erase",
        }
    }
}

/// Ternary raster of annotator input: `+1` add, `-1` erase, `0` untouched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HintMap(Grid<i8>);

impl HintMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        HintMap(Grid::filled(height, width, 0))
    }

    pub fn new(grid: Grid<i8>) -> Result<Self> {
        if let Some(v) = grid.as_slice().iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "hint value {v} outside {{-1, 0, +1}}"
            )));
        }
        Ok(HintMap(grid))
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<i8>) -> Result<Self> {
        HintMap::new(Grid::from_vec(height, width, data)?)
    }

    /// Single-sign hint: `sign` wherever `mask` is set.
    pub fn from_mask(mask: &BinaryMask, sign: Sign) -> Self {
        let v = sign.value();
        HintMap(mask.map(|m| if m { v } else { 0 }))
    }

    pub fn set(&mut self, row: usize, col: usize, sign: Option<Sign>) {
        self.0.set(row, col, sign.map_or(0, Sign::value));
    }

    /// Pixels carrying `sign`.
    pub fn mask_of(&self, sign: Sign) -> BinaryMask {
        let v = sign.value();
        self.0.map(|h| h == v)
    }

    pub fn nonzero_mask(&self) -> BinaryMask {
        self.0.map(|h| h != 0)
    }

    /// The sign shared by every nonzero entry; `Ok(None)` for an all-zero map.
    pub fn single_sign(&self) -> Result<Option<Sign>> {
        let mut seen = None;
        for &v in self.0.as_slice() {
            let s = match v {
                1 => Sign::Add,
                -1 => Sign::Erase,
                _ => continue,
            };
            match seen {
                None => seen = Some(s),
                Some(prev) if prev != s => {
                    return Err(Error::InvalidHint(
                        "hint mixes add and erase values".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(seen)
    }

    pub fn grid(&self) -> &Grid<i8> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<i8> {
        self.0
    }

    /// Copies a window; see [`Grid::window`].
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> HintMap {
        HintMap(self.0.window(row, col, height, width, 0))
    }

    pub fn paste(&mut self, row: usize, col: usize, patch: &HintMap) {
        self.0.paste(row, col, &patch.0);
    }
}

impl Deref for HintMap {
    type Target = Grid<i8>;

    fn deref(&self) -> &Grid<i8> {
        &self.0
    }
}

/// Applies accumulated hints to a mask: `+1` forces foreground, `-1` forces
/// background, `0` keeps the prediction.
pub fn compose(y: &BinaryMask, delta: &HintMap) -> Result<BinaryMask> {
    y.ensure_same_dims(delta.grid())?;
    let data = y
        .as_slice()
        .iter()
        .zip(delta.as_slice())
        .map(|(&p, &d)| match d {
            1 => true,
            -1 => false,
            _ => p,
        })
        .collect();
    Grid::from_vec(y.height(), y.width(), data)
}

/// Merges a single-sign hint into `delta`. Entries already set in `delta`
/// are never overwritten.
pub fn accumulate(delta: &HintMap, new_hint: &HintMap) -> Result<HintMap> {
    delta.ensure_same_dims(new_hint.grid())?;
    new_hint.single_sign()?;
    let data = delta
        .as_slice()
        .iter()
        .zip(new_hint.as_slice())
        .map(|(&d, &h)| if d != 0 { d } else { h })
        .collect();
    Ok(HintMap(Grid::from_vec(delta.height(), delta.width(), data)?))
}

/// Number of pixels carrying annotator input.
pub fn annotated_pixel_count(delta: &HintMap) -> usize {
    delta.as_slice().iter().filter(|&&v| v != 0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(values: &[u8]) -> BinaryMask {
        Grid::from_vec(1, values.len(), values.iter().map(|&v| v != 0).collect()).unwrap()
    }

    fn hints(values: &[i8]) -> HintMap {
        HintMap::from_vec(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn compose_cases() {
        assert_eq!(
            compose(&mask(&[1, 0, 0]), &hints(&[-1, 0, 1])).unwrap(),
            mask(&[0, 0, 1])
        );
        assert_eq!(
            compose(&mask(&[1, 1]), &hints(&[1, -1])).unwrap(),
            mask(&[1, 0])
        );
        let y = mask(&[1, 0, 1, 1, 0]);
        assert_eq!(compose(&y, &HintMap::zeros(1, 5)).unwrap(), y);
    }

    #[test]
    fn compose_rejects_mismatched_dims() {
        let err = compose(&mask(&[1, 0]), &hints(&[0, 0, 0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn accumulate_keeps_existing_entries() {
        assert_eq!(
            accumulate(&hints(&[1, 0, 0]), &hints(&[-1, -1, 0])).unwrap(),
            hints(&[1, -1, 0])
        );
        let h = hints(&[0, 1, 1, 0]);
        assert_eq!(accumulate(&HintMap::zeros(1, 4), &h).unwrap(), h);
        assert_eq!(accumulate(&h, &HintMap::zeros(1, 4)).unwrap(), h);
    }

    #[test]
    fn accumulate_rejects_mixed_sign() {
        let err = accumulate(&HintMap::zeros(1, 2), &hints(&[1, -1])).unwrap_err();
        assert!(matches!(err, Error::InvalidHint(_)));
    }

    #[test]
    fn hint_values_validated() {
        assert!(HintMap::from_vec(1, 2, vec![2, 0]).is_err());
    }

    #[test]
    fn depth_rejects_non_finite() {
        assert!(DepthMap::from_vec(1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(DepthMap::from_vec(1, 2, vec![0.0, f32::INFINITY]).is_err());
    }

    #[test]
    fn annotated_count() {
        assert_eq!(annotated_pixel_count(&HintMap::zeros(3, 3)), 0);
        assert_eq!(annotated_pixel_count(&hints(&[1, -1, 0])), 2);
    }

    #[test]
    fn window_pads_and_paste_crops() {
        let g = Grid::from_fn(3, 3, |r, c| (r * 3 + c) as i32);
        let w = g.window(2, 1, 2, 3, -1);
        assert_eq!(w.as_slice(), &[7, 8, -1, -1, -1, -1]);
        let mut target = Grid::filled(3, 3, 0);
        target.paste(2, 1, &w);
        assert_eq!(target.get(2, 1), 7);
        assert_eq!(target.get(2, 2), 8);
    }
}
