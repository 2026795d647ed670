//! Server-side rasterization of brush strokes.

use serde::{Deserialize, Serialize};

use etchloop_core::morphology::dilate;
use etchloop_core::{BinaryMask, Error, HintMap, Result, Sign};

/// A brush stroke in patch pixel coordinates (`x` = column, `y` = row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub polyline: Vec<[f64; 2]>,
    pub width: f64,
    pub sign: Sign,
}

/// Integer points on the segment from `a` to `b` (both inclusive).
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Center line of `polyline` clipped to a `height x width` raster.
pub fn polyline_mask(height: usize, width: usize, polyline: &[[f64; 2]]) -> BinaryMask {
    let mut mask = BinaryMask::empty(height, width);
    let pts: Vec<(i64, i64)> = polyline
        .iter()
        .map(|p| (p[0].round() as i64, p[1].round() as i64))
        .collect();
    let mut plot = |(x, y): (i64, i64)| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            mask.set(y as usize, x as usize, true);
        }
    };
    match pts.as_slice() {
        [] => {}
        [p] => plot(*p),
        _ => {
            for pair in pts.windows(2) {
                bresenham(pair[0], pair[1]).into_iter().for_each(&mut plot);
            }
        }
    }
    mask
}

impl Stroke {
    pub fn validate(&self) -> Result<()> {
        if self.polyline.is_empty() {
            return Err(Error::InvalidHint("stroke has no points".into()));
        }
        if self.polyline.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHint("stroke coordinates must be finite".into()));
        }
        if !(self.width >= 1.0 && self.width.is_finite()) {
            return Err(Error::InvalidHint(format!("brush width must be >= 1, got {}", self.width)));
        }
        Ok(())
    }

    /// Single-sign hint: the polyline dilated to the brush width. Errors
    /// when nothing lands inside the raster.
    pub fn rasterize(&self, height: usize, width: usize) -> Result<HintMap> {
        self.validate()?;
        let line = polyline_mask(height, width, &self.polyline);
        let footprint = dilate(&line, self.width)?;
        if !footprint.any() {
            return Err(Error::InvalidHint("stroke lies outside the patch".into()));
        }
        Ok(HintMap::from_mask(&footprint, self.sign))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bresenham_endpoints_and_connectivity() {
        for (a, b) in [((0, 0), (7, 3)), ((5, 5), (-2, 9)), ((3, 3), (3, 3)), ((0, 4), (0, -4))] {
            let pts = bresenham(a, b);
            assert_eq!(pts.first(), Some(&a));
            assert_eq!(pts.last(), Some(&b));
            let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()) as usize + 1;
            assert_eq!(pts.len(), n);
            assert!(pts.windows(2).all(|w| (w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1));
        }
    }

    #[test]
    fn width_one_stroke_is_the_center_line() {
        let s = Stroke {
            polyline: vec![[1.0, 2.0], [6.0, 2.0]],
            width: 1.0,
            sign: Sign::Add,
        };
        let h = s.rasterize(5, 8).unwrap();
        let expected = BinaryMask::from_pixels(5, 8, &[(2, 1), (2, 2), (2, 3), (2, 4), (2, 5), (2, 6)]);
        assert_eq!(h.mask_of(Sign::Add), expected);
    }

    #[test]
    fn rejects_bad_strokes() {
        let off = Stroke {
            polyline: vec![[50.0, 50.0], [60.0, 60.0]],
            width: 3.0,
            sign: Sign::Erase,
        };
        assert!(off.rasterize(10, 10).is_err());
        let thin = Stroke { width: 0.5, ..off.clone() };
        assert!(thin.validate().is_err());
        let empty = Stroke { polyline: vec![], ..off };
        assert!(empty.validate().is_err());
    }
}
