//! IoU, precision, pseudo-recall and the pseudo-F-measure (pFM).
//!
//! Pseudo-recall counts hits on the ground-truth skeleton instead of the
//! full mask, so a prediction that traces every line is not penalised for
//! small width deviations.
//!
//! Empty-set conventions:
//! - precision of an empty prediction is 0;
//! - pseudo-recall against an empty skeleton is 1 for an empty prediction,
//!   otherwise 0;
//! - pFM of an empty prediction against empty ground truth is 1;
//! - IoU of two empty masks is 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::skeletonize;
use crate::raster::{BinaryMask, Grid};

/// Additive pixel counts from which every metric is derived. Counts from
/// disjoint regions can be summed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub pred: usize,
    pub gt: usize,
    pub overlap: usize,
    pub skeleton: usize,
    pub skeleton_hits: usize,
}

impl PixelCounts {
    /// Counts for `pred` against `gt` whose skeleton is `gt_skeleton`.
    pub fn measure(pred: &BinaryMask, gt: &BinaryMask, gt_skeleton: &BinaryMask) -> Result<Self> {
        pred.ensure_same_dims(gt)?;
        pred.ensure_same_dims(gt_skeleton)?;
        let mut counts = PixelCounts::default();
        for ((&p, &g), &s) in pred
            .as_slice()
            .iter()
            .zip(gt.as_slice())
            .zip(gt_skeleton.as_slice())
        {
            counts.pred += p as usize;
            counts.gt += g as usize;
            counts.overlap += (p && g) as usize;
            counts.skeleton += s as usize;
            counts.skeleton_hits += (p && s) as usize;
        }
        Ok(counts)
    }

    pub fn iou(&self) -> f64 {
        let union = self.pred + self.gt - self.overlap;
        if union == 0 {
            1.0
        } else {
            self.overlap as f64 / union as f64
        }
    }

    pub fn precision(&self) -> f64 {
        if self.pred == 0 {
            0.0
        } else {
            self.overlap as f64 / self.pred as f64
        }
    }

    pub fn p_recall(&self) -> f64 {
        if self.skeleton == 0 {
            if self.pred == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.skeleton_hits as f64 / self.skeleton as f64
        }
    }

    pub fn pfm(&self) -> f64 {
        if self.pred == 0 && self.gt == 0 {
            return 1.0;
        }
        let p = self.precision();
        let r = self.p_recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * r * p / (r + p)
        }
    }

    pub fn report(&self) -> MetricReport {
        MetricReport {
            iou: self.iou(),
            precision: self.precision(),
            p_recall: self.p_recall(),
            pfm: self.pfm(),
            pfm_delta: None,
        }
    }
}

impl std::ops::Add for PixelCounts {
    type Output = PixelCounts;

    fn add(self, o: PixelCounts) -> PixelCounts {
        PixelCounts {
            pred: self.pred + o.pred,
            gt: self.gt + o.gt,
            overlap: self.overlap + o.overlap,
            skeleton: self.skeleton + o.skeleton,
            skeleton_hits: self.skeleton_hits + o.skeleton_hits,
        }
    }
}

impl std::ops::Sub for PixelCounts {
    type Output = PixelCounts;

    fn sub(self, o: PixelCounts) -> PixelCounts {
        PixelCounts {
            pred: self.pred - o.pred,
            gt: self.gt - o.gt,
            overlap: self.overlap - o.overlap,
            skeleton: self.skeleton - o.skeleton,
            skeleton_hits: self.skeleton_hits - o.skeleton_hits,
        }
    }
}

/// Counts for `pred` against `gt`, skeletonising `gt`.
pub fn counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelCounts> {
    pred.ensure_same_dims(gt)?;
    PixelCounts::measure(pred, gt, &skeletonize(gt))
}

pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.ensure_same_dims(gt)?;
    let overlap = pred.overlap(gt)?;
    let union = pred.count_ones() + gt.count_ones() - overlap;
    Ok(if union == 0 {
        1.0
    } else {
        overlap as f64 / union as f64
    })
}

pub fn precision(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(counts(pred, gt)?.precision())
}

pub fn p_recall(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(counts(pred, gt)?.p_recall())
}

/// Harmonic mean of precision and pseudo-recall.
pub fn pfm(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(counts(pred, gt)?.pfm())
}

/// Relative pFM of `refined` over the manually `composed` mask.
pub fn pfm_delta(refined: &BinaryMask, composed: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    refined.ensure_same_dims(gt)?;
    composed.ensure_same_dims(gt)?;
    let skeleton = skeletonize(gt);
    let base = PixelCounts::measure(composed, gt, &skeleton)?.pfm();
    let refined = PixelCounts::measure(refined, gt, &skeleton)?.pfm();
    relative_improvement(refined, base)
}

/// `(refined - base) / base`; undefined for a zero base.
pub fn relative_improvement(refined: f64, base: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::UndefinedMetric(
            "pFM of the composed mask is zero".into(),
        ));
    }
    Ok((refined - base) / base)
}

/// Full metric set for one mask pair.
pub fn report(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricReport> {
    Ok(counts(pred, gt)?.report())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou: f64,
    pub precision: f64,
    pub p_recall: f64,
    pub pfm: f64,
    pub pfm_delta: Option<f64>,
}

impl MetricReport {
    /// Fixed-key JSON with six-decimal numbers, for golden files.
    pub fn to_golden_json(&self) -> String {
        let delta = self
            .pfm_delta
            .map_or_else(|| "null".to_string(), |d| format!("{d:.6}"));
        format!(
            "{{\"iou\":{:.6},\"precision\":{:.6},\"p_recall\":{:.6},\"pfm\":{:.6},\"pfm_delta\":{}}}",
            self.iou, self.precision, self.p_recall, self.pfm, delta
        )
    }
}

/// One tile of a whole-image evaluation, placed at `(row, col)`. Parts of a
/// tile beyond the image are padding and ignored.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub row: usize,
    pub col: usize,
    pub pred: BinaryMask,
    pub gt: BinaryMask,
}

/// Stitches `patches` into a `height x width` image and evaluates once on
/// the full-resolution masks. Patches must cover the image exactly once.
pub fn whole_mirror_metrics(patches: &[PatchPair], height: usize, width: usize) -> Result<MetricReport> {
    let mut coverage = Grid::filled(height, width, 0u8);
    let mut pred = BinaryMask::empty(height, width);
    let mut gt = BinaryMask::empty(height, width);
    for patch in patches {
        patch.pred.ensure_same_dims(&patch.gt)?;
        let (ph, pw) = patch.pred.dims();
        for r in patch.row..(patch.row + ph).min(height) {
            for c in patch.col..(patch.col + pw).min(width) {
                if coverage.get(r, c) > 0 {
                    return Err(Error::InvalidArgument(format!(
                        "patch at ({}, {}) overlaps pixel ({r}, {c})",
                        patch.row, patch.col
                    )));
                }
                coverage.set(r, c, 1);
            }
        }
        pred.paste(patch.row, patch.col, &patch.pred);
        gt.paste(patch.row, patch.col, &patch.gt);
    }
    if let Some(i) = coverage.as_slice().iter().position(|&v| v == 0) {
        return Err(Error::InvalidArgument(format!(
            "pixel ({}, {}) not covered by any patch",
            i / width,
            i % width
        )));
    }
    report(&pred, &gt)
}
