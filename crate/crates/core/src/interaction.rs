//! Simulated annotator: locate the largest missing or superfluous line
//! segment and turn a short piece of it into an add or erase stroke.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, get_edges, label_connectivity, skeletonize, Segment};
use crate::raster::{BinaryMask, HintMap, Sign};
use crate::seed;
use crate::stats::{sample_width, StrokeWidthStats, WidthMode};

/// Longest simulated stroke, in center-line pixels.
pub const DEFAULT_MAX_SUB_LEN: usize = 11;

/// Skeletonised false negatives: ground-truth skeleton pixels the prediction
/// misses.
pub fn get_add(gt: &BinaryMask, pred: &BinaryMask) -> Result<BinaryMask> {
    gt.ensure_same_dims(pred)?;
    skeletonize(gt).and_not(pred)
}

/// Skeletonised false positives that lie outside the ground-truth skeleton
/// dilated by `round(mu + 2·sigma)`.
pub fn get_erase(gt: &BinaryMask, pred: &BinaryMask, mu: f64, sigma: f64) -> Result<BinaryMask> {
    gt.ensure_same_dims(pred)?;
    let expanded = dilate(&skeletonize(gt), (mu + 2.0 * sigma).round())?;
    skeletonize(pred).and_not(&expanded)
}

/// Ground-truth derived rasters reused across many hints on the same patch.
#[derive(Clone, Debug)]
pub struct GroundTruthView {
    skeleton: BinaryMask,
    expanded: BinaryMask,
}

impl GroundTruthView {
    pub fn new(gt: &BinaryMask, stats: &StrokeWidthStats) -> Result<Self> {
        let skeleton = skeletonize(gt);
        let expanded = dilate(&skeleton, stats.lenient_width())?;
        Ok(GroundTruthView { skeleton, expanded })
    }

    /// Window of a full-image view, padded with background. Computing the
    /// view once on the full image keeps patch borders consistent.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Self {
        GroundTruthView {
            skeleton: self.skeleton.window(row, col, height, width, false),
            expanded: self.expanded.window(row, col, height, width, false),
        }
    }

    pub fn skeleton(&self) -> &BinaryMask {
        &self.skeleton
    }

    pub fn expanded(&self) -> &BinaryMask {
        &self.expanded
    }

    pub fn add_candidates(&self, pred: &BinaryMask) -> Result<BinaryMask> {
        self.skeleton.and_not(pred)
    }

    pub fn erase_candidates(&self, pred: &BinaryMask) -> Result<BinaryMask> {
        self.skeleton.ensure_same_dims(pred)?;
        self.erase_candidates_from_skeleton(&skeletonize(pred))
    }

    /// Erase candidates from an already skeletonised prediction.
    pub fn erase_candidates_from_skeleton(&self, pred_skeleton: &BinaryMask) -> Result<BinaryMask> {
        pred_skeleton.and_not(&self.expanded)
    }
}

/// How the operation is chosen when both are possible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintPolicy {
    /// Uniform choice between the available operations.
    RandomOp,
    /// The operation whose largest segment has more pixels.
    #[default]
    LongerSegment,
}

impl FromStr for HintPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_op" => Ok(HintPolicy::RandomOp),
            "longer_segment" => Ok(HintPolicy::LongerSegment),
            other => Err(Error::InvalidArgument(format!("unknown hint policy `{other}`"))),
        }
    }
}

impl fmt::Display for HintPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HintPolicy::RandomOp => "random_op",
            HintPolicy::LongerSegment => "longer_segment",
        })
    }
}

/// One simulated or human stroke.
#[derive(Clone, Debug, PartialEq)]
pub struct Hint {
    pub operation: Sign,
    /// Single-sign raster of the dilated stroke.
    pub stroke: HintMap,
    /// Pixels the stroke was drawn along, in path order.
    pub center_line: Vec<(usize, usize)>,
    pub source_segment_size: usize,
    pub width_used: f64,
}

impl Hint {
    /// Builds a stroke by dilating `center_line` to `width` and signing it.
    pub fn from_center_line(
        height: usize,
        width_px: usize,
        operation: Sign,
        center_line: Vec<(usize, usize)>,
        width: f64,
    ) -> Result<Hint> {
        if center_line.is_empty() {
            return Err(Error::InvalidHint("stroke has no pixels".into()));
        }
        if let Some(&(r, c)) = center_line.iter().find(|&&(r, c)| r >= height || c >= width_px) {
            return Err(Error::InvalidHint(format!(
                "stroke pixel ({r}, {c}) outside {height}x{width_px}"
            )));
        }
        let line = BinaryMask::from_pixels(height, width_px, &center_line);
        let stroke = HintMap::from_mask(&dilate(&line, width)?, operation);
        Ok(Hint {
            operation,
            stroke,
            source_segment_size: center_line.len(),
            center_line,
            width_used: width,
        })
    }
}

/// Simulation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintConfig {
    pub policy: HintPolicy,
    pub width_mode: WidthMode,
    pub max_sub_len: usize,
}

impl Default for HintConfig {
    fn default() -> Self {
        HintConfig {
            policy: HintPolicy::LongerSegment,
            width_mode: WidthMode::Conservative,
            max_sub_len: DEFAULT_MAX_SUB_LEN,
        }
    }
}

/// Largest correctable segment of a candidate mask: the longest skeleton
/// edge run, or the largest component when the mask has no edge pixels.
fn largest_segment(candidates: &BinaryMask) -> Option<Segment> {
    ranked_segments(candidates).into_iter().next()
}

/// Candidate segments, largest first: the `get_edges` segments, then the
/// connected pieces (short blobs, junction clusters) no edge segment touches.
pub fn ranked_segments(candidates: &BinaryMask) -> Vec<Segment> {
    if !candidates.any() {
        return Vec::new();
    }
    let mut ranked = get_edges(candidates).into_vec();
    let covered = BinaryMask::from_pixels(
        candidates.height(),
        candidates.width(),
        &ranked.iter().flat_map(|s| s.pixels().iter().copied()).collect::<Vec<_>>(),
    );
    let rest = label_connectivity(candidates)
        .into_vec()
        .into_iter()
        .filter(|comp| !comp.pixels().iter().any(|&(r, c)| covered.get(r, c)));
    ranked.extend(rest);
    ranked
}

/// Orders segment pixels along the curve: start from the pixel with the
/// fewest in-segment neighbours (smallest `(row, col)` on ties) and sort by
/// geodesic 8-connected distance from it.
pub fn path_order(segment: &Segment) -> Vec<(usize, usize)> {
    let pixels = segment.pixels();
    if pixels.len() <= 1 {
        return pixels.to_vec();
    }
    let lookup = |p: (usize, usize)| pixels.binary_search(&p).ok();
    let neighbours = |&(r, c): &(usize, usize)| {
        let mut out = Vec::with_capacity(8);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if (dr, dc) == (0, 0) {
                    continue;
                }
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 {
                    continue;
                }
                if let Some(i) = lookup((nr as usize, nc as usize)) {
                    out.push(i);
                }
            }
        }
        out
    };
    let start = (0..pixels.len())
        .min_by_key(|&i| (neighbours(&pixels[i]).len(), pixels[i]))
        .unwrap_or(0);
    let mut dist = vec![usize::MAX; pixels.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for j in neighbours(&pixels[i]) {
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut order: Vec<usize> = (0..pixels.len()).collect();
    order.sort_by_key(|&i| (dist[i], pixels[i]));
    order.into_iter().map(|i| pixels[i]).collect()
}

fn stroke_from_segment(
    dims: (usize, usize),
    operation: Sign,
    segment: &Segment,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng: &mut impl Rng,
    width_seed: u64,
) -> Result<Hint> {
    let path = path_order(segment);
    let max_len = config.max_sub_len.max(1);
    let len = rng.random_range(1..=max_len).min(path.len());
    let start = rng.random_range(0..=path.len() - len);
    let center_line = path[start..start + len].to_vec();
    let width = sample_width(stats, config.width_mode, width_seed);
    let mut hint = Hint::from_center_line(dims.0, dims.1, operation, center_line, width)?;
    hint.source_segment_size = segment.len();
    Ok(hint)
}

fn validate(gt: &BinaryMask, pred: &BinaryMask, config: &HintConfig) -> Result<()> {
    gt.ensure_same_dims(pred)?;
    if config.max_sub_len == 0 {
        return Err(Error::InvalidArgument("max_sub_len must be >= 1".into()));
    }
    Ok(())
}

/// Simulates one annotator interaction on `pred` against `gt`.
///
/// Returns `None` when there is nothing left to add or erase.
pub fn make_hint(
    gt: &BinaryMask,
    pred: &BinaryMask,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng_seed: u64,
) -> Result<Option<Hint>> {
    validate(gt, pred, config)?;
    let view = GroundTruthView::new(gt, stats)?;
    make_hint_with(&view, pred, stats, config, rng_seed)
}

/// [`make_hint`] with precomputed ground-truth rasters.
pub fn make_hint_with(
    view: &GroundTruthView,
    pred: &BinaryMask,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng_seed: u64,
) -> Result<Option<Hint>> {
    validate(view.skeleton(), pred, config)?;
    let add = largest_segment(&view.add_candidates(pred)?);
    let erase = largest_segment(&view.erase_candidates(pred)?);
    let mut rng = seed::rng(rng_seed);
    let chosen = match (add, erase) {
        (None, None) => return Ok(None),
        (Some(a), None) => (Sign::Add, a),
        (None, Some(e)) => (Sign::Erase, e),
        (Some(a), Some(e)) => match config.policy {
            HintPolicy::RandomOp => {
                if rng.random_bool(0.5) {
                    (Sign::Add, a)
                } else {
                    (Sign::Erase, e)
                }
            }
            HintPolicy::LongerSegment => {
                if e.len() > a.len() {
                    (Sign::Erase, e)
                } else {
                    (Sign::Add, a)
                }
            }
        },
    };
    let width_seed = seed::derive(rng_seed, &[0x5769_6474_68]);
    stroke_from_segment(pred.dims(), chosen.0, &chosen.1, stats, config, &mut rng, width_seed)
        .map(Some)
}

/// Simulates a hint restricted to one operation; `None` when that operation
/// has nothing to correct.
pub fn make_hint_for(
    view: &GroundTruthView,
    pred: &BinaryMask,
    operation: Sign,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng_seed: u64,
) -> Result<Option<Hint>> {
    validate(view.skeleton(), pred, config)?;
    let candidates = match operation {
        Sign::Add => view.add_candidates(pred)?,
        Sign::Erase => view.erase_candidates(pred)?,
    };
    make_hint_from_candidates(&candidates, operation, stats, config, rng_seed)
}

/// Stroke on the largest segment of a precomputed candidate mask, as
/// returned by [`GroundTruthView::add_candidates`] or
/// [`GroundTruthView::erase_candidates`].
pub fn make_hint_from_candidates(
    candidates: &BinaryMask,
    operation: Sign,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng_seed: u64,
) -> Result<Option<Hint>> {
    validate(candidates, candidates, config)?;
    let Some(segment) = largest_segment(candidates) else {
        return Ok(None);
    };
    make_hint_on_segment(candidates.dims(), &segment, operation, stats, config, rng_seed).map(Some)
}

/// Stroke on a given segment, e.g. one of [`ranked_segments`].
pub fn make_hint_on_segment(
    dims: (usize, usize),
    segment: &Segment,
    operation: Sign,
    stats: &StrokeWidthStats,
    config: &HintConfig,
    rng_seed: u64,
) -> Result<Hint> {
    if config.max_sub_len == 0 {
        return Err(Error::InvalidArgument("max_sub_len must be >= 1".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let width_seed = seed::derive(rng_seed, &[0x5769_6474_68]);
    stroke_from_segment(dims, operation, segment, stats, config, &mut rng, width_seed)
}
