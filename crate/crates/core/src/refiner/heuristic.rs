//! Deterministic depth-driven refinement.
//!
//! Add strokes grow along grooves: starting from the stroke, a breadth-first
//! search walks at most `radius` steps through pixels deeper (lower) than a
//! local threshold. The threshold is the smaller of the `quantile` of depth in
//! the stroke's neighbourhood and the midpoint between the median depth under
//! the stroke and the median depth of that neighbourhood, so flat or noisy
//! regions do not grow.
//!
//! Erase strokes remove the connected components of `Y` they touch, limited
//! to `radius` steps from the stroke. Only pixels whose depth is close to the
//! depth under the stroke are taken along; anything clearly deeper or
//! shallower acts as a barrier, so a scratch touching a real engraving does
//! not take the engraving with it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::morphology::label_components;
use crate::raster::{compose, BinaryMask, Grid, Sign};

use super::{RefineRequest, Refiner};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicParams {
    /// Geodesic growth radius in pixels.
    pub radius: usize,
    /// Depth quantile of the neighbourhood below which pixels count as groove.
    pub quantile: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            radius: 24,
            quantile: 0.3,
        }
    }
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn step(r: usize, c: usize, d: (isize, isize), h: usize, w: usize) -> Option<(usize, usize)> {
    let nr = r as isize + d.0;
    let nc = c as isize + d.1;
    (nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w).then(|| (nr as usize, nc as usize))
}

/// Multi-source BFS from `seeds` through pixels accepted by `pass`, at most
/// `radius` steps deep. Seeds are included.
fn geodesic_reach(
    seeds: &[(usize, usize)],
    dims: (usize, usize),
    radius: usize,
    pass: impl Fn(usize, usize) -> bool,
) -> BinaryMask {
    let (h, w) = dims;
    let mut dist = Grid::filled(h, w, usize::MAX);
    let mut queue = VecDeque::new();
    for &(r, c) in seeds {
        dist.set(r, c, 0);
        queue.push_back((r, c));
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist.get(r, c);
        if d == radius {
            continue;
        }
        for off in NEIGHBOURS {
            if let Some((nr, nc)) = step(r, c, off, h, w) {
                if dist.get(nr, nc) == usize::MAX && pass(nr, nc) {
                    dist.set(nr, nc, d + 1);
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    dist.map(|d| d != usize::MAX)
}

fn quantile(sorted: &[f32], q: f64) -> f32 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = (pos - lo as f64) as f32;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_values(values: impl Iterator<Item = f32>) -> Vec<f32> {
    let mut v: Vec<f32> = values.collect();
    v.sort_by(f32::total_cmp);
    v
}

fn components_of(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (labels, count) = label_components(mask);
    let mut out = vec![Vec::new(); count];
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            let l = labels.get(r, c);
            if l > 0 {
                out[l as usize - 1].push((r, c));
            }
        }
    }
    out
}

fn grow_add(request: &RefineRequest, stroke: &[(usize, usize)], params: &HeuristicParams) -> BinaryMask {
    let (h, w) = request.dims();
    let depth = &request.depth;
    let (rows, cols) = window_around(stroke, (h, w), params.radius);
    let hood = sorted_values(
        rows.clone()
            .flat_map(|r| cols.clone().map(move |c| (r, c)))
            .map(|(r, c)| depth.get(r, c)),
    );
    let under = sorted_values(stroke.iter().map(|&(r, c)| depth.get(r, c)));
    let threshold = quantile(&hood, params.quantile)
        .min((quantile(&under, 0.5) + quantile(&hood, 0.5)) / 2.0);
    geodesic_reach(stroke, (h, w), params.radius, |r, c| {
        rows.contains(&r) && cols.contains(&c) && depth.get(r, c) < threshold
    })
}

fn window_around(stroke: &[(usize, usize)], dims: (usize, usize), radius: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let r0 = stroke.iter().map(|p| p.0).min().unwrap_or(0);
    let r1 = stroke.iter().map(|p| p.0).max().unwrap_or(0);
    let c0 = stroke.iter().map(|p| p.1).min().unwrap_or(0);
    let c1 = stroke.iter().map(|p| p.1).max().unwrap_or(0);
    (
        r0.saturating_sub(radius)..(r1 + radius + 1).min(dims.0),
        c0.saturating_sub(radius)..(c1 + radius + 1).min(dims.1),
    )
}

/// Depth band `(lo, hi)` of pixels an erase stroke may take along: depths
/// close to the median under the stroke. Tolerance is four robust noise
/// deviations (estimated from neighbouring-pixel differences) or half the
/// stroke contrast, whichever is larger.
fn erase_band(request: &RefineRequest, stroke: &[(usize, usize)], params: &HeuristicParams) -> (f32, f32) {
    let depth = &request.depth;
    let (rows, cols) = window_around(stroke, request.dims(), params.radius);
    let hood = sorted_values(
        rows.clone()
            .flat_map(|r| cols.clone().map(move |c| (r, c)))
            .map(|(r, c)| depth.get(r, c)),
    );
    let under = sorted_values(stroke.iter().map(|&(r, c)| depth.get(r, c)));
    let median = quantile(&under, 0.5);
    let hood_median = quantile(&hood, 0.5);
    let diffs = sorted_values(
        rows.flat_map(|r| cols.clone().skip(1).map(move |c| (r, c)))
            .map(|(r, c)| (depth.get(r, c) - depth.get(r, c - 1)).abs()),
    );
    let noise = if diffs.is_empty() {
        0.0
    } else {
        1.4826 * quantile(&diffs, 0.5) / std::f32::consts::SQRT_2
    };
    let tol = (4.0 * noise).max(0.5 * (median - hood_median).abs());
    (median - tol, median + tol)
}

/// Refines `request` with the groove-following heuristic. Deterministic; the
/// request seed is unused.
pub fn heuristic_refine(request: &RefineRequest, params: &HeuristicParams) -> Result<BinaryMask> {
    request.validate()?;
    let dims = request.dims();
    let mut out = request.composed();
    for stroke in components_of(&request.hints.mask_of(Sign::Add)) {
        let grown = grow_add(request, &stroke, params);
        for (o, &g) in out.as_mut_slice().iter_mut().zip(grown.as_slice()) {
            *o |= g;
        }
    }
    for stroke in components_of(&request.hints.mask_of(Sign::Erase)) {
        let (lo, hi) = erase_band(request, &stroke, params);
        let depth = &request.depth;
        let eligible = Grid::from_fn(dims.0, dims.1, |r, c| {
            let d = depth.get(r, c);
            request.prediction.get(r, c) && (lo..=hi).contains(&d)
        });
        let (labels, _) = label_components(&eligible);
        let mut touched: Vec<u32> = stroke
            .iter()
            .map(|&(r, c)| labels.get(r, c))
            .filter(|&l| l > 0)
            .collect();
        touched.sort_unstable();
        touched.dedup();
        if touched.is_empty() {
            continue;
        }
        let reach = geodesic_reach(&stroke, dims, params.radius, |r, c| {
            touched.binary_search(&labels.get(r, c)).is_ok()
        });
        for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
            if reach.as_slice()[i] && labels.as_slice()[i] > 0 {
                *o = false;
            }
        }
    }
    compose(&out, &request.hints)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicRefiner {
    pub params: HeuristicParams,
}

impl HeuristicRefiner {
    pub fn new(params: HeuristicParams) -> Self {
        HeuristicRefiner { params }
    }
}

impl Refiner for HeuristicRefiner {
    fn name(&self) -> String {
        format!("heuristic(R={}, q={})", self.params.radius, self.params.quantile)
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        heuristic_refine(request, &self.params)
    }
}
