//! Greedy interactive refinement over a mirror's patch grid.
//!
//! In simulated mode the ground truth drives patch selection and hint
//! generation; each [`SessionState::step`] probes an add and an erase hint on
//! the worst patch, runs the refiner on both and commits the one that raises
//! whole-mirror pFM the most. Each probe starts on the largest candidate
//! segment and moves to the next one only if the hint does not help. A patch
//! where no probe helps is marked converged; once every patch is marked, a fresh sweep starts only if
//! something was committed since the previous one.
//!
//! In live mode hints come from a person through
//! [`SessionState::apply_live_hint`] and are journaled.

pub mod journal;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{make_hint_on_segment, ranked_segments, GroundTruthView, HintConfig};
use crate::morphology::skeletonize;
use crate::metrics::{relative_improvement, MetricReport, PixelCounts};
use crate::preprocess::{extract_eval_patches, PatchGrid, PatchSpec, DEFAULT_PATCH_SIZE};
use crate::raster::{accumulate, annotated_pixel_count, compose, BinaryMask, DepthMap, HintMap, Sign};
use crate::refiner::{RefineRequest, Refiner};
use crate::seed;
use crate::stats::StrokeWidthStats;

pub use journal::{read_journal, HintRle, Journal, JournalOp, JournalRecord};

/// Interaction budget per mirror.
pub const DEFAULT_CAP: usize = 3000;

/// Neighbouring context, in pixels, included when skeletonising a patch
/// prediction so that lines cut by the patch border thin as in the full image.
const SKELETON_CONTEXT: usize = 16;
/// Candidate segments probed per operation before a patch counts as done.
const SEGMENT_TRIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulated,
    Live,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub patch_size: usize,
    pub cap: usize,
    pub seed: u64,
    pub hint: HintConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            patch_size: DEFAULT_PATCH_SIZE,
            cap: DEFAULT_CAP,
            seed: 0,
            hint: HintConfig::default(),
        }
    }
}

/// Full-resolution rasters a session is built from.
#[derive(Clone, Debug)]
pub struct SessionInput {
    pub depth: DepthMap,
    pub pred_init: BinaryMask,
    pub foreground: BinaryMask,
    pub gt: Option<BinaryMask>,
}

impl From<crate::io::Mirror> for SessionInput {
    fn from(m: crate::io::Mirror) -> Self {
        SessionInput {
            depth: m.depth,
            pred_init: m.pred_init,
            foreground: m.foreground,
            gt: m.gt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub patch: usize,
    pub op: Sign,
    /// Whole-mirror pFM of the current prediction (simulated mode only).
    pub pfm: Option<f64>,
    /// Whole-mirror pFM of the initial prediction composed with all hints.
    pub pfm_composed: Option<f64>,
    pub pfm_delta: Option<f64>,
    /// Total hinted pixels over the mirror after this step.
    pub annotated_pixels: usize,
}

#[derive(Clone, Debug)]
struct PatchTruth {
    gt: BinaryMask,
    view: GroundTruthView,
}

impl PatchTruth {
    fn counts(&self, mask: &BinaryMask) -> PixelCounts {
        PixelCounts::measure(mask, &self.gt, self.view.skeleton()).expect("patch rasters share dims")
    }
}

/// One patch of the grid. Rasters are padded to the full patch size.
#[derive(Clone, Debug)]
pub struct PatchState {
    pub spec: PatchSpec,
    pub depth: DepthMap,
    pub init: BinaryMask,
    pub pred: BinaryMask,
    pub delta: HintMap,
    pub hints_applied: usize,
    truth: Option<PatchTruth>,
}

impl PatchState {
    pub fn gt(&self) -> Option<&BinaryMask> {
        self.truth.as_ref().map(|t| &t.gt)
    }

    /// `compose(Y_init, Δ)`.
    pub fn composed(&self) -> BinaryMask {
        compose(&self.init, &self.delta).expect("patch rasters share dims")
    }
}

#[derive(Clone, Debug)]
struct Snapshot {
    patch: usize,
    pred: BinaryMask,
    delta: HintMap,
    hints_applied: usize,
    converged: Vec<bool>,
    commits_since_sweep: bool,
}

struct Candidate {
    op: Sign,
    hint: HintMap,
    delta: HintMap,
    refined: BinaryMask,
    counts: PixelCounts,
    pfm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Committed(HistoryEntry),
    Converged,
}

pub struct SessionState {
    mode: Mode,
    config: SessionConfig,
    grid: PatchGrid,
    patches: Vec<PatchState>,
    refiner: Arc<dyn Refiner>,
    stats: Option<StrokeWidthStats>,
    interaction_count: usize,
    history: Vec<HistoryEntry>,
    snapshots: Vec<Snapshot>,
    converged: Vec<bool>,
    commits_since_sweep: bool,
    pred_counts: Vec<PixelCounts>,
    composed_counts: Vec<PixelCounts>,
    annotated: Vec<usize>,
    initial_pfm: Option<f64>,
    journal: Option<Journal>,
}

impl fmt::Debug for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionState")
            .field("mode", &self.mode)
            .field("refiner", &self.refiner.name())
            .field("patches", &self.patches.len())
            .field("interaction_count", &self.interaction_count)
            .field("history", &self.history)
            .finish()
    }
}

/// States are equal when their masks, hints, counters and history match.
impl PartialEq for SessionState {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.interaction_count == other.interaction_count
            && self.history == other.history
            && self.patches.len() == other.patches.len()
            && self.patches.iter().zip(&other.patches).all(|(a, b)| {
                a.spec == b.spec && a.pred == b.pred && a.delta == b.delta && a.hints_applied == b.hints_applied
            })
    }
}

impl SessionState {
    /// Simulated session; `input.gt` is required.
    pub fn simulated(
        input: SessionInput,
        stats: StrokeWidthStats,
        refiner: Arc<dyn Refiner>,
        config: SessionConfig,
    ) -> Result<Self> {
        let gt = input.gt.clone().ok_or(Error::LiveMode)?;
        let view = GroundTruthView::new(&gt, &stats)?;
        Self::build(Mode::Simulated, input, Some((gt, view)), Some(stats), refiner, config)
    }

    /// Live session; any ground truth in `input` is ignored.
    pub fn live(input: SessionInput, refiner: Arc<dyn Refiner>, config: SessionConfig) -> Result<Self> {
        Self::build(Mode::Live, input, None, None, refiner, config)
    }

    fn build(
        mode: Mode,
        input: SessionInput,
        truth: Option<(BinaryMask, GroundTruthView)>,
        stats: Option<StrokeWidthStats>,
        refiner: Arc<dyn Refiner>,
        config: SessionConfig,
    ) -> Result<Self> {
        if config.cap == 0 {
            return Err(Error::InvalidArgument("interaction cap must be >= 1".into()));
        }
        let (h, w) = input.depth.dims();
        input.depth.ensure_same_dims(&input.pred_init)?;
        input.depth.ensure_same_dims(&input.foreground)?;
        if let Some((gt, _)) = &truth {
            input.depth.ensure_same_dims(gt)?;
        }
        let grid = extract_eval_patches(h, w, &input.foreground, config.patch_size)?;
        let p = config.patch_size;
        let mut patches = Vec::with_capacity(grid.patches.len());
        for spec in &grid.patches {
            let depth = DepthMap::new(grid.extract(spec, &input.depth, 0.0))?;
            let init = grid.extract(spec, &input.pred_init, false);
            let truth = truth.as_ref().map(|(gt, view)| PatchTruth {
                gt: grid.extract(spec, gt, false),
                view: view.crop(spec.row, spec.col, p, p),
            });
            patches.push(PatchState {
                spec: *spec,
                depth,
                pred: init.clone(),
                init,
                delta: HintMap::zeros(p, p),
                hints_applied: 0,
                truth,
            });
        }
        let pred_counts: Vec<PixelCounts> = patches
            .iter()
            .filter_map(|s| s.truth.as_ref().map(|t| t.counts(&s.pred)))
            .collect();
        let n = patches.len();
        let mut state = SessionState {
            mode,
            config,
            grid,
            refiner,
            stats,
            interaction_count: 0,
            history: Vec::new(),
            snapshots: Vec::new(),
            converged: vec![false; n],
            commits_since_sweep: false,
            composed_counts: pred_counts.clone(),
            pred_counts,
            annotated: vec![0; n],
            initial_pfm: None,
            journal: None,
            patches,
        };
        state.initial_pfm = state.pfm();
        Ok(state)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn patches(&self) -> &[PatchState] {
        &self.patches
    }

    pub fn patch(&self, k: usize) -> Result<&PatchState> {
        self.patches
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no patch {k} (grid has {})", self.patches.len())))
    }

    pub fn refiner_name(&self) -> String {
        self.refiner.name()
    }

    pub fn interaction_count(&self) -> usize {
        self.interaction_count
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn annotated_pixels(&self) -> usize {
        self.annotated.iter().sum()
    }

    pub fn attach_journal(&mut self, journal: Journal) {
        self.journal = Some(journal);
    }

    pub fn detach_journal(&mut self) -> Option<Journal> {
        self.journal.take()
    }

    fn total(counts: &[PixelCounts]) -> PixelCounts {
        counts.iter().fold(PixelCounts::default(), |a, &b| a + b)
    }

    /// Whole-mirror pFM of the current prediction; `None` in live mode.
    pub fn pfm(&self) -> Option<f64> {
        (self.mode == Mode::Simulated).then(|| Self::total(&self.pred_counts).pfm())
    }

    /// Whole-mirror pFM of `compose(Y_init, Δ)`.
    pub fn pfm_composed(&self) -> Option<f64> {
        (self.mode == Mode::Simulated).then(|| Self::total(&self.composed_counts).pfm())
    }

    pub fn initial_pfm(&self) -> Option<f64> {
        self.initial_pfm
    }

    /// Whole-mirror metrics, with pFM_Δ when the composed pFM is nonzero.
    pub fn metrics(&self) -> Option<MetricReport> {
        if self.mode != Mode::Simulated {
            return None;
        }
        let mut report = Self::total(&self.pred_counts).report();
        report.pfm_delta = relative_improvement(report.pfm, Self::total(&self.composed_counts).pfm()).ok();
        Some(report)
    }

    /// Per-patch pFM of the current prediction (simulated mode).
    pub fn patch_pfm(&self, k: usize) -> Option<f64> {
        self.pred_counts.get(k).map(PixelCounts::pfm)
    }

    pub fn stitched_prediction(&self) -> BinaryMask {
        let parts: Vec<BinaryMask> = self.patches.iter().map(|p| p.pred.clone()).collect();
        self.grid.stitch(&parts, false).expect("one raster per patch")
    }

    pub fn stitched_delta(&self) -> HintMap {
        let parts: Vec<crate::raster::Grid<i8>> = self.patches.iter().map(|p| p.delta.grid().clone()).collect();
        HintMap::new(self.grid.stitch(&parts, 0).expect("one raster per patch")).expect("ternary hints")
    }

    /// Kept, not yet converged patch with the lowest pFM; ties go to the
    /// lower index. Patches whose prediction and ground truth are both empty
    /// are never selected.
    pub fn select_patch(&self) -> Result<Option<usize>> {
        if self.mode == Mode::Live {
            return Err(Error::LiveMode);
        }
        let mut best: Option<(usize, f64)> = None;
        for (k, patch) in self.patches.iter().enumerate() {
            let counts = &self.pred_counts[k];
            if !patch.spec.keep || self.converged[k] || (counts.pred == 0 && counts.gt == 0) {
                continue;
            }
            let pfm = counts.pfm();
            if best.is_none_or(|(_, b)| pfm < b) {
                best = Some((k, pfm));
            }
        }
        Ok(best.map(|(k, _)| k))
    }

    fn check_budget(&self) -> Result<()> {
        if self.interaction_count >= self.config.cap {
            Err(Error::BudgetExhausted(self.config.cap))
        } else {
            Ok(())
        }
    }

    fn probe(&self, k: usize) -> Result<Option<Candidate>> {
        let patch = &self.patches[k];
        let truth = patch.truth.as_ref().ok_or(Error::LiveMode)?;
        let stats = self.stats.as_ref().ok_or(Error::LiveMode)?;
        let total = Self::total(&self.pred_counts);
        let current = total.pfm();
        let mut best: Option<Candidate> = None;
        for (tag, op) in [(1u64, Sign::Add), (2, Sign::Erase)] {
            let hint_seed = seed::derive(self.config.seed, &[self.interaction_count as u64, k as u64, tag]);
            let candidates = match op {
                Sign::Add => truth.view.add_candidates(&patch.pred)?,
                Sign::Erase => truth.view.erase_candidates_from_skeleton(&self.context_skeleton(k))?,
            };
            // largest segment first; smaller ones only when it does not help
            for (i, segment) in ranked_segments(&candidates).iter().take(SEGMENT_TRIES).enumerate() {
                let seg_seed = if i == 0 { hint_seed } else { seed::derive(hint_seed, &[i as u64]) };
                let hint = make_hint_on_segment(candidates.dims(), segment, op, stats, &self.config.hint, seg_seed)?;
                let delta = accumulate(&patch.delta, &hint.stroke)?;
                let request = RefineRequest::new(
                    patch.depth.clone(),
                    patch.pred.clone(),
                    delta.clone(),
                    seed::derive(seg_seed, &[0x7265_6669_6e65]),
                )?
                .with_origin((patch.spec.row, patch.spec.col));
                let refined = self.clip_to_image(k, self.refiner.refine(&request)?);
                let counts = truth.counts(&refined);
                let pfm = (total - self.pred_counts[k] + counts).pfm();
                if pfm > current {
                    if best.as_ref().is_none_or(|b| pfm > b.pfm) {
                        best = Some(Candidate {
                            op,
                            hint: hint.stroke,
                            delta,
                            refined,
                            counts,
                            pfm,
                        });
                    }
                    break;
                }
            }
        }
        Ok(best)
    }

    /// Skeleton of the stitched prediction around patch `k`, cropped to it.
    fn context_skeleton(&self, k: usize) -> BinaryMask {
        let p = self.config.patch_size;
        let m = SKELETON_CONTEXT;
        let spec = &self.patches[k].spec;
        let (top, left) = (spec.row as isize - m as isize, spec.col as isize - m as isize);
        let side = p + 2 * m;
        let mut window = BinaryMask::empty(side, side);
        for other in &self.patches {
            let (r0, c0) = (other.spec.row as isize, other.spec.col as isize);
            if r0 + p as isize <= top || r0 >= top + side as isize || c0 + p as isize <= left || c0 >= left + side as isize {
                continue;
            }
            for r in 0..p {
                let wr = r0 + r as isize - top;
                if wr < 0 || wr >= side as isize {
                    continue;
                }
                for c in 0..p {
                    let wc = c0 + c as isize - left;
                    if wc >= 0 && wc < side as isize && other.pred.get(r, c) {
                        window.set(wr as usize, wc as usize, true);
                    }
                }
            }
        }
        skeletonize(&window).window(m, m, p, p, false)
    }

    /// Clears padding pixels that fall outside the mirror.
    fn clip_to_image(&self, k: usize, mut mask: BinaryMask) -> BinaryMask {
        let spec = &self.patches[k].spec;
        let rows = self.grid.height - spec.row;
        let cols = self.grid.width - spec.col;
        if rows >= mask.height() && cols >= mask.width() {
            return mask;
        }
        for r in 0..mask.height() {
            for c in 0..mask.width() {
                if r >= rows || c >= cols {
                    mask.set(r, c, false);
                }
            }
        }
        mask
    }

    fn push_snapshot(&mut self, k: usize) {
        let patch = &self.patches[k];
        self.snapshots.push(Snapshot {
            patch: k,
            pred: patch.pred.clone(),
            delta: patch.delta.clone(),
            hints_applied: patch.hints_applied,
            converged: self.converged.clone(),
            commits_since_sweep: self.commits_since_sweep,
        });
    }

    fn install(&mut self, k: usize, pred: BinaryMask, delta: HintMap) {
        let patch = &mut self.patches[k];
        patch.pred = pred;
        patch.delta = delta;
        self.annotated[k] = annotated_pixel_count(&patch.delta);
        if let Some(truth) = &patch.truth {
            self.pred_counts[k] = truth.counts(&patch.pred);
            self.composed_counts[k] = truth.counts(&patch.composed());
        }
    }

    fn record(&mut self, k: usize, op: Sign) -> HistoryEntry {
        let pfm = self.pfm();
        let pfm_composed = self.pfm_composed();
        let pfm_delta = match (pfm, pfm_composed) {
            (Some(p), Some(c)) => relative_improvement(p, c).ok(),
            _ => None,
        };
        let entry = HistoryEntry {
            step: self.interaction_count,
            patch: k,
            op,
            pfm,
            pfm_composed,
            pfm_delta,
            annotated_pixels: self.annotated_pixels(),
        };
        self.history.push(entry.clone());
        entry
    }

    /// One simulated interaction.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if self.mode == Mode::Live {
            return Err(Error::LiveMode);
        }
        self.check_budget()?;
        loop {
            let Some(k) = self.select_patch()? else {
                if self.commits_since_sweep {
                    self.commits_since_sweep = false;
                    self.converged.fill(false);
                    continue;
                }
                return Ok(StepOutcome::Converged);
            };
            let Some(candidate) = self.probe(k)? else {
                self.converged[k] = true;
                continue;
            };
            self.push_snapshot(k);
            self.install(k, candidate.refined, candidate.delta);
            debug_assert_eq!(self.pred_counts[k], candidate.counts);
            debug_assert!(candidate.hint.single_sign().is_ok());
            debug_assert_eq!(self.pfm(), Some(candidate.pfm));
            self.patches[k].hints_applied += 1;
            self.interaction_count += 1;
            self.commits_since_sweep = true;
            return Ok(StepOutcome::Committed(self.record(k, candidate.op)));
        }
    }

    /// Steps until neither operation improves whole-mirror pFM or the cap is
    /// reached.
    pub fn run_until_convergence(&mut self) -> Result<SessionReport> {
        let mut converged = false;
        while self.interaction_count < self.config.cap {
            if self.step()? == StepOutcome::Converged {
                converged = true;
                break;
            }
        }
        Ok(self.report(converged))
    }

    pub fn report(&self, converged: bool) -> SessionReport {
        SessionReport {
            initial_pfm: self.initial_pfm,
            history: self.history.clone(),
            converged,
            interaction_count: self.interaction_count,
        }
    }

    /// Applies a human hint to patch `k` and returns the refined patch. On
    /// error the state is unchanged.
    pub fn apply_live_hint(&mut self, k: usize, hint: &HintMap) -> Result<BinaryMask> {
        if self.mode == Mode::Simulated {
            return Err(Error::SimulatedMode);
        }
        self.check_budget()?;
        let patch = self.patch(k)?;
        patch.pred.ensure_same_dims(hint)?;
        let op = hint
            .single_sign()?
            .ok_or_else(|| Error::InvalidHint("hint has no annotated pixels".into()))?;
        let delta = accumulate(&patch.delta, hint)?;
        let request = RefineRequest::new(
            patch.depth.clone(),
            patch.pred.clone(),
            delta.clone(),
            seed::derive(self.config.seed, &[self.interaction_count as u64, k as u64]),
        )?
        .with_origin((patch.spec.row, patch.spec.col));
        let refined = self.clip_to_image(k, self.refiner.refine(&request)?);
        let record = JournalRecord {
            step: self.interaction_count + 1,
            patch: k,
            op: op.into(),
            hint: Some(HintRle::encode(hint)),
            pfm: None,
            annotated_pixels: self.annotated_pixels() - self.annotated[k] + annotated_pixel_count(&delta),
            timestamp: journal::now_timestamp(),
        };
        if let Some(j) = self.journal.as_mut() {
            j.append(&record)?;
        }
        self.push_snapshot(k);
        self.install(k, refined.clone(), delta);
        self.patches[k].hints_applied += 1;
        self.interaction_count += 1;
        self.record(k, op);
        Ok(refined)
    }

    /// Live-mode suggestion for the next patch: the kept patch with the
    /// fewest applied hints, ties to the lower index.
    pub fn suggest_patch(&self) -> Option<usize> {
        self.patches
            .iter()
            .enumerate()
            .filter(|(_, p)| p.spec.keep)
            .min_by_key(|(k, p)| (p.hints_applied, *k))
            .map(|(k, _)| k)
    }

    /// Restores the state before the most recent interaction.
    pub fn undo(&mut self) -> Result<()> {
        let snap = self.snapshots.last().ok_or(Error::EmptyHistory)?;
        let k = snap.patch;
        if let Some(j) = self.journal.as_mut() {
            j.append(&JournalRecord {
                step: self.interaction_count,
                patch: k,
                op: JournalOp::Undo,
                hint: None,
                pfm: None,
                annotated_pixels: 0,
                timestamp: journal::now_timestamp(),
            })?;
        }
        let snap = self.snapshots.pop().expect("checked above");
        self.install(k, snap.pred, snap.delta);
        self.patches[k].hints_applied = snap.hints_applied;
        self.converged = snap.converged;
        self.commits_since_sweep = snap.commits_since_sweep;
        self.interaction_count -= 1;
        self.history.pop();
        Ok(())
    }

    /// Re-applies journal records to a fresh live session. Attach the journal
    /// afterwards, or records are written twice.
    pub fn replay(&mut self, records: &[JournalRecord]) -> Result<()> {
        for (i, rec) in records.iter().enumerate() {
            match rec.op {
                JournalOp::Undo => self.undo()?,
                JournalOp::Add | JournalOp::Erase => {
                    let sign = if rec.op == JournalOp::Add { Sign::Add } else { Sign::Erase };
                    let rle = rec
                        .hint
                        .as_ref()
                        .ok_or_else(|| Error::InvalidHint(format!("journal record {i} has no hint")))?;
                    self.apply_live_hint(rec.patch, &rle.decode(sign)?)?;
                }
            }
        }
        Ok(())
    }
}

/// Curves produced by a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub initial_pfm: Option<f64>,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    pub interaction_count: usize,
}

/// One row of a report CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub pfm: Option<f64>,
    pub pfm_composed: Option<f64>,
    pub pfm_delta: Option<f64>,
    pub annotated_pixels: f64,
}

pub const CSV_HEADER: &str = "step,pfm,pfm_composed,pfm_delta,annotated_pixels";

impl SessionReport {
    /// Rows starting with step 0 (the initial prediction).
    pub fn curve(&self) -> Vec<CurveRow> {
        let mut rows = vec![CurveRow {
            step: 0,
            pfm: self.initial_pfm,
            pfm_composed: self.initial_pfm,
            pfm_delta: self.initial_pfm.filter(|&p| p > 0.0).map(|_| 0.0),
            annotated_pixels: 0.0,
        }];
        rows.extend(self.history.iter().map(|h| CurveRow {
            step: h.step,
            pfm: h.pfm,
            pfm_composed: h.pfm_composed,
            pfm_delta: h.pfm_delta,
            annotated_pixels: h.annotated_pixels as f64,
        }));
        rows
    }

    pub fn final_pfm(&self) -> Option<f64> {
        self.history.last().map_or(self.initial_pfm, |h| h.pfm)
    }

    pub fn to_csv(&self) -> String {
        curve_to_csv(&self.curve())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let annotated = if r.annotated_pixels.fract() == 0.0 {
            format!("{}", r.annotated_pixels)
        } else {
            format!("{:.6}", r.annotated_pixels)
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            fmt_opt(r.pfm),
            fmt_opt(r.pfm_composed),
            fmt_opt(r.pfm_delta),
            annotated
        ));
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::InvalidArgument("missing report CSV header".into()));
    }
    let bad = |line: &str| Error::InvalidArgument(format!("malformed report row {line:?}"));
    let opt = |s: &str, line: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(line))
        }
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            Ok(CurveRow {
                step: f[0].parse().map_err(|_| bad(line))?,
                pfm: opt(f[1], line)?,
                pfm_composed: opt(f[2], line)?,
                pfm_delta: opt(f[3], line)?,
                annotated_pixels: f[4].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

/// Step-wise arithmetic mean of several curves. A run that stopped early
/// contributes its last row to later steps.
pub fn average_curves(curves: &[Vec<CurveRow>]) -> Vec<CurveRow> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mean = |vals: Vec<Option<f64>>| -> Option<f64> {
        let defined: Vec<f64> = vals.into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    (0..len)
        .map(|i| {
            let rows: Vec<&CurveRow> = curves
                .iter()
                .filter_map(|c| c.get(i).or_else(|| c.last()))
                .collect();
            CurveRow {
                step: i,
                pfm: mean(rows.iter().map(|r| r.pfm).collect()),
                pfm_composed: mean(rows.iter().map(|r| r.pfm_composed).collect()),
                pfm_delta: mean(rows.iter().map(|r| r.pfm_delta).collect()),
                annotated_pixels: rows.iter().map(|r| r.annotated_pixels).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

/// Annotated pixels at the first row whose pFM reaches `target`.
pub fn pixels_to_reach(curve: &[CurveRow], target: f64) -> Option<f64> {
    curve
        .iter()
        .find(|r| r.pfm.is_some_and(|p| p >= target))
        .map(|r| r.annotated_pixels)
}
