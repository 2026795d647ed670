//! Batch commands: stroke statistics, simulation, evaluation and synthetic
//! data generation.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use etchloop_core::io::{load_dataset, load_gt_masks, read_mask, write_mask, Mirror};
use etchloop_core::metrics::{counts, MetricReport, PixelCounts};
use etchloop_core::preprocess::prepare_depth;
use etchloop_core::refiner::{BackendSpec, RemoteConfig, RemoteRefiner, Refiner};
use etchloop_core::seed;
use etchloop_core::session::{average_curves, curve_to_csv, CurveRow, SessionConfig, SessionState};
use etchloop_core::stats::{fit_gamma, get_stroke_widths, GammaParams, StrokeWidthStats};
use etchloop_core::synth::{write_corpus, SynthConfig};
use etchloop_core::{interaction::HintConfig, BinaryMask, Error};

use crate::config::Config;
use crate::error::CliError;

/// Output of `etchloop stats`; also accepted as the `stats` file in the
/// config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub mu: f64,
    pub sigma: f64,
    pub shape: f64,
    pub loc: f64,
    pub scale: f64,
    pub n_raw: usize,
    pub n_filtered: usize,
    pub mirrors: usize,
    pub gamma_mean: f64,
    pub lenient_width: f64,
    pub conservative_width: f64,
}

impl StatsOutput {
    pub fn from_stats(stats: &StrokeWidthStats, mirrors: usize) -> Self {
        StatsOutput {
            mu: stats.mu,
            sigma: stats.sigma,
            shape: stats.shape,
            loc: stats.loc,
            scale: stats.scale,
            n_raw: stats.n_raw,
            n_filtered: stats.n_filtered,
            mirrors,
            gamma_mean: stats.gamma().mean(),
            lenient_width: stats.lenient_width(),
            conservative_width: conservative_width(stats),
        }
    }

    pub fn to_stats(&self) -> StrokeWidthStats {
        let gamma = GammaParams {
            shape: self.shape,
            loc: self.loc,
            scale: self.scale,
        };
        let mut s = StrokeWidthStats::from_parts(self.mu, self.sigma, gamma);
        s.n_raw = self.n_raw;
        s.n_filtered = self.n_filtered;
        s
    }
}

/// Brush width suggested to annotators: `mu - 2·sigma`, at least 1.
pub fn conservative_width(stats: &StrokeWidthStats) -> f64 {
    (stats.mu - 2.0 * stats.sigma).max(1.0)
}

/// Pooled stroke widths over every ground-truth mask under `dataset`.
pub fn cmd_stats(dataset: &Path) -> Result<StatsOutput, CliError> {
    let masks = load_gt_masks(dataset)?;
    let widths: Vec<f64> = masks.iter().flat_map(get_stroke_widths).collect();
    let stats = fit_gamma(&widths)?;
    Ok(StatsOutput::from_stats(&stats, masks.len()))
}

/// Statistics from the configured file, or fitted on the dataset.
pub fn load_stats(cfg: &Config) -> Result<StrokeWidthStats, CliError> {
    match &cfg.stats {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let out: StatsOutput = serde_json::from_str(&text)?;
            Ok(out.to_stats())
        }
        None => Ok(cmd_stats(&cfg.dataset)?.to_stats()),
    }
}

/// Builds the configured backend; `gt` is needed by the oracle only.
pub fn build_refiner(cfg: &Config, spec: &BackendSpec, gt: Option<&BinaryMask>) -> Result<Arc<dyn Refiner>, CliError> {
    Ok(match spec {
        BackendSpec::Remote(url) => Arc::new(RemoteRefiner::new(RemoteConfig {
            url: url.clone(),
            timeout: Duration::from_secs_f64(cfg.remote_timeout_secs),
            max_in_flight: cfg.remote_max_in_flight,
        })?),
        other => other.build(gt, cfg.heuristic)?,
    })
}

pub fn session_config(cfg: &Config, seed: u64) -> SessionConfig {
    SessionConfig {
        patch_size: cfg.patch_size,
        cap: cfg.cap,
        seed,
        hint: HintConfig {
            width_mode: cfg.width_mode,
            ..HintConfig::default()
        },
    }
}

/// Mirror with high-passed, normalised depth.
pub fn prepared(mut mirror: Mirror, sigma: f64) -> Result<Mirror, CliError> {
    mirror.depth = prepare_depth(&mirror.depth, &mirror.foreground, sigma)?;
    Ok(mirror)
}

#[derive(Clone, Debug, Serialize)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub seed: u64,
    pub steps: usize,
    pub converged: bool,
    pub initial_pfm: Option<f64>,
    pub final_pfm: Option<f64>,
    pub annotated_pixels: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MirrorSummary {
    pub id: String,
    pub repeats: Vec<RepeatSummary>,
    pub mean_final_pfm: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub backend: String,
    pub out: PathBuf,
    pub mirrors: Vec<MirrorSummary>,
    pub mean_final_pfm: Option<f64>,
}

struct MirrorRun {
    summary: MirrorSummary,
    curves: Vec<Vec<CurveRow>>,
}

fn simulate_mirror(cfg: &Config, spec: &BackendSpec, stats: &StrokeWidthStats, mirror: Mirror, out: &Path) -> Result<MirrorRun, CliError> {
    let id = mirror.id.clone();
    let gt = mirror
        .gt
        .clone()
        .ok_or_else(|| CliError::new("missing_gt", format!("mirror {id} has no gt.png")))?;
    let mirror = prepared(mirror, cfg.highpass_sigma)?;
    let refiner = build_refiner(cfg, spec, Some(&gt))?;
    let dir = out.join(&id);
    std::fs::create_dir_all(&dir)?;
    let mut repeats = Vec::new();
    let mut curves = Vec::new();
    for r in 0..cfg.repeats {
        let run_seed = seed::derive(cfg.seed, &[r as u64]);
        let mut state = SessionState::simulated(mirror.clone().into(), stats.clone(), refiner.clone(), session_config(cfg, run_seed))?;
        let report = state.run_until_convergence()?;
        let curve = report.curve();
        std::fs::write(dir.join(format!("repeat_{r:02}.csv")), curve_to_csv(&curve))?;
        write_mask(&dir.join(format!("final_{r:02}.png")), &state.stitched_prediction())?;
        repeats.push(RepeatSummary {
            repeat: r,
            seed: run_seed,
            steps: report.interaction_count,
            converged: report.converged,
            initial_pfm: report.initial_pfm,
            final_pfm: report.final_pfm(),
            annotated_pixels: state.annotated_pixels(),
        });
        curves.push(curve);
    }
    let avg = average_curves(&curves);
    std::fs::write(dir.join("average.csv"), curve_to_csv(&avg))?;
    Ok(MirrorRun {
        summary: MirrorSummary {
            id,
            mean_final_pfm: mean(repeats.iter().filter_map(|r| r.final_pfm)),
            repeats,
        },
        curves: vec![avg],
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `repeats` simulated sessions per mirror, in parallel over mirrors.
/// Writes per-repeat and averaged curves plus final masks under `out`, and
/// the corpus average to `out/average.csv`.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<SimulateSummary, CliError> {
    let spec = cfg.backend_spec()?;
    let stats = load_stats(cfg)?;
    let mirrors = load_dataset(&cfg.dataset)?;
    std::fs::create_dir_all(out)?;
    let runs: Vec<Result<MirrorRun, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = mirrors
            .into_iter()
            .map(|m| {
                let (spec, stats) = (&spec, &stats);
                scope.spawn(move || simulate_mirror(cfg, spec, stats, m, out))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::new("internal", "simulation thread panicked"))))
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let all: Vec<Vec<CurveRow>> = runs.iter().flat_map(|r| r.curves.clone()).collect();
    std::fs::write(out.join("average.csv"), curve_to_csv(&average_curves(&all)))?;
    let mirrors: Vec<MirrorSummary> = runs.into_iter().map(|r| r.summary).collect();
    let summary = SimulateSummary {
        backend: spec.to_string(),
        out: out.to_path_buf(),
        mean_final_pfm: mean(mirrors.iter().filter_map(|m| m.mean_final_pfm)),
        mirrors,
    };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct FileReport {
    pub name: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluateOutput {
    pub files: Vec<FileReport>,
    /// Metrics over the pooled pixel counts of all files.
    pub pooled: MetricReport,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::new("io_error", format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Metrics for every PNG in `pred_dir` against the same-named file in
/// `gt_dir`.
pub fn cmd_evaluate(pred_dir: &Path, gt_dir: &Path) -> Result<EvaluateOutput, CliError> {
    let preds = png_files(pred_dir)?;
    if preds.is_empty() {
        return Err(Error::InvalidArgument(format!("no PNG masks in {}", pred_dir.display())).into());
    }
    let mut files = Vec::new();
    let mut pooled = PixelCounts::default();
    for pred_path in preds {
        let name = pred_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let gt_path = gt_dir.join(&name);
        if !gt_path.is_file() {
            return Err(CliError::new("missing_gt", format!("no ground truth {}", gt_path.display())));
        }
        let c = counts(&read_mask(&pred_path)?, &read_mask(&gt_path)?)?;
        pooled = pooled + c;
        files.push(FileReport { name, report: c.report() });
    }
    Ok(EvaluateOutput {
        files,
        pooled: pooled.report(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthOutput {
    pub out: PathBuf,
    pub mirrors: Vec<PathBuf>,
}

pub fn cmd_synth(out: &Path, count: usize, seed: u64, config: &SynthConfig) -> Result<SynthOutput, CliError> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()).into());
    }
    let mirrors = write_corpus(out, config, count, seed)?;
    Ok(SynthOutput {
        out: out.to_path_buf(),
        mirrors,
    })
}
