//! Stroke-width statistics: widths sampled from the distance transform at
//! skeleton pixels, two-sigma outlier removal, and a three-parameter Gamma
//! fit used to draw realistic annotator stroke widths.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{euclidean_distance_transform, skeletonize};
use crate::raster::BinaryMask;
use crate::seed;

/// Distance-transform values of `gt` at its skeleton pixels, in row-major
/// order. Empty for an empty mask.
pub fn get_stroke_widths(gt: &BinaryMask) -> Vec<f64> {
    let skeleton = skeletonize(gt);
    if !skeleton.any() {
        return Vec::new();
    }
    let distance = euclidean_distance_transform(gt);
    skeleton.ones().map(|(r, c)| distance.get(r, c)).collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Keeps values within two (population) standard deviations of the mean of
/// the input, preserving order.
pub fn two_sigma_filter(widths: &[f64]) -> Result<Vec<f64>> {
    if widths.is_empty() {
        return Err(Error::InvalidArgument(
            "two-sigma filter needs at least one value".into(),
        ));
    }
    let (mean, std) = mean_std(widths);
    let bound = 2.0 * std;
    Ok(widths
        .iter()
        .copied()
        .filter(|w| (w - mean).abs() <= bound)
        .collect())
}

/// Three-parameter Gamma distribution (shape, location, scale).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub loc: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.loc + self.shape * self.scale
    }

    pub fn std(&self) -> f64 {
        self.shape.sqrt() * self.scale
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // shape and scale are validated positive at construction sites
        let gamma = Gamma::new(self.shape, self.scale).expect("positive gamma parameters");
        self.loc + gamma.sample(rng)
    }
}

pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    acc + x.ln()
        - 0.5 / x
        - f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))))
}

pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    acc + 1.0 / x + f / 2.0 + f / x * (1.0 / 6.0 - f * (1.0 / 30.0 - f * (1.0 / 42.0 - f / 30.0)))
}

/// Fits a three-parameter Gamma to `samples`.
///
/// The location comes from the moment estimate `mean - 2·std/skew`, capped
/// just below the sample minimum (`min - 0.05·std`); with the location held,
/// shape and scale are the maximum-likelihood solution, started from the
/// method-of-moments shape and refined by Newton iteration on
/// `ln(a) - ψ(a) = ln(mean(y)) - mean(ln y)`.
pub fn fit_gamma_params(samples: &[f64]) -> Result<GammaParams> {
    if samples.len() < 10 {
        return Err(Error::FitFailure(format!(
            "need at least 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("samples contain non-finite values".into()));
    }
    let n = samples.len() as f64;
    let (mean, std) = mean_std(samples);
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::FitFailure("samples have zero variance".into()));
    }
    let skew = samples.iter().map(|v| ((v - mean) / std).powi(3)).sum::<f64>() / n;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = min - 0.05 * std;
    let loc = if skew > 0.0 {
        (mean - 2.0 * std / skew).min(floor)
    } else {
        floor
    };

    let shifted_mean = mean - loc;
    let mean_log = samples.iter().map(|v| (v - loc).ln()).sum::<f64>() / n;
    let target = shifted_mean.ln() - mean_log;
    if !(target > 0.0) {
        return Err(Error::FitFailure("degenerate log-moment".into()));
    }

    let mut shape = shifted_mean * shifted_mean / (std * std);
    for _ in 0..100 {
        let g = shape.ln() - digamma(shape) - target;
        let dg = 1.0 / shape - trigamma(shape);
        let mut next = shape - g / dg;
        if !(next > 0.0) {
            next = shape / 2.0;
        }
        let done = (next - shape).abs() <= 1e-12 * shape;
        shape = next;
        if done {
            break;
        }
    }
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::FitFailure("shape estimate diverged".into()));
    }
    Ok(GammaParams {
        shape,
        loc,
        scale: shifted_mean / shape,
    })
}

/// Summary of annotated stroke widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeWidthStats {
    #[serde(skip)]
    pub raw_widths: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub shape: f64,
    pub loc: f64,
    pub scale: f64,
    pub n_raw: usize,
    pub n_filtered: usize,
}

impl StrokeWidthStats {
    pub fn gamma(&self) -> GammaParams {
        GammaParams {
            shape: self.shape,
            loc: self.loc,
            scale: self.scale,
        }
    }

    /// Dilation width used to tolerate near-miss false positives:
    /// `round(mu + 2·sigma)`.
    pub fn lenient_width(&self) -> f64 {
        (self.mu + 2.0 * self.sigma).round()
    }

    /// Stats built directly from known parameters (no raw widths).
    pub fn from_parts(mu: f64, sigma: f64, gamma: GammaParams) -> Self {
        StrokeWidthStats {
            raw_widths: Vec::new(),
            mu,
            sigma,
            shape: gamma.shape,
            loc: gamma.loc,
            scale: gamma.scale,
            n_raw: 0,
            n_filtered: 0,
        }
    }
}

/// Two-sigma filters `widths`, then records mean, standard deviation and a
/// Gamma fit of the filtered set.
pub fn fit_gamma(widths: &[f64]) -> Result<StrokeWidthStats> {
    if widths.len() < 10 {
        return Err(Error::FitFailure(format!(
            "need at least 10 widths, got {}",
            widths.len()
        )));
    }
    let filtered = two_sigma_filter(widths)?;
    let gamma = fit_gamma_params(&filtered)?;
    let (mu, sigma) = mean_std(&filtered);
    Ok(StrokeWidthStats {
        raw_widths: widths.to_vec(),
        mu,
        sigma,
        shape: gamma.shape,
        loc: gamma.loc,
        scale: gamma.scale,
        n_raw: widths.len(),
        n_filtered: filtered.len(),
    })
}

/// How simulated strokes pick their width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthMode {
    /// A draw from the fitted Gamma.
    Sampled,
    /// The filtered mean.
    Mean,
    /// `mu - 2·sigma`, which keeps strokes inside the true line.
    #[default]
    Conservative,
}

impl FromStr for WidthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(WidthMode::Sampled),
            "mean" => Ok(WidthMode::Mean),
            "conservative" => Ok(WidthMode::Conservative),
            other => Err(Error::InvalidArgument(format!("unknown width mode `{other}`"))),
        }
    }
}

impl fmt::Display for WidthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WidthMode::Sampled => "sampled",
            WidthMode::Mean => "mean",
            WidthMode::Conservative => "conservative",
        })
    }
}

/// Stroke width for one simulated interaction. Sampled and conservative
/// widths are clamped to at least one pixel.
pub fn sample_width(stats: &StrokeWidthStats, mode: WidthMode, rng_seed: u64) -> f64 {
    match mode {
        WidthMode::Mean => stats.mu,
        WidthMode::Conservative => (stats.mu - 2.0 * stats.sigma).max(1.0),
        WidthMode::Sampled => {
            let mut rng = seed::rng(rng_seed);
            stats.gamma().sample(&mut rng).max(1.0)
        }
    }
}
