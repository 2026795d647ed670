//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use etchloop_core::preprocess::{DEFAULT_HIGHPASS_SIGMA, DEFAULT_PATCH_SIZE};
use etchloop_core::refiner::{BackendSpec, HeuristicParams};
use etchloop_core::session::DEFAULT_CAP;
use etchloop_core::stats::WidthMode;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Dataset root with one directory per mirror.
    pub dataset: PathBuf,
    pub patch_size: usize,
    pub width_mode: WidthMode,
    /// `identity`, `heuristic`, `oracle` or `remote:URL`.
    pub backend: String,
    pub seed: u64,
    pub cap: usize,
    pub port: u16,
    /// Simulation repeats per mirror.
    pub repeats: usize,
    /// Gaussian sigma of the depth high-pass.
    pub highpass_sigma: f64,
    /// Pre-computed stroke statistics (output of `etchloop stats`). When
    /// absent they are fitted from the dataset ground truth.
    pub stats: Option<PathBuf>,
    /// Where the service keeps session journals.
    pub journal_dir: PathBuf,
    /// Static UI bundle served under `/`.
    pub static_dir: Option<PathBuf>,
    pub heuristic: HeuristicParams,
    /// Remote backend: maximum concurrent requests.
    pub remote_max_in_flight: usize,
    /// Remote backend: request timeout in seconds.
    pub remote_timeout_secs: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: PathBuf::from("data"),
            patch_size: DEFAULT_PATCH_SIZE,
            width_mode: WidthMode::Conservative,
            backend: "heuristic".into(),
            seed: 0,
            cap: DEFAULT_CAP,
            port: 8080,
            repeats: 10,
            highpass_sigma: DEFAULT_HIGHPASS_SIGMA,
            stats: None,
            journal_dir: PathBuf::from("journals"),
            static_dir: None,
            heuristic: HeuristicParams::default(),
            remote_max_in_flight: 4,
            remote_timeout_secs: 30.0,
        }
    }
}

/// Values given on the command line win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub seed: Option<u64>,
    pub backend: Option<String>,
    pub width_mode: Option<WidthMode>,
    pub cap: Option<usize>,
    pub patch_size: Option<usize>,
    pub port: Option<u16>,
    pub repeats: Option<usize>,
    pub journal_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Loads `path` (or defaults), applies `overrides` and validates.
    pub fn resolve(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Config::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field { self.$field = v; })*
            };
        }
        take!(dataset, seed, backend, width_mode, cap, patch_size, port, repeats, journal_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.cap == 0 {
            return Err(CliError::config("cap must be >= 1"));
        }
        if self.patch_size == 0 {
            return Err(CliError::config("patch_size must be >= 1"));
        }
        if self.repeats == 0 {
            return Err(CliError::config("repeats must be >= 1"));
        }
        if !(self.highpass_sigma > 0.0) {
            return Err(CliError::config("highpass_sigma must be positive"));
        }
        if !(self.remote_timeout_secs > 0.0) || self.remote_max_in_flight == 0 {
            return Err(CliError::config("remote timeout and concurrency must be positive"));
        }
        self.backend_spec().map(|_| ())
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, CliError> {
        self.backend.parse().map_err(|e: etchloop_core::Error| CliError::config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let cfg = Config::parse("seed = 3\ncap = 10\nbackend = \"identity\"\n[heuristic]\nradius = 8\nquantile = 0.2\n").unwrap();
        assert_eq!((cfg.seed, cfg.cap, cfg.heuristic.radius), (3, 10, 8));
        let mut cfg2 = cfg.clone();
        cfg2.apply(Overrides {
            seed: Some(9),
            width_mode: Some(WidthMode::Mean),
            ..Default::default()
        });
        assert_eq!((cfg2.seed, cfg2.cap, cfg2.width_mode), (9, 10, WidthMode::Mean));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("cap = 0").unwrap().validate().is_err());
        assert!(Config::parse("backend = \"neural\"").unwrap().validate().is_err());
        assert!(Config::parse("unknown_key = 1").is_err());
    }
}
