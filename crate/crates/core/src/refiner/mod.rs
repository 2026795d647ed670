//! Refinement backends mapping `(X, Y, Δ)` to a refined mask `Y'`.
//!
//! Every backend output passes through [`enforce_hints`]: pixels hinted
//! `+1` are foreground and pixels hinted `-1` are background, whatever the
//! backend returned.

mod heuristic;
mod oracle;
mod remote;
pub mod wire;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use heuristic::{heuristic_refine, HeuristicParams, HeuristicRefiner};
pub use oracle::{oracle_refine, OracleRefiner, DEFAULT_ORACLE_RADIUS};
pub use remote::{remote_refine, RemoteConfig, RemoteRefiner, DEFAULT_TIMEOUT};

use crate::error::{Error, Result};
use crate::raster::{compose, BinaryMask, DepthMap, HintMap};

/// One refinement call on a patch.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineRequest {
    pub depth: DepthMap,
    pub prediction: BinaryMask,
    pub hints: HintMap,
    pub seed: u64,
    /// Position of the patch in the full image. Not sent over the wire.
    pub origin: (usize, usize),
}

impl RefineRequest {
    pub fn new(depth: DepthMap, prediction: BinaryMask, hints: HintMap, seed: u64) -> Result<Self> {
        let req = RefineRequest {
            depth,
            prediction,
            hints,
            seed,
            origin: (0, 0),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_origin(mut self, origin: (usize, usize)) -> Self {
        self.origin = origin;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.prediction.dims()
    }

    pub fn validate(&self) -> Result<()> {
        self.prediction.ensure_same_dims(&self.depth)?;
        self.prediction.ensure_same_dims(&self.hints)
    }

    /// `compose(Y, Δ)`, the manually composed mask.
    pub fn composed(&self) -> BinaryMask {
        compose(&self.prediction, &self.hints).expect("validated request")
    }
}

/// Applies the hint-respect contract to a backend output.
pub fn enforce_hints(mask: &BinaryMask, hints: &HintMap) -> Result<BinaryMask> {
    compose(mask, hints)
}

pub trait Refiner: Send + Sync {
    fn name(&self) -> String;

    /// Backend-specific output, before the hint-respect contract.
    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask>;

    fn refine(&self, request: &RefineRequest) -> Result<BinaryMask> {
        request.validate()?;
        let raw = self.refine_raw(request)?;
        if raw.dims() != request.dims() {
            return Err(Error::ShapeMismatch {
                expected: request.dims(),
                found: raw.dims(),
            });
        }
        enforce_hints(&raw, &request.hints)
    }
}

impl<R: Refiner + ?Sized> Refiner for Arc<R> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        (**self).refine_raw(request)
    }

    fn refine(&self, request: &RefineRequest) -> Result<BinaryMask> {
        (**self).refine(request)
    }
}

/// Returns `Y` unchanged; with enforcement this is plain manual composition.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRefiner;

impl Refiner for IdentityRefiner {
    fn name(&self) -> String {
        "identity".into()
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        Ok(request.prediction.clone())
    }
}

/// Uses `fallback` when `primary` is unreachable or times out.
pub struct FallbackRefiner {
    pub primary: Arc<dyn Refiner>,
    pub fallback: Arc<dyn Refiner>,
}

impl Refiner for FallbackRefiner {
    fn name(&self) -> String {
        format!("{}|{}", self.primary.name(), self.fallback.name())
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        self.refine(request)
    }

    fn refine(&self, request: &RefineRequest) -> Result<BinaryMask> {
        match self.primary.refine(request) {
            Err(Error::BackendUnavailable(_) | Error::Timeout(_)) => self.fallback.refine(request),
            other => other,
        }
    }
}

/// Textual backend selector: `identity`, `heuristic`, `oracle` or
/// `remote:<base url>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Identity,
    Heuristic,
    Oracle,
    Remote(String),
}

impl BackendSpec {
    pub fn needs_ground_truth(&self) -> bool {
        matches!(self, BackendSpec::Oracle)
    }

    /// Instantiates the backend. `gt` is required for the oracle and is the
    /// full-image mask that requests are cropped from via their origin.
    pub fn build(&self, gt: Option<&BinaryMask>, heuristic: HeuristicParams) -> Result<Arc<dyn Refiner>> {
        Ok(match self {
            BackendSpec::Identity => Arc::new(IdentityRefiner),
            BackendSpec::Heuristic => Arc::new(HeuristicRefiner::new(heuristic)),
            BackendSpec::Oracle => {
                let gt = gt.ok_or(Error::LiveMode)?;
                Arc::new(OracleRefiner::new(gt.clone(), DEFAULT_ORACLE_RADIUS))
            }
            BackendSpec::Remote(url) => Arc::new(RemoteRefiner::new(RemoteConfig::new(url))?),
        })
    }
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(BackendSpec::Identity),
            "heuristic" => Ok(BackendSpec::Heuristic),
            "oracle" => Ok(BackendSpec::Oracle),
            _ => match s.strip_prefix("remote:") {
                Some(url) if !url.is_empty() => Ok(BackendSpec::Remote(url.to_string())),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown backend {s:?} (identity | heuristic | oracle | remote:URL)"
                ))),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Identity => f.write_str("identity"),
            BackendSpec::Heuristic => f.write_str("heuristic"),
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Remote(url) => write!(f, "remote:{url}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Grid, Sign};

    fn request() -> RefineRequest {
        let pred = Grid::from_fn(5, 5, |r, _| r == 2);
        let mut hints = HintMap::zeros(5, 5);
        hints.set(2, 2, Some(Sign::Erase));
        hints.set(0, 0, Some(Sign::Add));
        RefineRequest::new(DepthMap::zeros(5, 5), pred, hints, 1).unwrap()
    }

    #[test]
    fn identity_is_composition() {
        let req = request();
        let out = IdentityRefiner.refine(&req).unwrap();
        assert_eq!(out, req.composed());
        assert!(out.get(0, 0));
        assert!(!out.get(2, 2));
    }

    #[test]
    fn mismatched_request_rejected() {
        let r = RefineRequest::new(
            DepthMap::zeros(4, 5),
            BinaryMask::empty(5, 5),
            HintMap::zeros(5, 5),
            0,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn backend_spec_round_trip() {
        for s in ["identity", "heuristic", "oracle", "remote:http://127.0.0.1:9/x"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
        assert!("remote:".parse::<BackendSpec>().is_err());
        assert!("unet".parse::<BackendSpec>().is_err());
    }

    struct Wrong;
    impl Refiner for Wrong {
        fn name(&self) -> String {
            "wrong".into()
        }
        fn refine_raw(&self, _: &RefineRequest) -> Result<BinaryMask> {
            Ok(BinaryMask::empty(3, 3))
        }
    }

    #[test]
    fn wrong_output_shape_detected() {
        assert!(matches!(
            Wrong.refine(&request()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
