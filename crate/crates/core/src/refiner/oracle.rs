use crate::error::Result;
use crate::morphology::distance_to_mask;
use crate::raster::{compose, BinaryMask};

use super::{RefineRequest, Refiner};

/// Snap radius used when the oracle is selected by name.
pub const DEFAULT_ORACLE_RADIUS: f64 = 24.0;

/// `compose(Y, Δ)` with every pixel within `radius` of a hinted pixel set to
/// its ground-truth value. Hinted pixels keep their hint.
pub fn oracle_refine(request: &RefineRequest, gt: &BinaryMask, radius: f64) -> Result<BinaryMask> {
    request.validate()?;
    request.prediction.ensure_same_dims(gt)?;
    let mut out = request.composed();
    let hinted = request.hints.nonzero_mask();
    if hinted.any() {
        let dist = distance_to_mask(&hinted);
        let hints = request.hints.as_slice();
        for (i, px) in out.as_mut_slice().iter_mut().enumerate() {
            if hints[i] == 0 && dist.as_slice()[i] <= radius {
                *px = gt.as_slice()[i];
            }
        }
    }
    compose(&out, &request.hints)
}

/// Simulation upper bound holding the full-image ground truth; requests are
/// matched to it through their origin.
#[derive(Clone, Debug)]
pub struct OracleRefiner {
    gt: BinaryMask,
    radius: f64,
}

impl OracleRefiner {
    pub fn new(gt: BinaryMask, radius: f64) -> Self {
        OracleRefiner { gt, radius }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Refiner for OracleRefiner {
    fn name(&self) -> String {
        format!("oracle(r={})", self.radius)
    }

    fn refine_raw(&self, request: &RefineRequest) -> Result<BinaryMask> {
        let (h, w) = request.dims();
        let gt = self.gt.window(request.origin.0, request.origin.1, h, w, false);
        oracle_refine(request, &gt, self.radius)
    }
}
