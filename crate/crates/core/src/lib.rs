//! Engine for human-in-the-loop refinement of thin-line segmentation masks.
//!
//! The crate covers the full simulation and annotation loop: raster types
//! and hint composition ([`raster`]), binary morphology ([`morphology`]),
//! stroke-width statistics ([`stats`]), simulated annotator hints
//! ([`interaction`]), pseudo-F-measure metrics ([`metrics`]), depth
//! preprocessing and patch planning ([`preprocess`]), refinement backends
//! ([`refiner`]) and the greedy session loop ([`session`]).

pub mod error;
pub mod interaction;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod preprocess;
pub mod raster;
pub mod refiner;
pub mod seed;
pub mod session;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{accumulate, annotated_pixel_count, compose, BinaryMask, DepthMap, Grid, HintMap, Sign};
