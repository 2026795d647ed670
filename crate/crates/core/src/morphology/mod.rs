//! Binary morphology: distance transform, thinning, disk dilation,
//! neighbour counting and connected components.

mod edt;
mod label;
mod thinning;

pub use edt::{distance_to_mask, euclidean_distance_transform};
pub use label::{
    get_edges, label_components, label_connectivity, neighbor_count_convolve, Segment,
    SkeletonSegments,
};
pub use thinning::skeletonize;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Disk radius used for a stroke of the given width: `floor(width / 2)`.
pub fn disk_radius(width: f64) -> Result<usize> {
    if !width.is_finite() || width < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stroke width must be a finite value >= 0, got {width}"
        )));
    }
    Ok((width / 2.0).floor() as usize)
}

/// Dilates `mask` with a disk so that a one-pixel curve becomes a stroke
/// about `width` pixels across. The disk has radius `floor(width / 2)`.
pub fn dilate(mask: &BinaryMask, width: f64) -> Result<BinaryMask> {
    let radius = disk_radius(width)?;
    if radius == 0 {
        return Ok(mask.clone());
    }
    Ok(dilate_radius(mask, radius))
}

/// Disk dilation with an explicit radius: every pixel within Euclidean
/// distance `radius` of a set pixel.
pub fn dilate_radius(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let limit = (radius * radius) as f64;
    edt::squared_distance_to(mask, false).map(|d| d <= limit)
}

/// Erosion with the same disk as [`dilate`]. Pixels outside the raster do
/// not constrain the result.
pub fn erode(mask: &BinaryMask, width: f64) -> Result<BinaryMask> {
    Ok(dilate(&mask.not(), width)?.not())
}
