//! Feature backbones: a frozen multi-scale image encoder (the camera branch)
//! and a trainable multi-scale point encoder instantiated once per branch.

mod camera;
mod points;

pub use camera::{gather_camera_features, CameraEncoder, ImageFeaturePyramid};
pub use points::{voxel_assign, PointEncoder, PointFeaturePyramid, VoxelAssignment};

use thiserror::Error;

/// Number of feature-pyramid scales used throughout the pipeline.
pub const N_SCALES: usize = 4;

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("image is {h}x{w}; expected {want_h}x{want_w}")]
    ImageDimsMismatch { h: usize, w: usize, want_h: usize, want_w: usize },
    #[error("image is {h}x{w}x{c}; dimensions must be multiples of 8 with 3 channels")]
    BadImageShape { h: usize, w: usize, c: usize },
    #[error("correspondence built for {corr_h}x{corr_w} but pyramid base is {h}x{w}")]
    StaleCorrespondence { corr_h: usize, corr_w: usize, h: usize, w: usize },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}
