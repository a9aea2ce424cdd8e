//! Desk-scale LIDAR + camera semantic segmentation pipeline.
//!
//! The crate wires together the pieces needed to train and evaluate a
//! point-cloud semantic segmentation model that fuses LIDAR geometry with
//! camera appearance:
//!
//! * [`geometry`] — point-to-pixel projection, extrinsic chaining, FOV
//!   masking, and bilinear feature-map upsampling.
//! * [`autodiff`] — a minimal reverse-mode differentiation engine over dense
//!   row-major 2-D tensors, with an SGD optimizer, a finite-difference
//!   checker, and a binary parameter checkpoint format.
//! * [`backbones`] — a frozen multi-scale image-feature extractor (camera
//!   branch) and a trainable multi-scale point encoder used twice (the
//!   image-knowledge branch and the LIDAR branch).
//! * [`fusion`] — the bidirectional fusion block: gated residual fusion in
//!   both directions at every scale, plus the linear classifiers and
//!   per-branch losses.
//! * [`distill`] — feature imitation: the L2 loss that makes the
//!   image-knowledge branch mimic the frozen camera branch on points inside
//!   the camera FOV.
//! * [`trainer`] — joint training, augmentation, inference, rotation-voting
//!   test-time augmentation, checkpointing, and the ablation harness.
//! * [`data`] — synthetic paired scenes (point cloud + image + calibration)
//!   and the KITTI-style on-disk formats.
//! * [`metrics`] — confusion matrix, per-class IoU, mIoU, and fwIoU.

pub mod autodiff;
pub mod backbones;
pub mod data;
pub mod distill;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod trainer;
