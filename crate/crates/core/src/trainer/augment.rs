//! Scene augmentation: global scaling, Z-rotation, and a joint horizontal
//! image flip.
//!
//! Point-to-pixel correspondence is built once from the raw scene and
//! carried alongside it; coordinate transforms leave it untouched (the
//! image does not move), while the flip mirrors the image and remaps the
//! stored pixel columns so the pairing stays valid.

use crate::data::Scene;
use crate::geometry::{build_correspondence, CorrespondenceTable, PointCloud};
use crate::trainer::AugmentConfig;
use ndarray::Array3;
use rand::Rng;

/// A scene plus the correspondence table built from its raw coordinates.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub scene: Scene,
    pub corr: CorrespondenceTable,
}

impl TrainSample {
    pub fn new(scene: Scene) -> Self {
        let corr = build_correspondence(&scene.cloud, &scene.cam);
        TrainSample { scene, corr }
    }
}

/// One concrete augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    pub angle: f64,
    pub flip: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams { scale: 1.0, angle: 0.0, flip: false }
    }
}

pub fn sample_augment<R: Rng>(cfg: &AugmentConfig, rng: &mut R) -> AugmentParams {
    let (lo, hi) = cfg.scale_range;
    let scale = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let angle = if cfg.rot_range > 0.0 { rng.gen_range(0.0..cfg.rot_range) } else { 0.0 };
    let flip = cfg.flip_prob > 0.0 && rng.gen_bool(cfg.flip_prob);
    AugmentParams { scale, angle, flip }
}

/// Rotates a cloud around Z and scales it uniformly. Labels and intensity
/// are untouched. With `scale = 1` and `angle = 0` the coordinates are
/// bit-identical to the input.
pub fn transform_cloud(cloud: &PointCloud, scale: f64, angle: f64) -> PointCloud {
    let (s, c) = angle.sin_cos();
    let xyz = cloud
        .xyz
        .iter()
        .map(|&[x, y, z]| [scale * (x * c - y * s), scale * (x * s + y * c), scale * z])
        .collect();
    PointCloud { xyz, intensity: cloud.intensity.clone() }
}

fn flip_image(image: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = image.dim();
    Array3::from_shape_fn((h, w, c), |(i, j, ch)| image[(i, w - 1 - j, ch)])
}

fn flip_corr(corr: &CorrespondenceTable) -> CorrespondenceTable {
    let w = corr.width as u32;
    CorrespondenceTable {
        in_fov: corr.in_fov.clone(),
        pixel: corr.pixel.iter().map(|&(row, col)| (row, w - 1 - col)).collect(),
        n_overlap: corr.n_overlap,
        width: corr.width,
        height: corr.height,
    }
}

/// Applies one augmentation draw. The camera model is kept as-is: augmented
/// samples carry their correspondence explicitly and are never re-projected.
pub fn augment_with(sample: &TrainSample, p: &AugmentParams) -> TrainSample {
    let cloud = transform_cloud(&sample.scene.cloud, p.scale, p.angle);
    let (image, corr) = if p.flip {
        (flip_image(&sample.scene.image), flip_corr(&sample.corr))
    } else {
        (sample.scene.image.clone(), sample.corr.clone())
    };
    let scene = Scene {
        cloud,
        labels: sample.scene.labels.clone(),
        image,
        cam: sample.scene.cam.clone(),
        id: sample.scene.id.clone(),
    };
    TrainSample { scene, corr }
}

pub fn augment<R: Rng>(sample: &TrainSample, cfg: &AugmentConfig, rng: &mut R) -> TrainSample {
    augment_with(sample, &sample_augment(cfg, rng))
}
