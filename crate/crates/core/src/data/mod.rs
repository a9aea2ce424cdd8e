//! Synthetic paired scenes and their on-disk formats.
//!
//! A scene is one LIDAR scan with per-point labels, a camera image, and the
//! calibration relating them. The disk layout mirrors KITTI conventions so
//! real captures can be dropped in later: `points.bin` (float32 LE
//! x, y, z, intensity), `labels.bin` (uint32 LE per point), `image.ppm`
//! (binary 8-bit P6), and `calib.txt` (plain text K / T / size lines).

mod gen;
mod io;

pub use gen::{generate_scene, generate_scene_with_oracle, SceneGenConfig};
pub use io::{
    load_manifest, load_scene, parse_calibration, save_manifest, save_scene, write_calibration,
    write_ppm,
};

use crate::geometry::{CameraModel, GeometryError, PointCloud};
use ndarray::Array3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: expected {expected} bytes ({detail}), got {actual}")]
    BadFileSize { path: String, expected: u64, detail: String, actual: u64 },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("scene validation: {0}")]
    Validation(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One paired sample: point cloud, per-point class ids, RGB image in [0, 1],
/// and the camera model tying them together.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub labels: Vec<u32>,
    pub image: Array3<f64>,
    pub cam: CameraModel,
    pub id: String,
}

impl Scene {
    pub fn new(
        cloud: PointCloud,
        labels: Vec<u32>,
        image: Array3<f64>,
        cam: CameraModel,
        id: String,
    ) -> Result<Self, DataError> {
        if labels.len() != cloud.len() {
            return Err(DataError::Validation(format!(
                "{} labels for {} points",
                labels.len(),
                cloud.len()
            )));
        }
        let (h, w, c) = image.dim();
        if c != 3 || h != cam.height || w != cam.width {
            return Err(DataError::Validation(format!(
                "image is {h}x{w}x{c} but camera expects {}x{}x3",
                cam.height, cam.width
            )));
        }
        if image.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(DataError::Validation("image values outside [0, 1]".into()));
        }
        Ok(Scene { cloud, labels, image, cam, id })
    }

    pub fn n_points(&self) -> usize {
        self.cloud.len()
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    /// Largest label + 1; the class count implied by the annotations.
    pub fn max_class(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }
}
