//! The frozen camera branch: a seeded random-projection feature pyramid.
//!
//! Scale 1 maps each pixel's RGB through a fixed linear layer; every further
//! scale is a 2x2 average pool of the previous one followed by another fixed
//! linear layer. Parameters are plain arrays, never graph nodes, so no
//! gradient can ever reach them.

use super::{BackboneError, N_SCALES};
use crate::autodiff::Matrix;
use crate::geometry::{upsample_feature_map, CorrespondenceTable};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Per-scale image feature grids; scale `s` has shape
/// `(H / 2^(s-1)) x (W / 2^(s-1)) x d`.
#[derive(Debug, Clone)]
pub struct ImageFeaturePyramid {
    pub scales: Vec<Array3<f64>>,
}

impl ImageFeaturePyramid {
    /// Base (scale-1) spatial dimensions.
    pub fn base_dims(&self) -> (usize, usize) {
        let (h, w, _) = self.scales[0].dim();
        (h, w)
    }

    pub fn feature_dim(&self) -> usize {
        self.scales[0].dim().2
    }
}

/// Frozen camera-branch weights, reproducible from a seed.
#[derive(Debug, Clone)]
pub struct CameraEncoder {
    pub seed: u64,
    pub feature_dim: usize,
    rgb_map: Matrix,
    scale_maps: Vec<Matrix>,
}

impl CameraEncoder {
    pub fn new(seed: u64, feature_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Teacher features are kept at a modest scale so the imitation loss
        // starts in the same range as the classification losses.
        let rgb_std = 0.25;
        let normal = Normal::new(0.0, rgb_std).expect("valid normal");
        let rgb_map = Matrix::from_shape_fn((3, feature_dim), |_| normal.sample(&mut rng));
        let map_std = (1.0 / feature_dim as f64).sqrt();
        let normal = Normal::new(0.0, map_std).expect("valid normal");
        let scale_maps = (0..N_SCALES - 1)
            .map(|_| Matrix::from_shape_fn((feature_dim, feature_dim), |_| normal.sample(&mut rng)))
            .collect();
        CameraEncoder { seed, feature_dim, rgb_map, scale_maps }
    }

    /// Builds the four-scale pyramid for an `H x W x 3` RGB image with values
    /// in [0, 1]. `H` and `W` must be multiples of 8 so every scale halves
    /// exactly.
    pub fn forward(&self, image: &Array3<f64>) -> Result<ImageFeaturePyramid, BackboneError> {
        let (h, w, c) = image.dim();
        if c != 3 || h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(BackboneError::BadImageShape { h, w, c });
        }
        let mut scales = Vec::with_capacity(N_SCALES);
        scales.push(apply_pixel_map(image, &self.rgb_map));
        for m in &self.scale_maps {
            let pooled = avg_pool_2x2(scales.last().expect("non-empty"));
            scales.push(apply_pixel_map(&pooled, m));
        }
        Ok(ImageFeaturePyramid { scales })
    }
}

/// Applies a per-pixel linear map: `(H, W, Cin) x (Cin, Cout) -> (H, W, Cout)`.
fn apply_pixel_map(grid: &Array3<f64>, map: &Matrix) -> Array3<f64> {
    let (h, w, cin) = grid.dim();
    let flat = grid
        .view()
        .into_shape_with_order((h * w, cin))
        .expect("contiguous row-major grid");
    let mapped = flat.dot(map);
    let cout = map.ncols();
    mapped.into_shape_with_order((h, w, cout)).expect("shape preserved")
}

/// 2x2 average pooling with stride 2; both spatial dims must be even.
pub(crate) fn avg_pool_2x2(grid: &Array3<f64>) -> Array3<f64> {
    let (h, w, d) = grid.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let mut out = Array3::zeros((h / 2, w / 2, d));
    for i in 0..h / 2 {
        for j in 0..w / 2 {
            for c in 0..d {
                out[(i, j, c)] = 0.25
                    * (grid[(2 * i, 2 * j, c)]
                        + grid[(2 * i, 2 * j + 1, c)]
                        + grid[(2 * i + 1, 2 * j, c)]
                        + grid[(2 * i + 1, 2 * j + 1, c)]);
            }
        }
    }
    out
}

/// Looks up per-point camera features: each scale is upsampled back to the
/// image resolution, then indexed at every in-FOV point's (row, col). Output
/// is one `N_overlap x d` table per scale, in point order.
pub fn gather_camera_features(
    pyr: &ImageFeaturePyramid,
    corr: &CorrespondenceTable,
) -> Result<Vec<Matrix>, BackboneError> {
    let (h, w) = pyr.base_dims();
    if corr.height != h || corr.width != w {
        return Err(BackboneError::StaleCorrespondence {
            corr_h: corr.height,
            corr_w: corr.width,
            h,
            w,
        });
    }
    let d = pyr.feature_dim();
    let mut out = Vec::with_capacity(pyr.scales.len());
    for grid in &pyr.scales {
        let up = upsample_feature_map(grid, (h, w))?;
        let mut table = Matrix::zeros((corr.n_overlap, d));
        for (i, &(row, col)) in corr.pixel.iter().enumerate() {
            for c in 0..d {
                table[(i, c)] = up[(row as usize, col as usize, c)];
            }
        }
        out.push(table);
    }
    Ok(out)
}
