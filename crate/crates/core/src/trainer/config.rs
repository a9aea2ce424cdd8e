//! Training configuration.

use crate::distill::CmdLossKind;
use crate::trainer::TrainerError;

/// Which loss terms (and the fusion structure feeding them) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossToggles {
    /// Feature imitation from the frozen camera branch.
    pub use_cmd: bool,
    /// Image-knowledge-to-LIDAR fusion (the direction used at inference).
    pub use_2to3: bool,
    /// LIDAR-to-image-knowledge fusion and its classification loss.
    pub use_3to2: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles { use_cmd: true, use_2to3: true, use_3to2: true }
    }
}

impl LossToggles {
    pub fn none() -> Self {
        LossToggles { use_cmd: false, use_2to3: false, use_3to2: false }
    }
}

/// Augmentation ranges. Scaling and rotation transform coordinates only;
/// the horizontal flip mirrors the image and remaps the stored pixel
/// columns together, keeping point-to-pixel correspondence intact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub scale_range: (f64, f64),
    /// Rotation angles are drawn uniformly from `[0, rot_range)`.
    pub rot_range: f64,
    pub flip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_range: (0.95, 1.05),
            rot_range: std::f64::consts::TAU,
            flip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// No-op augmentation, for overfit runs and tests.
    pub fn identity() -> Self {
        AugmentConfig { scale_range: (1.0, 1.0), rot_range: 0.0, flip_prob: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Feature width `d` shared by every pyramid scale.
    pub feature_dim: usize,
    pub classes: usize,
    /// Base voxel size (meters) for the point encoders.
    pub voxel_size: f64,
    /// Linear layers per fusion MLP.
    pub fusion_depth: usize,
    /// One shared gate value per point instead of one per channel.
    pub scalar_gate: bool,
    /// Hidden-activation slope for negative inputs; `None` is plain ReLU.
    pub leaky_slope: Option<f64>,
    pub cmd_kind: CmdLossKind,
    pub toggles: LossToggles,
    pub augment: AugmentConfig,
    /// Rotation count for score-voting test-time augmentation.
    pub tta_angles: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.05,
            momentum: 0.5,
            seed: 0,
            feature_dim: 16,
            classes: 6,
            voxel_size: 0.1,
            fusion_depth: 1,
            scalar_gate: false,
            leaky_slope: None,
            cmd_kind: CmdLossKind::Norm,
            toggles: LossToggles::default(),
            augment: AugmentConfig::default(),
            tta_angles: 12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if !(self.lr > 0.0) {
            return Err(TrainerError::BadConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainerError::BadConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.tta_angles < 1 {
            return Err(TrainerError::BadConfig("tta_angles must be at least 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(TrainerError::BadConfig("feature_dim must be positive".into()));
        }
        if self.classes == 0 {
            return Err(TrainerError::BadConfig("classes must be positive".into()));
        }
        if !(self.voxel_size > 0.0) {
            return Err(TrainerError::BadConfig("voxel_size must be positive".into()));
        }
        if self.fusion_depth == 0 {
            return Err(TrainerError::BadConfig("fusion_depth must be at least 1".into()));
        }
        let (lo, hi) = self.augment.scale_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(TrainerError::BadConfig(format!(
                "scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if self.augment.rot_range < 0.0 || !(0.0..=1.0).contains(&self.augment.flip_prob) {
            return Err(TrainerError::BadConfig("bad augmentation ranges".into()));
        }
        Ok(())
    }
}
