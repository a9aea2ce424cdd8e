//! Joint loss assembly: imitation + both branch classification losses, each
//! gated by its toggle.

use crate::autodiff::{Matrix, Value};
use crate::backbones::gather_camera_features;
use crate::distill::{cmd_loss, select_overlap_rows, CmdBatch};
use crate::fusion::{
    bfb_forward, branch_loss, classify, concat_pyramid, fuse_to_3d_only, single_fusion,
};
use crate::trainer::{ModelState, TrainSample, TrainerError};

/// The assembled loss graph plus the plain values of each term (zero when
/// its toggle is off).
pub struct LossBreakdown {
    pub total: Value,
    pub cmd: f64,
    pub l2d: f64,
    pub l3d: f64,
}

impl LossBreakdown {
    pub fn total_value(&self) -> f64 {
        self.total.scalar()
    }
}

/// Per-point teacher features for the in-FOV rows of a sample, one table per
/// scale. The teacher depends only on the image and the correspondence, so
/// callers can cache this per (scene, flip).
pub fn teacher_tables(state: &ModelState, sample: &TrainSample) -> Result<Vec<Matrix>, TrainerError> {
    let pyramid = state.teacher().forward(&sample.scene.image)?;
    Ok(gather_camera_features(&pyramid, &sample.corr)?)
}

/// Builds `L = L_imitation + L_2D + L_3D` over one (augmented) sample,
/// dropping the terms whose toggles are off. The LIDAR-branch loss is always
/// present; without image-to-LIDAR fusion it is computed on the raw
/// concatenated pyramid.
pub fn total_loss(
    sample: &TrainSample,
    state: &ModelState,
    teacher: Option<&[Matrix]>,
) -> Result<LossBreakdown, TrainerError> {
    let labels = sample.scene.labels_usize();
    if let Some(&bad) = labels.iter().find(|&&l| l >= state.classes) {
        return Err(TrainerError::BadConfig(format!(
            "label {bad} out of range for {} classes",
            state.classes
        )));
    }
    let z2d = state.branch_2d.forward(&sample.scene.cloud)?;
    let z3d = state.branch_3d.forward(&sample.scene.cloud)?;
    let toggles = state.toggles;

    let (z2df, z3df) = if toggles.use_2to3 && toggles.use_3to2 {
        let fused = bfb_forward(&z2d, &z3d, &state.bfb)?;
        (Some(fused.z_2df), fused.z_3df)
    } else if toggles.use_2to3 {
        (None, fuse_to_3d_only(&z2d, &z3d, &state.bfb)?)
    } else if toggles.use_3to2 {
        let mut enhanced = Vec::with_capacity(state.bfb.to_2d.len());
        for (s, p) in state.bfb.to_2d.iter().enumerate() {
            enhanced.push(single_fusion(&z3d.scales[s], &z2d.scales[s], p)?);
        }
        (Some(Value::concat_cols(&enhanced)?), concat_pyramid(&z3d)?)
    } else {
        (None, concat_pyramid(&z3d)?)
    };

    let term_cmd = if toggles.use_cmd {
        let teacher_owned;
        let teacher_ref = match teacher {
            Some(t) => t,
            None => {
                teacher_owned = teacher_tables(state, sample)?;
                &teacher_owned
            }
        };
        let student = select_overlap_rows(&z2d, &sample.corr)?;
        let batch = CmdBatch::new(student, teacher_ref.to_vec())?;
        Some(cmd_loss(&batch, state.cmd_kind)?)
    } else {
        None
    };
    let term_2d = match z2df {
        Some(feats) if toggles.use_3to2 => {
            Some(branch_loss(&classify(&feats, &state.bfb.head_2d)?, &labels)?)
        }
        _ => None,
    };
    let term_3d = branch_loss(&classify(&z3df, &state.bfb.head_3d)?, &labels)?;

    let cmd_value = term_cmd.as_ref().map(|v| v.scalar()).unwrap_or(0.0);
    let l2d_value = term_2d.as_ref().map(|v| v.scalar()).unwrap_or(0.0);
    let l3d_value = term_3d.scalar();

    // Sum in a fixed order: imitation, then 2D, then 3D.
    let mut total: Option<Value> = term_cmd;
    for term in [term_2d, Some(term_3d)].into_iter().flatten() {
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    Ok(LossBreakdown {
        total: total.expect("the 3D term is always present"),
        cmd: cmd_value,
        l2d: l2d_value,
        l3d: l3d_value,
    })
}
