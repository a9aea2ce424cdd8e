//! Inference: class scores, argmax prediction, rotation-voting test-time
//! augmentation, and dataset evaluation.
//!
//! Prediction is camera-free: only the two point branches and the
//! image-knowledge-to-LIDAR fusion direction run, and the LIDAR branch's
//! classifier produces the result.

use crate::autodiff::Matrix;
use crate::data::Scene;
use crate::fusion::{classify, concat_pyramid, fuse_to_3d_only};
use crate::geometry::PointCloud;
use crate::metrics::{fwiou, miou, ConfusionMatrix};
use crate::trainer::{transform_cloud, ModelState, TrainerError};

/// Row-wise softmax of a logits table.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Per-point class probabilities (`N x C`) for a cloud.
pub fn class_scores(cloud: &PointCloud, state: &ModelState) -> Result<Matrix, TrainerError> {
    let z2d = state.branch_2d.forward(cloud)?;
    let z3d = state.branch_3d.forward(cloud)?;
    let fused = if state.toggles.use_2to3 {
        fuse_to_3d_only(&z2d, &z3d, &state.bfb)?
    } else {
        concat_pyramid(&z3d)?
    };
    let logits = classify(&fused, &state.bfb.head_3d)?;
    let out = softmax_rows(&logits.data());
    Ok(out)
}

/// Row argmax with ties broken toward the lowest class id.
pub fn argmax_rows(scores: &Matrix) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Predicted class ids for every point of a scene.
pub fn predict(scene: &Scene, state: &ModelState) -> Result<Vec<usize>, TrainerError> {
    Ok(argmax_rows(&class_scores(&scene.cloud, state)?))
}

/// Rotation-voting prediction: the cloud is rotated by `2*pi*j/k` around Z
/// for `j = 0..k`, per-rotation score tables are averaged, and the argmax of
/// the average wins. `k = 1` reproduces [`predict`] bit-exactly.
pub fn tta_predict(scene: &Scene, state: &ModelState, k: usize) -> Result<Vec<usize>, TrainerError> {
    Ok(argmax_rows(&tta_scores(scene, state, k)?))
}

/// The averaged score table used by [`tta_predict`].
pub fn tta_scores(scene: &Scene, state: &ModelState, k: usize) -> Result<Matrix, TrainerError> {
    if k == 0 {
        return Err(TrainerError::BadConfig("tta angle count must be at least 1".into()));
    }
    let mut sum: Option<Matrix> = None;
    for j in 0..k {
        let angle = std::f64::consts::TAU * j as f64 / k as f64;
        let rotated = transform_cloud(&scene.cloud, 1.0, angle);
        let scores = class_scores(&rotated, state)?;
        sum = Some(match sum {
            None => scores,
            Some(acc) => acc + scores,
        });
    }
    Ok(sum.expect("k >= 1") / k as f64)
}

/// Evaluation summary over a scene list.
pub struct EvalReport {
    pub cm: ConfusionMatrix,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub fwiou: f64,
}

/// Scores every scene (with `tta_k`-way rotation voting; 1 disables voting)
/// and reduces to per-class IoU, mIoU, and fwIoU.
pub fn evaluate(
    scenes: &[Scene],
    state: &ModelState,
    tta_k: usize,
) -> Result<EvalReport, TrainerError> {
    let mut cm = ConfusionMatrix::new(state.classes);
    for scene in scenes {
        let pred = tta_predict(scene, state, tta_k)?;
        cm.accumulate(&pred, &scene.labels_usize())?;
    }
    let per_class_iou = cm.per_class_iou();
    let miou = miou(&cm)?;
    let fwiou = fwiou(&cm)?;
    Ok(EvalReport { cm, per_class_iou, miou, fwiou })
}

impl EvalReport {
    /// CSV rows `class_id,iou` with `miou` and `fwiou` footer rows. Absent
    /// classes leave the IoU field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,iou\n");
        for (c, iou) in self.per_class_iou.iter().enumerate() {
            match iou {
                Some(v) => out.push_str(&format!("{c},{v:.6}\n")),
                None => out.push_str(&format!("{c},\n")),
            }
        }
        out.push_str(&format!("miou,{:.6}\n", self.miou));
        out.push_str(&format!("fwiou,{:.6}\n", self.fwiou));
        out
    }
}
