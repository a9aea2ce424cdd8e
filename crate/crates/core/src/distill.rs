//! Cross-modality feature imitation: the image-knowledge branch (student)
//! regresses the frozen camera branch's per-point features (teacher) on the
//! points inside the camera FOV. Gradients flow to the student only; the
//! teacher enters the graph as constants.

use crate::autodiff::{AdError, Matrix, Value};
use crate::backbones::PointFeaturePyramid;
use crate::geometry::CorrespondenceTable;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("student/teacher rows differ at scale {scale}: {student} vs {teacher}")]
    RowMismatch { scale: usize, student: usize, teacher: usize },
    #[error("correspondence covers {corr} points but pyramid has {points}")]
    CloudMismatch { corr: usize, points: usize },
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Loss shape: the per-point Euclidean norm as written, or its square for
/// smoothness experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CmdLossKind {
    #[default]
    Norm,
    SquaredNorm,
}

/// Per-scale student features restricted to in-FOV rows, paired with the
/// teacher's features at the same rows. Teacher tables are plain matrices,
/// so no gradient can reach them.
pub struct CmdBatch {
    pub student: Vec<Value>,
    pub teacher: Vec<Matrix>,
}

impl CmdBatch {
    pub fn new(student: Vec<Value>, teacher: Vec<Matrix>) -> Result<Self, DistillError> {
        assert_eq!(student.len(), teacher.len(), "one teacher table per student scale");
        for (scale, (s, t)) in student.iter().zip(&teacher).enumerate() {
            if s.shape() != (t.nrows(), t.ncols()) {
                return Err(DistillError::RowMismatch {
                    scale,
                    student: s.shape().0,
                    teacher: t.nrows(),
                });
            }
        }
        Ok(CmdBatch { student, teacher })
    }

    pub fn n_overlap(&self) -> usize {
        self.student.first().map(|s| s.shape().0).unwrap_or(0)
    }
}

/// Restricts every scale of a pyramid to the in-FOV rows, preserving point
/// order, through a differentiable gather.
pub fn select_overlap_rows(
    pyr: &PointFeaturePyramid,
    corr: &CorrespondenceTable,
) -> Result<Vec<Value>, DistillError> {
    if corr.in_fov.len() != pyr.n_points() {
        return Err(DistillError::CloudMismatch {
            corr: corr.in_fov.len(),
            points: pyr.n_points(),
        });
    }
    let indices = corr.in_fov_indices();
    let mut out = Vec::with_capacity(pyr.scales.len());
    for scale in &pyr.scales {
        out.push(scale.gather_rows(&indices)?);
    }
    Ok(out)
}

/// The imitation loss: per scale, the mean over in-FOV points of the
/// per-point distance between student and teacher rows, summed over scales.
/// An empty overlap yields a zero constant (with a warning) so a scene
/// without camera coverage cannot poison a training step.
pub fn cmd_loss(batch: &CmdBatch, kind: CmdLossKind) -> Result<Value, DistillError> {
    if batch.n_overlap() == 0 {
        log::warn!("scene has no camera overlap; imitation loss is zero");
        return Ok(Value::constant(Matrix::zeros((1, 1))));
    }
    let mut total: Option<Value> = None;
    for (student, teacher) in batch.student.iter().zip(&batch.teacher) {
        let neg_teacher = Value::constant(teacher.mapv(|v| -v));
        let diff = student.add(&neg_teacher)?;
        let term = match kind {
            CmdLossKind::Norm => diff.rowwise_l2_mean(),
            CmdLossKind::SquaredNorm => {
                let sq = diff.mul(&diff)?;
                let col_means = sq.row_mean();
                let ones = Value::constant(Matrix::from_elem((col_means.shape().1, 1), 1.0));
                col_means.matmul(&ones)?
            }
        };
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

/// Plain (non-graph) mean feature distance between student and teacher
/// tables, averaged over scales: the measurement used to probe how well the
/// student generalizes beyond the camera FOV.
pub fn mean_feature_distance(student: &[Matrix], teacher: &[Matrix]) -> f64 {
    assert_eq!(student.len(), teacher.len());
    assert!(!student.is_empty());
    let mut per_scale = 0.0;
    for (s, t) in student.iter().zip(teacher) {
        assert_eq!(s.dim(), t.dim());
        let n = s.nrows();
        assert!(n > 0, "distance needs at least one row");
        let mut acc = 0.0;
        for i in 0..n {
            let mut sq = 0.0;
            for j in 0..s.ncols() {
                let d = s[(i, j)] - t[(i, j)];
                sq += d * d;
            }
            acc += sq.sqrt();
        }
        per_scale += acc / n as f64;
    }
    per_scale / student.len() as f64
}
