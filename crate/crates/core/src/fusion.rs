//! Bidirectional fusion: the single-direction gated-residual fusion block,
//! both directional instantiations, multi-scale concatenation, linear
//! classifiers, and the per-branch cross-entropy losses.

use crate::autodiff::{AdError, Linear, Matrix, Mlp, Value};
use crate::backbones::{PointFeaturePyramid, N_SCALES};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("pyramids misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Parameters of one single-direction fusion block. `mix` maps the source
/// features into the destination feature space, `residual` turns the
/// concatenated pair into a residual, and `gate` produces the attention
/// value from the residual and its global average. One independent instance
/// exists per (direction, scale) pair.
#[derive(Clone)]
pub struct SingleFusionParams {
    pub mix: Mlp,      // d -> d
    pub residual: Mlp, // 2d -> d
    pub gate: Mlp,     // 2d -> d (channel-wise) or 2d -> 1 (scalar gate)
}

fn dims_chain(input: usize, output: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![input];
    for _ in 1..depth {
        dims.push(output);
    }
    dims.push(output);
    dims
}

impl SingleFusionParams {
    /// Random initialization with `depth` linear layers per MLP (default
    /// callers use 1). A channel-wise gate outputs `d` values per point;
    /// pass `scalar_gate` for a single shared gate value per point.
    pub fn from_rng<R: Rng>(d: usize, depth: usize, scalar_gate: bool, rng: &mut R) -> Self {
        let hidden = crate::autodiff::Activation::Relu;
        let gate_out = if scalar_gate { 1 } else { d };
        SingleFusionParams {
            mix: Mlp::from_rng(&dims_chain(d, d, depth), hidden, rng),
            residual: Mlp::from_rng(&dims_chain(2 * d, d, depth), hidden, rng),
            gate: Mlp::from_rng(&dims_chain(2 * d, gate_out, depth), hidden, rng),
        }
    }

    pub fn zeros(d: usize) -> Self {
        let hidden = crate::autodiff::Activation::Relu;
        SingleFusionParams {
            mix: Mlp::zeros(&[d, d], hidden),
            residual: Mlp::zeros(&[2 * d, d], hidden),
            gate: Mlp::zeros(&[2 * d, d], hidden),
        }
    }

    pub fn set_zero(&self) {
        self.mix.set_zero();
        self.residual.set_zero();
        self.gate.set_zero();
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (tag, mlp) in [("mix", &self.mix), ("residual", &self.residual), ("gate", &self.gate)]
        {
            for (i, layer) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.{tag}.{i}.w"), layer.w.clone()));
                out.push((format!("{prefix}.{tag}.{i}.b"), layer.b.clone()));
            }
        }
        out
    }
}

/// One direction of fusion at one scale:
///
/// ```text
/// m   = residual(Cat(mix(src), dst))
/// out = dst + sigmoid(gate(Cat(broadcast(GAP(m)), m))) * m
/// ```
///
/// With all parameters zero the residual `m` vanishes and the output equals
/// `dst` exactly.
pub fn single_fusion(
    src: &Value,
    dst: &Value,
    p: &SingleFusionParams,
) -> Result<Value, FusionError> {
    let (n_src, d_src) = src.shape();
    let (n_dst, d_dst) = dst.shape();
    if n_src != n_dst || d_src != d_dst {
        return Err(FusionError::Misaligned(format!(
            "src is {n_src}x{d_src}, dst is {n_dst}x{d_dst}"
        )));
    }
    let mixed = p.mix.apply(src)?;
    let m = p.residual.apply(&Value::concat_cols(&[mixed, dst.clone()])?)?;
    let pooled = m.row_mean().broadcast_row(n_src)?;
    let gate_in = Value::concat_cols(&[pooled, m.clone()])?;
    let gate_raw = p.gate.apply(&gate_in)?;
    let gate = if gate_raw.shape().1 == 1 && d_src != 1 {
        // Scalar gate: one value per point, shared across channels.
        let ones = Value::constant(Matrix::from_elem((1, d_src), 1.0));
        gate_raw.sigmoid().matmul(&ones)?
    } else {
        gate_raw.sigmoid()
    };
    Ok(dst.add(&gate.mul(&m)?)?)
}

/// All bidirectional-fusion parameters: four blocks per direction (one per
/// scale) and the two linear classifiers. Directions share nothing.
#[derive(Clone)]
pub struct BfbParams {
    /// Enhances the image-knowledge branch from LIDAR features (per scale).
    pub to_2d: Vec<SingleFusionParams>,
    /// Enhances the LIDAR branch from image-knowledge features (per scale).
    pub to_3d: Vec<SingleFusionParams>,
    /// Classifier over the concatenated enhanced 2D features, 4d -> C.
    pub head_2d: Linear,
    /// Classifier over the concatenated enhanced 3D features, 4d -> C.
    pub head_3d: Linear,
}

impl BfbParams {
    pub fn from_rng<R: Rng>(
        d: usize,
        classes: usize,
        depth: usize,
        scalar_gate: bool,
        rng: &mut R,
    ) -> Self {
        BfbParams {
            to_2d: (0..N_SCALES)
                .map(|_| SingleFusionParams::from_rng(d, depth, scalar_gate, rng))
                .collect(),
            to_3d: (0..N_SCALES)
                .map(|_| SingleFusionParams::from_rng(d, depth, scalar_gate, rng))
                .collect(),
            head_2d: Linear::from_rng(N_SCALES * d, classes, rng),
            head_3d: Linear::from_rng(N_SCALES * d, classes, rng),
        }
    }

    /// Zeroes every fusion block (classifiers untouched), turning both
    /// directions into exact identity cascades.
    pub fn set_fusion_zero(&self) {
        for p in self.to_2d.iter().chain(&self.to_3d) {
            p.set_zero();
        }
    }

    pub fn named_params(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        for (s, p) in self.to_2d.iter().enumerate() {
            out.extend(p.named_params(&format!("bfb.to2d.{s}")));
        }
        for (s, p) in self.to_3d.iter().enumerate() {
            out.extend(p.named_params(&format!("bfb.to3d.{s}")));
        }
        out.push(("bfb.head2d.w".into(), self.head_2d.w.clone()));
        out.push(("bfb.head2d.b".into(), self.head_2d.b.clone()));
        out.push(("bfb.head3d.w".into(), self.head_3d.w.clone()));
        out.push(("bfb.head3d.b".into(), self.head_3d.b.clone()));
        out
    }
}

/// Concatenated enhanced features from both branches, each `N x 4d` (scales
/// in order).
pub struct FusedFeatures {
    pub z_2df: Value,
    pub z_3df: Value,
}

fn check_aligned(
    z_2d: &PointFeaturePyramid,
    z_3d: &PointFeaturePyramid,
) -> Result<(), FusionError> {
    if z_2d.scales.len() != N_SCALES || z_3d.scales.len() != N_SCALES {
        return Err(FusionError::Misaligned(format!(
            "expected {N_SCALES} scales, got {} and {}",
            z_2d.scales.len(),
            z_3d.scales.len()
        )));
    }
    for s in 0..N_SCALES {
        if z_2d.scales[s].shape() != z_3d.scales[s].shape() {
            let (ar, ac) = z_2d.scales[s].shape();
            let (br, bc) = z_3d.scales[s].shape();
            return Err(FusionError::Misaligned(format!(
                "scale {s}: {ar}x{ac} vs {br}x{bc}"
            )));
        }
    }
    Ok(())
}

/// Full bidirectional fusion: per scale, each branch is enhanced from the
/// other with its own parameters, then each branch's enhanced scales are
/// concatenated in order.
pub fn bfb_forward(
    z_2d: &PointFeaturePyramid,
    z_3d: &PointFeaturePyramid,
    p: &BfbParams,
) -> Result<FusedFeatures, FusionError> {
    check_aligned(z_2d, z_3d)?;
    let mut enhanced_2d = Vec::with_capacity(N_SCALES);
    let mut enhanced_3d = Vec::with_capacity(N_SCALES);
    for s in 0..N_SCALES {
        enhanced_2d.push(single_fusion(&z_3d.scales[s], &z_2d.scales[s], &p.to_2d[s])?);
        enhanced_3d.push(single_fusion(&z_2d.scales[s], &z_3d.scales[s], &p.to_3d[s])?);
    }
    Ok(FusedFeatures {
        z_2df: Value::concat_cols(&enhanced_2d)?,
        z_3df: Value::concat_cols(&enhanced_3d)?,
    })
}

/// Only the fusion direction used at inference: enhance the LIDAR branch
/// from the image-knowledge branch and concatenate its scales.
pub fn fuse_to_3d_only(
    z_2d: &PointFeaturePyramid,
    z_3d: &PointFeaturePyramid,
    p: &BfbParams,
) -> Result<Value, FusionError> {
    check_aligned(z_2d, z_3d)?;
    let mut enhanced = Vec::with_capacity(N_SCALES);
    for s in 0..N_SCALES {
        enhanced.push(single_fusion(&z_2d.scales[s], &z_3d.scales[s], &p.to_3d[s])?);
    }
    Ok(Value::concat_cols(&enhanced)?)
}

/// Raw multi-scale concatenation (the no-fusion path): `N x 4d`.
pub fn concat_pyramid(pyr: &PointFeaturePyramid) -> Result<Value, FusionError> {
    Ok(Value::concat_cols(&pyr.scales)?)
}

/// Affine classification of fused features: `N x 4d -> N x C` logits.
pub fn classify(fused: &Value, head: &Linear) -> Result<Value, FusionError> {
    if fused.shape().1 != head.in_dim() {
        return Err(FusionError::Misaligned(format!(
            "features have width {}, classifier expects {}",
            fused.shape().1,
            head.in_dim()
        )));
    }
    Ok(head.apply(fused)?)
}

/// Mean softmax cross-entropy of per-point logits against class ids.
pub fn branch_loss(logits: &Value, labels: &[usize]) -> Result<Value, FusionError> {
    Ok(logits.softmax_cross_entropy(labels)?)
}
