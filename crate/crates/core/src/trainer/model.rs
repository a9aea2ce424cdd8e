//! Model state: both point branches, the fusion parameters, the frozen
//! teacher seed, optimizer buffers, and the step counter, with bit-exact
//! checkpointing.

use crate::autodiff::{
    load_params, save_params, Activation, CheckpointError, Linear, Matrix, Mlp, Sgd, Value,
};
use crate::backbones::{CameraEncoder, PointEncoder, N_SCALES};
use crate::distill::CmdLossKind;
use crate::fusion::{BfbParams, SingleFusionParams};
use crate::trainer::{LossToggles, TrainConfig, TrainerError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::Path;

const TEACHER_SALT: u64 = 0x7EAC_4E2D_0000_0001;
const FORMAT_VERSION: f64 = 1.0;

pub struct ModelState {
    pub branch_2d: PointEncoder,
    pub branch_3d: PointEncoder,
    pub bfb: BfbParams,
    pub teacher_seed: u64,
    pub toggles: LossToggles,
    pub feature_dim: usize,
    pub classes: usize,
    pub cmd_kind: CmdLossKind,
    pub optimizer: Sgd,
    pub step: u64,
    pub hidden: Activation,
}

impl ModelState {
    pub fn init(cfg: &TrainConfig) -> Result<Self, TrainerError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let hidden = match cfg.leaky_slope {
            Some(slope) => Activation::LeakyRelu(slope),
            None => Activation::Relu,
        };
        let branch_2d =
            PointEncoder::from_rng(cfg.feature_dim, cfg.voxel_size, hidden, &mut rng);
        let branch_3d =
            PointEncoder::from_rng(cfg.feature_dim, cfg.voxel_size, hidden, &mut rng);
        let bfb = BfbParams::from_rng(
            cfg.feature_dim,
            cfg.classes,
            cfg.fusion_depth,
            cfg.scalar_gate,
            &mut rng,
        );
        Ok(ModelState {
            branch_2d,
            branch_3d,
            bfb,
            teacher_seed: cfg.seed ^ TEACHER_SALT,
            toggles: cfg.toggles,
            feature_dim: cfg.feature_dim,
            classes: cfg.classes,
            cmd_kind: cfg.cmd_kind,
            optimizer: Sgd::new(cfg.lr, cfg.momentum)?,
            step: 0,
            hidden,
        })
    }

    /// The frozen camera branch, rebuilt from its seed.
    pub fn teacher(&self) -> CameraEncoder {
        CameraEncoder::new(self.teacher_seed, self.feature_dim)
    }

    /// Every trainable parameter with its checkpoint name, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, Value)> {
        let mut out = self.branch_2d.named_params("b2d");
        out.extend(self.branch_3d.named_params("b3d"));
        out.extend(self.bfb.named_params());
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let leak = match self.hidden {
            Activation::Relu => -1.0,
            Activation::LeakyRelu(slope) => slope,
        };
        let mut entries: Vec<(String, Matrix)> = vec![
            ("meta.format".into(), Matrix::from_elem((1, 1), FORMAT_VERSION)),
            (
                "meta.shape".into(),
                Matrix::from_shape_vec(
                    (1, 4),
                    vec![
                        self.feature_dim as f64,
                        self.classes as f64,
                        self.branch_2d.voxel_size,
                        leak,
                    ],
                )
                .expect("static shape"),
            ),
            (
                "meta.toggles".into(),
                Matrix::from_shape_vec(
                    (1, 3),
                    vec![
                        self.toggles.use_cmd as u8 as f64,
                        self.toggles.use_2to3 as u8 as f64,
                        self.toggles.use_3to2 as u8 as f64,
                    ],
                )
                .expect("static shape"),
            ),
            (
                "meta.cmd_kind".into(),
                Matrix::from_elem(
                    (1, 1),
                    match self.cmd_kind {
                        CmdLossKind::Norm => 0.0,
                        CmdLossKind::SquaredNorm => 1.0,
                    },
                ),
            ),
            ("meta.teacher_seed".into(), split_u64(self.teacher_seed)),
            ("meta.step".into(), split_u64(self.step)),
            (
                "meta.opt".into(),
                Matrix::from_shape_vec((1, 2), vec![self.optimizer.lr, self.optimizer.momentum])
                    .expect("static shape"),
            ),
        ];
        let named = self.named_params();
        for (name, value) in &named {
            entries.push((name.clone(), value.data().clone()));
        }
        for (name, _) in &named {
            if let Some(buf) = self.optimizer.buffer(name) {
                entries.push((format!("opt.{name}"), buf.clone()));
            }
        }
        save_params(path, &entries)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let entries = load_params(path)?;
        let mut map: HashMap<String, Matrix> = HashMap::new();
        for (name, m) in entries {
            map.insert(name, m);
        }
        let meta = |key: &str| -> Result<Matrix, CheckpointError> {
            map.get(key).cloned().ok_or_else(|| CheckpointError::MissingParam(key.into()))
        };
        let format = meta("meta.format")?[(0, 0)];
        if format != FORMAT_VERSION {
            return Err(CheckpointError::BadMeta(format!(
                "unsupported format version {format}"
            )));
        }
        let shape = meta("meta.shape")?;
        let feature_dim = shape[(0, 0)] as usize;
        let classes = shape[(0, 1)] as usize;
        let voxel_size = shape[(0, 2)];
        let leak = shape[(0, 3)];
        let hidden =
            if leak < 0.0 { Activation::Relu } else { Activation::LeakyRelu(leak) };
        let toggles_m = meta("meta.toggles")?;
        let toggles = LossToggles {
            use_cmd: toggles_m[(0, 0)] != 0.0,
            use_2to3: toggles_m[(0, 1)] != 0.0,
            use_3to2: toggles_m[(0, 2)] != 0.0,
        };
        let cmd_kind = if meta("meta.cmd_kind")?[(0, 0)] == 0.0 {
            CmdLossKind::Norm
        } else {
            CmdLossKind::SquaredNorm
        };
        let teacher_seed = join_u64(&meta("meta.teacher_seed")?);
        let step = join_u64(&meta("meta.step")?);
        let opt = meta("meta.opt")?;
        let optimizer = Sgd::new(opt[(0, 0)], opt[(0, 1)])
            .map_err(|e| CheckpointError::BadMeta(e.to_string()))?;

        let collect_mlp = |prefix: &str| -> Result<Mlp, CheckpointError> {
            let mut layers = Vec::new();
            let mut i = 0;
            while let Some(w) = map.get(&format!("{prefix}.{i}.w")) {
                let b = map
                    .get(&format!("{prefix}.{i}.b"))
                    .ok_or_else(|| CheckpointError::MissingParam(format!("{prefix}.{i}.b")))?;
                layers.push(Linear { w: Value::param(w.clone()), b: Value::param(b.clone()) });
                i += 1;
            }
            if layers.is_empty() {
                return Err(CheckpointError::MissingParam(format!("{prefix}.0.w")));
            }
            Ok(Mlp { layers, hidden })
        };
        let collect_encoder = |prefix: &str| -> Result<PointEncoder, CheckpointError> {
            let embed = collect_mlp(&format!("{prefix}.embed"))?;
            let mut scale_mlps = Vec::with_capacity(N_SCALES);
            for s in 0..N_SCALES {
                scale_mlps.push(collect_mlp(&format!("{prefix}.scale{s}"))?);
            }
            Ok(PointEncoder { embed, scale_mlps, voxel_size })
        };
        let collect_fusion = |prefix: &str| -> Result<SingleFusionParams, CheckpointError> {
            Ok(SingleFusionParams {
                mix: collect_mlp(&format!("{prefix}.mix"))?,
                residual: collect_mlp(&format!("{prefix}.residual"))?,
                gate: collect_mlp(&format!("{prefix}.gate"))?,
            })
        };
        let collect_head = |name: &str| -> Result<Linear, CheckpointError> {
            let w = map
                .get(&format!("{name}.w"))
                .ok_or_else(|| CheckpointError::MissingParam(format!("{name}.w")))?;
            let b = map
                .get(&format!("{name}.b"))
                .ok_or_else(|| CheckpointError::MissingParam(format!("{name}.b")))?;
            Ok(Linear { w: Value::param(w.clone()), b: Value::param(b.clone()) })
        };

        let branch_2d = collect_encoder("b2d")?;
        let branch_3d = collect_encoder("b3d")?;
        let mut to_2d = Vec::with_capacity(N_SCALES);
        let mut to_3d = Vec::with_capacity(N_SCALES);
        for s in 0..N_SCALES {
            to_2d.push(collect_fusion(&format!("bfb.to2d.{s}"))?);
            to_3d.push(collect_fusion(&format!("bfb.to3d.{s}"))?);
        }
        let bfb = BfbParams {
            to_2d,
            to_3d,
            head_2d: collect_head("bfb.head2d")?,
            head_3d: collect_head("bfb.head3d")?,
        };

        let state = ModelState {
            branch_2d,
            branch_3d,
            bfb,
            teacher_seed,
            toggles,
            feature_dim,
            classes,
            cmd_kind,
            optimizer,
            step,
            hidden,
        };
        for (name, param) in state.named_params() {
            if let Some(buf) = map.get(&format!("opt.{name}")) {
                let want = param.data().raw_dim();
                if buf.raw_dim() != want {
                    return Err(CheckpointError::ShapeMismatch {
                        name: format!("opt.{name}"),
                        rows: buf.nrows(),
                        cols: buf.ncols(),
                        want_rows: want[0],
                        want_cols: want[1],
                    });
                }
            }
        }
        let mut state = state;
        let names: Vec<String> = state.named_params().iter().map(|(n, _)| n.clone()).collect();
        for name in names {
            if let Some(buf) = map.get(&format!("opt.{name}")) {
                state.optimizer.set_buffer(name, buf.clone());
            }
        }
        Ok(state)
    }
}

fn split_u64(v: u64) -> Matrix {
    Matrix::from_shape_vec((1, 2), vec![(v & 0xFFFF_FFFF) as f64, (v >> 32) as f64])
        .expect("static shape")
}

fn join_u64(m: &Matrix) -> u64 {
    (m[(0, 0)] as u64) | ((m[(0, 1)] as u64) << 32)
}
