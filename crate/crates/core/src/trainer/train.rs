//! The training loop: augment, build the joint loss, backpropagate, and
//! step the optimizer, one scene at a time.

use crate::data::Scene;
use crate::metrics::{miou, ConfusionMatrix};
use crate::trainer::{
    augment_with, predict, sample_augment, teacher_tables, total_loss, ModelState, TrainConfig,
    TrainSample, TrainerError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One optimizer step's loss values.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss_cmd: f64,
    pub loss_2d: f64,
    pub loss_3d: f64,
    pub loss_total: f64,
}

/// Training-set quality at the end of each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_miou: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Per-step CSV: `epoch,step,loss_cmd,loss_2d,loss_3d,loss_total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss_cmd,loss_2d,loss_3d,loss_total\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.step, r.loss_cmd, r.loss_2d, r.loss_3d, r.loss_total
            ));
        }
        out
    }
}

const AUG_STREAM_SALT: u64 = 0xA6_0000_0001;

/// Trains a fresh model on the scenes for `cfg.epochs` passes, one
/// optimizer step per scene. Deterministic for a fixed seed. A non-finite
/// loss aborts with the failing step index.
pub fn train(scenes: &[Scene], cfg: &TrainConfig) -> Result<(ModelState, TrainLog), TrainerError> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(TrainerError::BadConfig("training needs at least one scene".into()));
    }
    let mut state = ModelState::init(cfg)?;
    let samples: Vec<TrainSample> = scenes.iter().map(|s| TrainSample::new(s.clone())).collect();

    // Teacher features depend only on (scene, flip); cache both variants.
    let mut teacher_cache: Vec<[Option<Vec<crate::autodiff::Matrix>>; 2]> =
        (0..samples.len()).map(|_| [None, None]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUG_STREAM_SALT);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        for (i, sample) in samples.iter().enumerate() {
            let draw = sample_augment(&cfg.augment, &mut rng);
            let augmented = augment_with(sample, &draw);
            let teacher = if cfg.toggles.use_cmd {
                let slot = &mut teacher_cache[i][draw.flip as usize];
                if slot.is_none() {
                    *slot = Some(teacher_tables(&state, &augmented)?);
                }
                slot.as_deref()
            } else {
                None
            };
            let breakdown = total_loss(&augmented, &state, teacher)?;
            let total = breakdown.total_value();
            if !total.is_finite() {
                return Err(TrainerError::NonFiniteLoss { step: state.step });
            }
            breakdown.total.backward()?;
            state.optimizer.step(&state.named_params())?;
            log.steps.push(StepRecord {
                epoch,
                step: state.step,
                loss_cmd: breakdown.cmd,
                loss_2d: breakdown.l2d,
                loss_3d: breakdown.l3d,
                loss_total: total,
            });
            state.step += 1;
        }
        let mut cm = ConfusionMatrix::new(cfg.classes);
        for scene in scenes {
            let pred = predict(scene, &state)?;
            cm.accumulate(&pred, &scene.labels_usize())?;
        }
        log.epochs.push(EpochRecord { epoch, train_miou: miou(&cm)? });
    }
    Ok((state, log))
}
