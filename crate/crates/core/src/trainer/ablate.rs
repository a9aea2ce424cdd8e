//! Ablation harness: trains the toggle ladder over several seeds and
//! reports median validation mIoU per configuration, plus a rotation-voting
//! row on top of the full configuration.

use crate::data::Scene;
use crate::trainer::{evaluate, train, LossToggles, TrainConfig, TrainerError};
use rayon::prelude::*;

/// The toggle ladder, in presentation order. The final entry reuses the
/// full configuration's trained models and only changes inference.
pub const ABLATION_ROWS: [&str; 5] =
    ["baseline", "+3d-to-2d", "+bidirectional", "+distillation", "+tta"];

fn ladder() -> [LossToggles; 4] {
    [
        LossToggles::none(),
        LossToggles { use_cmd: false, use_2to3: false, use_3to2: true },
        LossToggles { use_cmd: false, use_2to3: true, use_3to2: true },
        LossToggles { use_cmd: true, use_2to3: true, use_3to2: true },
    ]
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub median_miou: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
}

impl AblationTable {
    /// Markdown table: one row per configuration, medians plus per-seed
    /// values.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| configuration | median mIoU | per-seed mIoU |\n");
        out.push_str("|---|---|---|\n");
        for row in &self.rows {
            let seeds: Vec<String> = row.per_seed.iter().map(|v| format!("{v:.4}")).collect();
            out.push_str(&format!(
                "| {} | {:.4} | {} |\n",
                row.name,
                row.median_miou,
                seeds.join(" ")
            ));
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Trains every (configuration, seed) cell and reduces to the five-row
/// table. Cells run in parallel; each cell is single-threaded and
/// deterministic, and the table is assembled by (row, seed) index, so the
/// output is independent of scheduling.
pub fn ablate(
    train_scenes: &[Scene],
    val_scenes: &[Scene],
    base_cfg: &TrainConfig,
    seeds: &[u64],
    epochs: usize,
) -> Result<AblationTable, TrainerError> {
    if seeds.is_empty() {
        return Err(TrainerError::BadConfig("ablation needs at least one seed".into()));
    }
    if val_scenes.is_empty() {
        return Err(TrainerError::BadConfig("ablation needs validation scenes".into()));
    }
    let ladder = ladder();
    let cells: Vec<(usize, u64)> = (0..ladder.len())
        .flat_map(|cfg_idx| seeds.iter().map(move |&s| (cfg_idx, s)))
        .collect();

    // Each cell yields (config index, seed, plain mIoU, voted mIoU for the
    // full configuration).
    let results: Result<Vec<(usize, u64, f64, Option<f64>)>, TrainerError> = cells
        .par_iter()
        .map(|&(cfg_idx, seed)| {
            let cfg = TrainConfig {
                seed,
                epochs,
                toggles: ladder[cfg_idx],
                ..base_cfg.clone()
            };
            let (state, _log) = train(train_scenes, &cfg)?;
            let plain = evaluate(val_scenes, &state, 1)?.miou;
            let voted = if cfg_idx == ladder.len() - 1 {
                Some(evaluate(val_scenes, &state, base_cfg.tta_angles)?.miou)
            } else {
                None
            };
            Ok((cfg_idx, seed, plain, voted))
        })
        .collect();
    let results = results?;

    let mut per_config: Vec<Vec<f64>> = vec![vec![0.0; seeds.len()]; ladder.len() + 1];
    for (cfg_idx, seed, plain, voted) in results {
        let seed_idx = seeds.iter().position(|&s| s == seed).expect("seed from input list");
        per_config[cfg_idx][seed_idx] = plain;
        if let Some(v) = voted {
            per_config[ladder.len()][seed_idx] = v;
        }
    }
    let rows = ABLATION_ROWS
        .iter()
        .zip(per_config)
        .map(|(&name, per_seed)| AblationRow {
            name,
            median_miou: median(&per_seed),
            per_seed,
        })
        .collect();
    Ok(AblationTable { rows, seeds: seeds.to_vec() })
}
