// Exploratory harness (temporary): prints learning curves for tuning.
use lidarseg_core::data::{generate_scene, SceneGenConfig};
use lidarseg_core::trainer::{evaluate, train, LossToggles, TrainConfig};

fn hard_gen(seed: u64, fov: f64) -> SceneGenConfig {
    SceneGenConfig {
        classes: 8,
        points_per_class: 40,
        world_extent: 6.0,
        noise_sigma: 0.14,
        fov_fraction: fov,
        seed,
    }
}

fn dataset(n: usize, base_seed: u64, fov: f64) -> Vec<lidarseg_core::data::Scene> {
    (0..n)
        .map(|i| generate_scene(&hard_gen(base_seed + i as u64, fov), &format!("s{i}")).unwrap())
        .collect()
}

fn ladder() -> [(&'static str, LossToggles); 4] {
    [
        ("baseline", LossToggles::none()),
        ("+3d2d", LossToggles { use_cmd: false, use_2to3: false, use_3to2: true }),
        ("+bidir", LossToggles { use_cmd: false, use_2to3: true, use_3to2: true }),
        ("+cmd", LossToggles::default()),
    ]
}

#[test]
#[ignore]
fn explore_hard_ladder() {
    let train_scenes = dataset(5, 100, 0.9);
    let val_scenes = dataset(3, 900, 0.9);
    let epochs: usize = std::env::var("EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(12);
    let lr: f64 = std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(0.05);
    let momentum: f64 =
        std::env::var("MOM").ok().and_then(|v| v.parse().ok()).unwrap_or(0.5);
    for (name, toggles) in ladder() {
        let mut vals = Vec::new();
        for seed in 0..5u64 {
            let cfg = TrainConfig {
                epochs,
                seed,
                lr,
                momentum,
                classes: 8,
                toggles,
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            match train(&train_scenes, &cfg) {
                Ok((state, log)) => {
                    let val = evaluate(&val_scenes, &state, 1).unwrap().miou;
                    let tta = evaluate(&val_scenes, &state, 12).unwrap().miou;
                    let train_miou = log.epochs.last().unwrap().train_miou;
                    println!(
                        "  {name:9} seed {seed}: train {train_miou:.3} val {val:.4} tta {tta:.4} ({:.1}s)",
                        t0.elapsed().as_secs_f64()
                    );
                    vals.push(val);
                }
                Err(e) => {
                    println!("  {name:9} seed {seed}: {e}");
                    vals.push(f64::NAN);
                }
            }
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        println!("{name:9} median val {:.4}", vals[2]);
    }
}
