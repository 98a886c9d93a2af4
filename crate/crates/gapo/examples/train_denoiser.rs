//! Pretrain the denoiser for a short burst, watch the loss fall, and
//! round-trip the result through the checkpoint format.

use gapo::diffusion::{NoiseSchedule, ScheduleKind};
use gapo::scenes::{generate_scene, scene_seed};
use gapo::trainer::{load_checkpoint, pretrain, save_checkpoint, TrainConfig};

fn main() -> gapo::Result<()> {
    let scenes: Vec<_> = (0..8).map(|i| generate_scene(scene_seed(3, i))).collect();
    let schedule = NoiseSchedule::build(8, ScheduleKind::Cosine)?;

    let mut config = TrainConfig::pretrain_default(42);
    config.steps = 250;
    config.batch_size = 4;

    let outcome = pretrain(&config, &scenes, &schedule, None)?;
    // Single-step losses bounce with the random timestep draw; compare
    // window means.
    let window = 25;
    let mean = |rows: &[gapo::trainer::MetricsRow]| {
        rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64
    };
    let first = mean(&outcome.metrics[..window]);
    let last = mean(&outcome.metrics[outcome.metrics.len() - window..]);
    println!(
        "denoising loss: first {window} steps mean {first:.4}, last {window} steps mean {last:.4}"
    );
    assert!(last < first);

    let path = std::env::temp_dir().join("gapo_example_denoiser.gapo");
    save_checkpoint(&outcome.params, &path)?;
    let reloaded = load_checkpoint(&path)?;
    assert_eq!(reloaded.values, outcome.params.values);
    println!(
        "checkpoint round-trip OK ({} parameters): {}",
        reloaded.values.len(),
        path.display()
    );
    Ok(())
}
