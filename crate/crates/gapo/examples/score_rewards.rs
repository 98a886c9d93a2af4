//! Six-dimension reward scoring: a clean ground-truth clip against
//! deliberately corrupted variants, under several weighting strategies.

use gapo::reward::{aggregate_reward, score_clip, WeightStrategy};
use gapo::rng::Rng;
use gapo::scenes::generate_scene;
use gapo::video::{VideoTensor, Volume};

fn main() -> gapo::Result<()> {
    let scene = generate_scene(12);
    let shape = scene.gt_video.shape();
    let strategy = WeightStrategy::uniform();

    // Variant 1: per-pixel noise wrecks smoothness and appeal.
    let mut rng = Rng::stream(3, "corruption", &[]);
    let noisy: Vec<f64> = scene
        .gt_video
        .data()
        .iter()
        .map(|v| v + 0.25 * rng.next_normal())
        .collect();
    let noisy = VideoTensor::quantize_clamped(Volume::from_vec(shape, noisy)?)?;

    // Variant 2: freeze every frame to the first — motion dies, the rest
    // barely notice.
    let first = scene.gt_video.frame(0).to_vec();
    let frozen: Vec<f64> = (0..shape.frames).flat_map(|_| first.clone()).collect();
    let frozen = VideoTensor::new(shape, frozen)?;

    println!("clip     smooth  motion  appeal  text    image   charac  aggregate");
    for (name, clip) in [
        ("gt", &scene.gt_video),
        ("noisy", &noisy),
        ("frozen", &frozen),
    ] {
        let r = score_clip(clip, &scene.condition, &scene.initial_frame, &strategy)?;
        println!(
            "{name:<8} {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
            r.smooth,
            r.motion,
            r.appeal,
            r.text_consistency,
            r.image_consistency,
            r.character_consistency,
            r.aggregate
        );
    }

    // Raw score vectors re-aggregate under any weighting without rescoring.
    let raw = score_clip(&noisy, &scene.condition, &scene.initial_frame, &strategy)?;
    println!("\nnoisy clip under each weighting strategy:");
    for strategy in WeightStrategy::ablation_grid() {
        let r = aggregate_reward(raw.scores(), &strategy)?;
        println!("  {:<12} aggregate {:.4}", strategy.name(), r.aggregate);
    }
    Ok(())
}
