//! Finite-difference verification of the three analytic gradients: the
//! denoising loss, plain preference optimization, and the gap-aware
//! variant. Runs on a shrunken network so central differences stay fast.

use gapo::diffusion::{DiffusionBatch, DenoiserParams, NetworkLayout, NoiseSchedule, ScheduleKind};
use gapo::diffusion::dm_loss_and_grad;
use gapo::losses::{dpo_loss_and_grad, gapo_loss_and_grad, GapoConfig, PreferencePair};
use gapo::rng::Rng;
use gapo::video::{ClipShape, VideoTensor, Volume};

const SHAPE: ClipShape = ClipShape::new(2, 4, 4);

fn random_clip(rng: &mut Rng) -> VideoTensor {
    let data: Vec<f64> = (0..SHAPE.len()).map(|_| rng.next_f64()).collect();
    VideoTensor::new(SHAPE, data).unwrap()
}

fn check(name: &str, params: &DenoiserParams, grad: &[f64], loss_at: impl Fn(&DenoiserParams) -> f64) {
    let h = 1e-5;
    let mut rng = Rng::stream(17, "probe-coords", &[]);
    let mut worst = 0.0f64;
    for _ in 0..12 {
        let i = rng.next_below(params.values.len() as u64) as usize;
        let mut plus = params.clone();
        plus.values[i] += h;
        let mut minus = params.clone();
        minus.values[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let rel = (numeric - grad[i]).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    println!("{name:<22} worst relative error over 12 coordinates: {worst:.2e}");
    assert!(worst < 1e-4, "{name} gradient mismatch");
}

fn main() -> gapo::Result<()> {
    let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine)?;
    let layout = NetworkLayout::for_clip(SHAPE);
    let params = DenoiserParams::seeded_init(layout, 3);
    let mut rng = Rng::stream(8, "gradient-check", &[]);

    let condition = gapo::scenes::generate_scene(21).condition;
    let clip = random_clip(&mut rng);
    let initial_frame = clip.first_frame();

    let mut noise = vec![0.0; SHAPE.len()];
    rng.fill_normal(&mut noise);
    let batch = DiffusionBatch {
        clips: vec![clip.clone()],
        conditions: vec![condition],
        initial_frames: vec![initial_frame.clone()],
        timesteps: vec![2],
        noises: vec![Volume::from_vec(SHAPE, noise)?],
    };
    let (_, grad) = dm_loss_and_grad(&params, &batch, &schedule)?;
    check("denoising", &params, &grad, |p| {
        dm_loss_and_grad(p, &batch, &schedule).unwrap().0
    });

    let pair = PreferencePair {
        condition,
        initial_frame,
        winner: random_clip(&mut rng),
        loser: random_clip(&mut rng),
        winner_reward: 0.8,
        loser_reward: 0.3,
    };
    let reference = DenoiserParams::seeded_init(layout, 4);
    let config = GapoConfig {
        beta: 5.0,
        alpha: 2.0,
        ..GapoConfig::default()
    };

    let (_, grad) = dpo_loss_and_grad(&params, &reference, &pair, &schedule, &config, 11)?;
    check("preference", &params, &grad, |p| {
        dpo_loss_and_grad(p, &reference, &pair, &schedule, &config, 11)
            .unwrap()
            .0
    });

    let (_, grad) = gapo_loss_and_grad(&params, &reference, &pair, &schedule, &config, 11)?;
    check("gap-aware preference", &params, &grad, |p| {
        gapo_loss_and_grad(p, &reference, &pair, &schedule, &config, 11)
            .unwrap()
            .0
    });

    println!("all analytic gradients match central differences");
    Ok(())
}
