//! The variance-preserving noise schedule, forward noising, and what the
//! denoising loss sees at each step.

use gapo::diffusion::{
    dm_loss_and_grad, forward_diffuse, DenoiserParams, DiffusionBatch, NetworkLayout,
    NoiseSchedule, ScheduleKind,
};
use gapo::rng::Rng;
use gapo::scenes::generate_scene;
use gapo::video::Volume;

fn main() -> gapo::Result<()> {
    let schedule = NoiseSchedule::build(8, ScheduleKind::Cosine)?;
    println!("t  alpha      sigma      alpha^2+sigma^2");
    for t in 1..=schedule.len() {
        let (a, s) = (schedule.alpha(t), schedule.sigma(t));
        println!("{t}  {a:.6}  {s:.6}  {:.12}", a * a + s * s);
    }

    let scene = generate_scene(99);
    let shape = scene.gt_video.shape();
    let mut rng = Rng::stream(1, "example-noise", &[]);
    let mut noise = vec![0.0; shape.len()];
    rng.fill_normal(&mut noise);
    let eps = Volume::from_vec(shape, noise)?;

    // Early timesteps barely perturb the clip; late ones bury it.
    println!("\nt  mean |x_t - x_0|");
    for t in [1, schedule.len() / 2, schedule.len()] {
        let x_t = forward_diffuse(&scene.gt_video, t, &eps, &schedule)?;
        let drift: f64 = x_t
            .data()
            .iter()
            .zip(scene.gt_video.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / shape.len() as f64;
        println!("{t}  {drift:.4}");
    }

    // A fresh random denoiser predicts noise badly; the loss for a standard
    // normal target sits near 1 by construction.
    let layout = NetworkLayout::for_clip(shape);
    println!(
        "\ndenoiser: {} -> {} -> {} -> {} ({} parameters)",
        layout.input,
        layout.hidden,
        layout.hidden,
        layout.output,
        layout.param_count()
    );
    let params = DenoiserParams::seeded_init(layout, 5);
    let batch = DiffusionBatch {
        clips: vec![scene.gt_video.clone()],
        conditions: vec![scene.condition],
        initial_frames: vec![scene.initial_frame.clone()],
        timesteps: vec![schedule.len() / 2],
        noises: vec![eps],
    };
    let (loss, grad) = dm_loss_and_grad(&params, &batch, &schedule)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("untrained denoising loss {loss:.4}, gradient norm {grad_norm:.4}");
    Ok(())
}
