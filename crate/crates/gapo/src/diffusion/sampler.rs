//! Ancestral sampling with the trained noise predictor.
//!
//! Works directly in the cumulative (alpha_t, sigma_t) parameterization:
//! with `a_t = alpha_t^2` and per-step ratio `r_t = a_t / a_{t-1}`, the
//! reverse transition for `t > 1` is Gaussian with
//!
//! ```text
//! mean = sqrt(r_t) * sigma_{t-1}^2 / sigma_t^2 * x_t
//!      + alpha_{t-1} * (1 - r_t) / sigma_t^2 * x0_hat
//! var  = (1 - r_t) * sigma_{t-1}^2 / sigma_t^2
//! ```
//!
//! where `x0_hat = (x_t - sigma_t * eps_hat) / alpha_t`, clamped to [0, 1]
//! before entering the mean. The clamp keeps the reverse process bounded
//! when the predictor is imperfect (at high noise levels the raw estimate
//! scales like x_t / alpha_t); without it, prediction error compounds
//! multiplicatively across steps. The final step maps straight to `x0_hat`,
//! then the clip is clamped to [0, 1] and quantized.

use crate::diffusion::denoiser::{build_input, forward, DenoiserParams, NetworkLayout};
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scenes::SceneCondition;
use crate::video::{ClipShape, Frame, VideoTensor, Volume};

/// Generate one clip. Deterministic in every argument, including `seed`.
pub fn sample(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    cond: &SceneCondition,
    initial_frame: &Frame,
    seed: u64,
) -> Result<VideoTensor> {
    params.validate()?;
    cond.validate()?;
    let pixels = initial_frame.height() * initial_frame.width();
    if pixels == 0 || params.layout.output % pixels != 0 {
        return Err(Error::Shape(format!(
            "initial frame {}x{} does not divide network output {}",
            initial_frame.height(),
            initial_frame.width(),
            params.layout.output
        )));
    }
    let shape = ClipShape::new(
        params.layout.output / pixels,
        initial_frame.height(),
        initial_frame.width(),
    );
    if shape.frames < 2 || NetworkLayout::for_clip(shape) != params.layout {
        return Err(Error::Shape(format!(
            "network layout does not describe a clip over {}x{} frames",
            initial_frame.height(),
            initial_frame.width()
        )));
    }

    let t_count = schedule.len();
    let mut x = Volume::zeros(shape);
    Rng::stream(seed, "sample-init", &[]).fill_normal(x.data_mut());

    for t in (1..=t_count).rev() {
        let a = schedule.alpha(t);
        let s = schedule.sigma(t);
        let eps_hat = forward(params, build_input(&x, t, cond, initial_frame));
        let x0_hat: Vec<f64> = x
            .data()
            .iter()
            .zip(&eps_hat)
            .map(|(xt, e)| ((xt - s * e) / a).clamp(0.0, 1.0))
            .collect();
        if t == 1 {
            x = Volume::from_vec(shape, x0_hat)?;
            break;
        }
        let a_prev = schedule.alpha(t - 1);
        let s_prev = schedule.sigma(t - 1);
        let ratio = (a * a) / (a_prev * a_prev);
        let keep = ratio.sqrt() * (s_prev * s_prev) / (s * s);
        let inject = a_prev * (1.0 - ratio) / (s * s);
        let noise_scale = ((1.0 - ratio) * (s_prev * s_prev) / (s * s)).sqrt();

        let mut step_rng = Rng::stream(seed, "sample-step", &[t as u64]);
        let data = x.data_mut();
        for (i, x0) in x0_hat.iter().enumerate() {
            data[i] = keep * data[i] + inject * x0 + noise_scale * step_rng.next_normal();
        }
    }

    VideoTensor::quantize_clamped(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleKind;

    fn fixture() -> (DenoiserParams, NoiseSchedule, SceneCondition, Frame) {
        let shape = ClipShape::new(2, 4, 4);
        let params = DenoiserParams::seeded_init(NetworkLayout::for_clip(shape), 7);
        let schedule = NoiseSchedule::build(6, ScheduleKind::Cosine).unwrap();
        let cond = SceneCondition {
            velocity: [0.5, -0.25],
            brightness: 0.8,
            character_id: 4,
        };
        let frame = Frame::new(4, 4, vec![0.2; 16]).unwrap();
        (params, schedule, cond, frame)
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let (params, schedule, cond, frame) = fixture();
        let a = sample(&params, &schedule, &cond, &frame, 11).unwrap();
        let b = sample(&params, &schedule, &cond, &frame, 11).unwrap();
        assert_eq!(a, b);
        let c = sample(&params, &schedule, &cond, &frame, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_are_valid_clips() {
        let (params, schedule, cond, frame) = fixture();
        for seed in 0..5 {
            let clip = sample(&params, &schedule, &cond, &frame, seed).unwrap();
            assert_eq!(clip.shape(), ClipShape::new(2, 4, 4));
            assert!(clip.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn rejects_frame_not_matching_network() {
        let (params, schedule, cond, _) = fixture();
        let frame = Frame::new(3, 4, vec![0.2; 12]).unwrap();
        assert!(sample(&params, &schedule, &cond, &frame, 0).is_err());
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let (mut params, schedule, cond, frame) = fixture();
        params.values[10] = f64::NAN;
        assert!(matches!(
            sample(&params, &schedule, &cond, &frame, 0),
            Err(Error::NonFinite(_))
        ));
    }
}
