//! Synthetic moving-blob scenes and the analytic oracle score.
//!
//! A scene is a textured Gaussian blob drifting at constant velocity over a
//! fixed diagonal background gradient. Everything about a scene — condition,
//! start position, rendered clip — is a pure function of its seed, so clips
//! never need to be stored to be trusted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::video::{quantize_f32, ClipShape, Frame, VideoTensor};

/// Desk-scale clip geometry used by every scene in the lab.
pub const CLIP_SHAPE: ClipShape = ClipShape::new(8, 16, 16);

pub const IDENTITY_COUNT: usize = 16;

/// Radial falloff scale of the blob, in pixels.
const BLOB_SIGMA: f64 = 2.0;
/// Radius of the flat core held at exactly `brightness`.
const PLATEAU_RADIUS: f64 = 1.0;
/// Strength of per-identity ring modulation on the blob skirt.
const TEXTURE_AMPLITUDE: f64 = 0.25;

const BG_BASE: f64 = 0.10;
const BG_SPAN: f64 = 0.15;

/// Scenes are sampled with speeds below the full condition range and with a
/// start box that keeps the blob this far from every border for the whole
/// trajectory, so ground-truth motion is measurable without clipping.
const SAMPLED_SPEED: f64 = 1.2;
const BORDER_MARGIN: f64 = 3.2;

/// Background gradient, brightening toward the bottom-right corner.
pub fn background_value(y: usize, x: usize, height: usize, width: usize) -> f64 {
    let denom = (height + width).saturating_sub(2);
    if denom == 0 {
        return BG_BASE;
    }
    BG_BASE + BG_SPAN * (x + y) as f64 / denom as f64
}

/// Fixed 8-dim texture vector for an identity, components in [-1, 1].
/// These are frozen constants of the lab (derived from a fixed stream), not
/// per-run randomness.
pub fn identity_texture(id: u8) -> [f64; 8] {
    let mut rng = Rng::stream(0x1d_7e_c5_0d, "identity-texture", &[id as u64]);
    let mut tex = [0.0; 8];
    for v in &mut tex {
        *v = rng.next_range(-1.0, 1.0);
    }
    tex
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneCondition {
    /// Blob velocity in pixels/frame, `[vx, vy]` with x = column, y = row.
    pub velocity: [f64; 2],
    /// Peak blob value; the blob core is held at exactly this value.
    pub brightness: f64,
    pub character_id: u8,
}

impl SceneCondition {
    pub fn validate(&self) -> Result<()> {
        for (axis, v) in ["vx", "vy"].iter().zip(self.velocity) {
            if !v.is_finite() || !(-2.0..=2.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "velocity {axis}={v} outside [-2, 2]"
                )));
            }
        }
        if !self.brightness.is_finite() || !(0.5..=1.0).contains(&self.brightness) {
            return Err(Error::InvalidArgument(format!(
                "brightness {} outside [0.5, 1]",
                self.brightness
            )));
        }
        if self.character_id as usize >= IDENTITY_COUNT {
            return Err(Error::InvalidArgument(format!(
                "character_id {} outside [0, {}]",
                self.character_id,
                IDENTITY_COUNT - 1
            )));
        }
        Ok(())
    }
}

/// Blob intensity at distance `r` from the center, before compositing.
fn blob_profile(r: f64, brightness: f64, texture: &[f64; 8]) -> f64 {
    if r <= PLATEAU_RADIUS {
        return brightness;
    }
    let decay = (-(r * r - PLATEAU_RADIUS * PLATEAU_RADIUS) / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp();
    let ring = (r.floor() as usize).min(7);
    let modulation = 1.0 + TEXTURE_AMPLITUDE * texture[ring];
    (brightness * decay * modulation).min(brightness)
}

/// Render one frame with the blob centered at `center` = [cx, cy].
pub fn render_frame(center: [f64; 2], cond: &SceneCondition, height: usize, width: usize) -> Frame {
    let texture = identity_texture(cond.character_id);
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let bg = background_value(y, x, height, width);
            let dx = x as f64 - center[0];
            let dy = y as f64 - center[1];
            let blob = blob_profile((dx * dx + dy * dy).sqrt(), cond.brightness, &texture);
            data.push(quantize_f32(bg.max(blob).clamp(0.0, 1.0)));
        }
    }
    Frame::new(height, width, data).expect("rendered data matches requested shape")
}

/// Render the full clip for a condition and start position. Centers that
/// would leave the frame are clamped to its bounds.
pub fn render_scene(cond: &SceneCondition, start: [f64; 2]) -> Result<VideoTensor> {
    cond.validate()?;
    let ClipShape {
        frames,
        height,
        width,
    } = CLIP_SHAPE;
    let mut data = Vec::with_capacity(CLIP_SHAPE.len());
    for f in 0..frames {
        let center = [
            (start[0] + cond.velocity[0] * f as f64).clamp(0.0, (width - 1) as f64),
            (start[1] + cond.velocity[1] * f as f64).clamp(0.0, (height - 1) as f64),
        ];
        data.extend_from_slice(render_frame(center, cond, height, width).data());
    }
    VideoTensor::new(CLIP_SHAPE, data)
}

/// Canonical centered rendering of one identity at mid brightness; the
/// reference image that identity features are extracted from.
pub fn canonical_identity_frame(id: u8) -> Frame {
    let cond = SceneCondition {
        velocity: [0.0, 0.0],
        brightness: 0.75,
        character_id: id,
    };
    let h = CLIP_SHAPE.height;
    let w = CLIP_SHAPE.width;
    render_frame([(w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0], &cond, h, w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneInstance {
    pub seed: u64,
    pub condition: SceneCondition,
    pub start: [f64; 2],
    pub gt_video: VideoTensor,
    pub initial_frame: Frame,
}

/// Deterministically generate a scene from its seed.
pub fn generate_scene(seed: u64) -> SceneInstance {
    let mut cond_rng = Rng::stream(seed, "scene-condition", &[]);
    let velocity = [
        cond_rng.next_range(-SAMPLED_SPEED, SAMPLED_SPEED),
        cond_rng.next_range(-SAMPLED_SPEED, SAMPLED_SPEED),
    ];
    let brightness = cond_rng.next_range(0.5, 1.0);
    let character_id = cond_rng.next_below(IDENTITY_COUNT as u64) as u8;
    let condition = SceneCondition {
        velocity,
        brightness,
        character_id,
    };

    let travel = (CLIP_SHAPE.frames - 1) as f64;
    let mut start_rng = Rng::stream(seed, "scene-start", &[]);
    let mut axis_start = |v: f64, extent: usize| {
        let lo = BORDER_MARGIN + (-v).max(0.0) * travel;
        let hi = (extent - 1) as f64 - BORDER_MARGIN - v.max(0.0) * travel;
        debug_assert!(lo <= hi, "sampled speed leaves no feasible start");
        start_rng.next_range(lo, hi)
    };
    let start = [
        axis_start(velocity[0], CLIP_SHAPE.width),
        axis_start(velocity[1], CLIP_SHAPE.height),
    ];

    let gt_video = render_scene(&condition, start).expect("sampled conditions are always valid");
    let initial_frame = gt_video.first_frame();
    SceneInstance {
        seed,
        condition,
        start,
        gt_video,
        initial_frame,
    }
}

/// Per-scene seed for index `i` of a dataset rooted at `dataset_seed`.
pub fn scene_seed(dataset_seed: u64, index: u64) -> u64 {
    Rng::stream(dataset_seed, "scene-seed", &[index]).next_u64()
}

/// Held-out evaluation scenes draw from a stream disjoint from training's.
pub fn holdout_seed(dataset_seed: u64, index: u64) -> u64 {
    Rng::stream(dataset_seed, "holdout-seed", &[index]).next_u64()
}

/// Intensity threshold above background under which a pixel is ignored by
/// the oracle's centroid tracker.
const ORACLE_WEIGHT_OFFSET: f64 = 0.05;

/// Rough blob position: centroid of squared above-background excess.
/// None if the frame carries no mass.
fn rough_centroid(frame: &[f64], height: usize, width: usize) -> Option<[f64; 2]> {
    let mut wsum = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for y in 0..height {
        for x in 0..width {
            let w = (frame[y * width + x]
                - background_value(y, x, height, width)
                - ORACLE_WEIGHT_OFFSET)
                .max(0.0)
                .powi(2);
            wsum += w;
            cx += w * x as f64;
            cy += w * y as f64;
        }
    }
    if wsum <= 1e-9 {
        return None;
    }
    Some([cx / wsum, cy / wsum])
}

fn template_ssd(frame: &Frame, cond: &SceneCondition, center: [f64; 2]) -> f64 {
    let rendered = render_frame(center, cond, frame.height(), frame.width());
    frame
        .data()
        .iter()
        .zip(rendered.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Sub-pixel blob position by fitting the known rendered template: walk a
/// 3x3 SSD stencil from the rough centroid, shrinking the step and refining
/// parabolically whenever the center cell wins. A plain centroid is biased
/// by lattice aliasing of the blob's hard texture rings; the template fit is
/// exact (to refinement precision) on clean renders.
fn fit_blob_center(frame: &Frame, cond: &SceneCondition, rough: [f64; 2]) -> [f64; 2] {
    let mut c = [
        rough[0].clamp(0.0, (frame.width() - 1) as f64),
        rough[1].clamp(0.0, (frame.height() - 1) as f64),
    ];
    let mut step = 0.5;
    for _ in 0..10 {
        let mut s = [[0.0; 3]; 3];
        for (i, row) in s.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = template_ssd(
                    frame,
                    cond,
                    [
                        c[0] + (j as f64 - 1.0) * step,
                        c[1] + (i as f64 - 1.0) * step,
                    ],
                );
            }
        }
        let (mut bi, mut bj) = (1, 1);
        for i in 0..3 {
            for j in 0..3 {
                if s[i][j] < s[bi][bj] {
                    (bi, bj) = (i, j);
                }
            }
        }
        c[0] += (bj as f64 - 1.0) * step;
        c[1] += (bi as f64 - 1.0) * step;
        if (bi, bj) == (1, 1) {
            let refine = |lo: f64, mid: f64, hi: f64| -> f64 {
                let denom = lo - 2.0 * mid + hi;
                if denom > 1e-18 {
                    (0.5 * (lo - hi) / denom * step).clamp(-step, step)
                } else {
                    0.0
                }
            };
            c[0] += refine(s[1][0], s[1][1], s[1][2]);
            c[1] += refine(s[0][1], s[1][1], s[2][1]);
            step *= 0.25;
            if step < 1e-4 {
                break;
            }
        }
    }
    c
}

/// Per-frame sub-pixel blob positions (None where untrackable).
fn oracle_positions(video: &VideoTensor, cond: &SceneCondition) -> Vec<Option<[f64; 2]>> {
    let shape = video.shape();
    (0..shape.frames)
        .map(|f| {
            let frame = Frame::new(shape.height, shape.width, video.frame(f).to_vec())
                .expect("frame slice matches clip shape");
            rough_centroid(frame.data(), shape.height, shape.width)
                .map(|rough| fit_blob_center(&frame, cond, rough))
        })
        .collect()
}

/// Mean frame-to-frame displacement of the fitted blob position; [0, 0]
/// when fewer than two consecutive frames are trackable.
pub fn oracle_mean_velocity(video: &VideoTensor, cond: &SceneCondition) -> [f64; 2] {
    let positions = oracle_positions(video, cond);
    let mut count = 0.0;
    let mut sum = [0.0, 0.0];
    for pair in positions.windows(2) {
        if let (Some(a), Some(b)) = (pair[0], pair[1]) {
            sum[0] += b[0] - a[0];
            sum[1] += b[1] - a[1];
            count += 1.0;
        }
    }
    if count == 0.0 {
        [0.0, 0.0]
    } else {
        [sum[0] / count, sum[1] / count]
    }
}

/// Mean squared second temporal difference over all pixels.
pub fn second_difference_energy(video: &VideoTensor) -> Result<f64> {
    let shape = video.shape();
    if shape.frames < 3 {
        return Err(Error::InvalidArgument(format!(
            "second differences need at least 3 frames, got {}",
            shape.frames
        )));
    }
    let n = shape.pixels_per_frame();
    let data = video.data();
    let mut sum = 0.0;
    for f in 1..shape.frames - 1 {
        let (prev, cur, next) = (
            &data[(f - 1) * n..f * n],
            &data[f * n..(f + 1) * n],
            &data[(f + 1) * n..(f + 2) * n],
        );
        for i in 0..n {
            let d = next[i] - 2.0 * cur[i] + prev[i];
            sum += d * d;
        }
    }
    Ok(sum / ((shape.frames - 2) * n) as f64)
}

/// Ground-truth quality score in [0, 1]: how well a clip realizes its scene.
///
/// 0.4·motion-match + 0.3·temporal-smoothness + 0.3·pixel-fidelity, each
/// factor exp(−error). Intentionally disjoint in structure from the learned
/// judge's six dimensions.
pub fn oracle_reward(video: &VideoTensor, scene: &SceneInstance) -> Result<f64> {
    if video.shape() != scene.gt_video.shape() {
        return Err(Error::Shape(format!(
            "clip {} vs scene ground truth {}",
            video.shape(),
            scene.gt_video.shape()
        )));
    }
    let v = oracle_mean_velocity(video, &scene.condition);
    let dv = [
        v[0] - scene.condition.velocity[0],
        v[1] - scene.condition.velocity[1],
    ];
    let motion = (-(dv[0] * dv[0] + dv[1] * dv[1]).sqrt()).exp();

    let smooth = (-second_difference_energy(video)?).exp();

    let mse = video
        .data()
        .iter()
        .zip(scene.gt_video.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / video.data().len() as f64;
    let fidelity = (-mse).exp();

    Ok(0.4 * motion + 0.3 * smooth + 0.3 * fidelity)
}
