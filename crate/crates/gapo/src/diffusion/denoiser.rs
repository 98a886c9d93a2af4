//! The noise-prediction network and its exact reverse-mode gradients.
//!
//! A deliberately small MLP: input is the concatenation of the flattened
//! noised clip, a 16-dim sinusoidal embedding of the timestep, an 11-dim
//! condition encoding, and the flattened conditioning frame; two tanh hidden
//! layers of width 128; linear output predicting the noise. All gradients
//! here are hand-derived backprop, which the finite-difference tests hold to
//! account.

use serde::{Deserialize, Serialize};

use crate::diffusion::schedule::{forward_diffuse, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scenes::{identity_texture, SceneCondition};
use crate::video::{ClipShape, Frame, VideoTensor, Volume};

pub const TIME_EMBED_DIM: usize = 16;
pub const CONDITION_EMBED_DIM: usize = 11;
pub const HIDDEN_WIDTH: usize = 128;

/// Widths of the three affine layers. Serialized into checkpoints so a file
/// can be rejected when it does not match the network it is loaded into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl NetworkLayout {
    /// Layout for clips of `shape` conditioned on a same-size initial frame.
    pub fn for_clip(shape: ClipShape) -> Self {
        NetworkLayout {
            input: shape.len() + TIME_EMBED_DIM + CONDITION_EMBED_DIM + shape.pixels_per_frame(),
            hidden: HIDDEN_WIDTH,
            output: shape.len(),
        }
    }

    pub fn param_count(&self) -> usize {
        let l1 = self.hidden * self.input + self.hidden;
        let l2 = self.hidden * self.hidden + self.hidden;
        let l3 = self.output * self.hidden + self.output;
        l1 + l2 + l3
    }

    /// Offsets of (w1, b1, w2, b2, w3, b3) in the flat parameter vector.
    fn offsets(&self) -> [usize; 6] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.hidden;
        let w3 = b2 + self.hidden;
        let b3 = w3 + self.output * self.hidden;
        [w1, b1, w2, b2, w3, b3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams {
    pub layout: NetworkLayout,
    pub values: Vec<f64>,
}

impl DenoiserParams {
    pub fn zeros(layout: NetworkLayout) -> Self {
        DenoiserParams {
            layout,
            values: vec![0.0; layout.param_count()],
        }
    }

    /// Fan-in-scaled uniform weights, zero biases.
    pub fn seeded_init(layout: NetworkLayout, seed: u64) -> Self {
        let mut params = DenoiserParams::zeros(layout);
        let [w1, b1, w2, b2, w3, _] = layout.offsets();
        let mut rng = Rng::stream(seed, "denoiser-init", &[]);
        let layers = [
            (w1, b1, layout.input),
            (w2, b2, layout.hidden),
            (w3, params.values.len() - layout.output, layout.hidden),
        ];
        for (start, end, fan_in) in layers {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut params.values[start..end] {
                *v = rng.next_range(-bound, bound);
            }
        }
        params
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.layout.param_count() {
            return Err(Error::Shape(format!(
                "{} parameter values for a layout needing {}",
                self.values.len(),
                self.layout.param_count()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(())
    }
}

/// Sinusoidal position embedding of the raw timestep index.
pub fn time_embedding(t: usize) -> [f64; TIME_EMBED_DIM] {
    let mut out = [0.0; TIME_EMBED_DIM];
    for k in 0..TIME_EMBED_DIM / 2 {
        let freq = (-(k as f64) * (10_000.0f64.ln()) / (TIME_EMBED_DIM / 2) as f64).exp();
        out[2 * k] = (t as f64 * freq).sin();
        out[2 * k + 1] = (t as f64 * freq).cos();
    }
    out
}

/// Condition encoding: velocity, brightness, and the identity's fixed 8-dim
/// texture vector as the character channel.
pub fn condition_embedding(cond: &SceneCondition) -> [f64; CONDITION_EMBED_DIM] {
    let tex = identity_texture(cond.character_id);
    let mut out = [0.0; CONDITION_EMBED_DIM];
    out[0] = cond.velocity[0];
    out[1] = cond.velocity[1];
    out[2] = cond.brightness;
    out[3..].copy_from_slice(&tex);
    out
}

/// Concatenated network input for one noised clip.
pub fn build_input(x_t: &Volume, t: usize, cond: &SceneCondition, initial_frame: &Frame) -> Vec<f64> {
    let mut input =
        Vec::with_capacity(x_t.data().len() + TIME_EMBED_DIM + CONDITION_EMBED_DIM + initial_frame.data().len());
    input.extend_from_slice(x_t.data());
    input.extend_from_slice(&time_embedding(t));
    input.extend_from_slice(&condition_embedding(cond));
    input.extend_from_slice(initial_frame.data());
    input
}

fn affine(w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let n = input.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        let mut acc = b[i];
        for j in 0..n {
            acc += row[j] * input[j];
        }
        *o = acc;
    }
}

pub(crate) struct ForwardCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// Forward pass keeping the post-tanh activations needed by `backward`.
pub(crate) fn forward_cached(params: &DenoiserParams, input: Vec<f64>) -> (Vec<f64>, ForwardCache) {
    let layout = params.layout;
    debug_assert_eq!(input.len(), layout.input);
    let [w1, b1, w2, b2, w3, b3] = layout.offsets();
    let v = &params.values;

    let mut h1 = vec![0.0; layout.hidden];
    affine(&v[w1..b1], &v[b1..w2], &input, &mut h1);
    for h in &mut h1 {
        *h = h.tanh();
    }
    let mut h2 = vec![0.0; layout.hidden];
    affine(&v[w2..b2], &v[b2..w3], &h1, &mut h2);
    for h in &mut h2 {
        *h = h.tanh();
    }
    let mut out = vec![0.0; layout.output];
    affine(&v[w3..b3], &v[b3..], &h2, &mut out);
    (out, ForwardCache { input, h1, h2 })
}

pub(crate) fn forward(params: &DenoiserParams, input: Vec<f64>) -> Vec<f64> {
    forward_cached(params, input).0
}

/// Accumulate `d loss / d params` into `grad` given `d loss / d output`.
pub(crate) fn backward(
    params: &DenoiserParams,
    cache: &ForwardCache,
    grad_output: &[f64],
    grad: &mut [f64],
) {
    let layout = params.layout;
    debug_assert_eq!(grad_output.len(), layout.output);
    debug_assert_eq!(grad.len(), params.values.len());
    let [w1, b1, w2, b2, w3, b3] = layout.offsets();
    let v = &params.values;

    // Output layer (linear): delta3 = grad_output.
    let mut dh2 = vec![0.0; layout.hidden];
    for i in 0..layout.output {
        let d = grad_output[i];
        let row = &v[w3 + i * layout.hidden..w3 + (i + 1) * layout.hidden];
        let grow = &mut grad[w3 + i * layout.hidden..w3 + (i + 1) * layout.hidden];
        for j in 0..layout.hidden {
            grow[j] += d * cache.h2[j];
            dh2[j] += d * row[j];
        }
        grad[b3 + i] += d;
    }

    // Second hidden layer: delta2 = dh2 * (1 - h2^2).
    let mut dh1 = vec![0.0; layout.hidden];
    for i in 0..layout.hidden {
        let d = dh2[i] * (1.0 - cache.h2[i] * cache.h2[i]);
        let row = &v[w2 + i * layout.hidden..w2 + (i + 1) * layout.hidden];
        let grow = &mut grad[w2 + i * layout.hidden..w2 + (i + 1) * layout.hidden];
        for j in 0..layout.hidden {
            grow[j] += d * cache.h1[j];
            dh1[j] += d * row[j];
        }
        grad[b2 + i] += d;
    }

    // First hidden layer: delta1 = dh1 * (1 - h1^2); no input gradient needed.
    for i in 0..layout.hidden {
        let d = dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]);
        let row = &mut grad[w1 + i * layout.input..w1 + (i + 1) * layout.input];
        for j in 0..layout.input {
            row[j] += d * cache.input[j];
        }
        grad[b1 + i] += d;
    }
}

/// Predict the noise component of `x_t`.
pub fn denoiser_predict(
    params: &DenoiserParams,
    x_t: &Volume,
    t: usize,
    cond: &SceneCondition,
    initial_frame: &Frame,
) -> Result<Volume> {
    params.validate()?;
    let expected = NetworkLayout::for_clip(x_t.shape());
    if initial_frame.height() != x_t.shape().height || initial_frame.width() != x_t.shape().width {
        return Err(Error::Shape(format!(
            "initial frame {}x{} vs clip {}",
            initial_frame.height(),
            initial_frame.width(),
            x_t.shape()
        )));
    }
    if expected != params.layout {
        return Err(Error::Shape(format!(
            "network expects input width {}, clip shape {} needs {}",
            params.layout.input,
            x_t.shape(),
            expected.input
        )));
    }
    let out = forward(params, build_input(x_t, t, cond, initial_frame));
    Volume::from_vec(x_t.shape(), out)
}

/// One training batch for the denoising loss: per item a clean clip, its
/// condition and initial frame, a timestep, and a noise draw.
#[derive(Clone, Debug)]
pub struct DiffusionBatch {
    pub clips: Vec<VideoTensor>,
    pub conditions: Vec<SceneCondition>,
    pub initial_frames: Vec<Frame>,
    pub timesteps: Vec<usize>,
    pub noises: Vec<Volume>,
}

impl DiffusionBatch {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn validate(&self, schedule: &NoiseSchedule, layout: NetworkLayout) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = self.len();
        if [
            self.conditions.len(),
            self.initial_frames.len(),
            self.timesteps.len(),
            self.noises.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(Error::Shape("batch field lengths disagree".into()));
        }
        for i in 0..n {
            self.conditions[i].validate()?;
            if NetworkLayout::for_clip(self.clips[i].shape()) != layout {
                return Err(Error::Shape(format!(
                    "batch clip {i} shape {} does not fit the network",
                    self.clips[i].shape()
                )));
            }
            if self.noises[i].shape() != self.clips[i].shape() {
                return Err(Error::Shape(format!("batch noise {i} shape mismatch")));
            }
            if !(1..=schedule.len()).contains(&self.timesteps[i]) {
                return Err(Error::InvalidArgument(format!(
                    "batch timestep {} outside 1..={}",
                    self.timesteps[i],
                    schedule.len()
                )));
            }
        }
        Ok(())
    }
}

/// Denoising score-matching loss and its exact parameter gradient.
///
/// Per item the squared error between predicted and true noise is averaged
/// over elements; the batch loss is the mean over items.
pub fn dm_loss_and_grad(
    params: &DenoiserParams,
    batch: &DiffusionBatch,
    schedule: &NoiseSchedule,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    batch.validate(schedule, params.layout)?;
    use rayon::prelude::*;

    let per_item: Vec<(f64, Vec<f64>)> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let x_t = forward_diffuse(&batch.clips[i], batch.timesteps[i], &batch.noises[i], schedule)
                .expect("batch was validated");
            let input = build_input(&x_t, batch.timesteps[i], &batch.conditions[i], &batch.initial_frames[i]);
            let (pred, cache) = forward_cached(params, input);
            let eps = batch.noises[i].data();
            let n = pred.len() as f64;
            let mut loss = 0.0;
            let mut grad_out = vec![0.0; pred.len()];
            for j in 0..pred.len() {
                let r = pred[j] - eps[j];
                loss += r * r;
                grad_out[j] = 2.0 * r / n;
            }
            let mut grad = vec![0.0; params.values.len()];
            backward(params, &cache, &grad_out, &mut grad);
            (loss / n, grad)
        })
        .collect();

    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.values.len()];
    for (item_loss, item_grad) in &per_item {
        loss += item_loss * scale;
        for (g, ig) in grad.iter_mut().zip(item_grad) {
            *g += ig * scale;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("denoising loss".into()));
    }
    Ok((loss, grad))
}
