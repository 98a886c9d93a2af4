//! Preference losses over clip pairs: the plain diffusion preference loss
//! and its gap-aware variant.
//!
//! For a pair (winner w, loser l), one shared timestep t and per-branch
//! noise draws, the inner argument is
//!
//! ```text
//! delta = [|e_w - f(x_w_t)|^2 - |e_w - f_ref(x_w_t)|^2]
//!       - [|e_l - f(x_l_t)|^2 - |e_l - f_ref(x_l_t)|^2]
//! ```
//!
//! with per-element-mean squared errors, and the loss is
//! `softplus(beta * T * omega * delta)` with `omega = 1`. The gap-aware loss
//! multiplies loss and gradient by the constant reward-gain gap
//! `alpha^r_w - alpha^r_l`. Gradients flow only through the two policy
//! evaluations; the reference network and the gap factor are constants.
//!
//! Each branch's noise stream is keyed by (seed, clip content hash), so the
//! draws are deterministic per (pair, seed) and swapping the two clips
//! exactly negates `delta`.

use serde::{Deserialize, Serialize};

use crate::diffusion::denoiser::{
    backward, build_input, forward, forward_cached, DenoiserParams, ForwardCache,
};
use crate::diffusion::schedule::{forward_diffuse, NoiseSchedule};
use crate::error::{Error, Result};
use crate::rng::{content_hash, Rng};
use crate::scenes::SceneCondition;
use crate::video::{Frame, VideoTensor, Volume};

/// One preference example: two clips of the same scene with their judged
/// rewards, winner first.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferencePair {
    pub condition: SceneCondition,
    pub initial_frame: Frame,
    pub winner: VideoTensor,
    pub loser: VideoTensor,
    pub winner_reward: f64,
    pub loser_reward: f64,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<()> {
        self.condition.validate()?;
        if self.winner.shape() != self.loser.shape() {
            return Err(Error::Shape(format!(
                "winner {} vs loser {}",
                self.winner.shape(),
                self.loser.shape()
            )));
        }
        if self.initial_frame.height() != self.winner.shape().height
            || self.initial_frame.width() != self.winner.shape().width
        {
            return Err(Error::Shape(format!(
                "initial frame {}x{} vs clips {}",
                self.initial_frame.height(),
                self.initial_frame.width(),
                self.winner.shape()
            )));
        }
        for (name, r) in [
            ("winner_reward", self.winner_reward),
            ("loser_reward", self.loser_reward),
        ] {
            if !r.is_finite() || !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "{name} {r} outside [0, 1]"
                )));
            }
        }
        if self.winner_reward < self.loser_reward {
            return Err(Error::InvalidArgument(format!(
                "winner reward {} below loser reward {}",
                self.winner_reward, self.loser_reward
            )));
        }
        Ok(())
    }

    /// The same pair with the two clips exchanged (rewards untouched); the
    /// inner loss argument is exactly negated for the swapped pair.
    pub fn clips_swapped(&self) -> PreferencePair {
        PreferencePair {
            condition: self.condition,
            initial_frame: self.initial_frame.clone(),
            winner: self.loser.clone(),
            loser: self.winner.clone(),
            winner_reward: self.winner_reward,
            loser_reward: self.loser_reward,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// Timestep weighting fixed to 1 regardless of the signal-to-noise ratio.
    #[default]
    ConstantOne,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepRule {
    /// One timestep drawn uniformly from 1..=T, shared by both branches.
    #[default]
    UniformShared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapoConfig {
    /// Preference temperature; the loss argument is scaled by `beta * T`.
    pub beta: f64,
    /// Base of the reward-gain exponential; must exceed 1.
    pub alpha: f64,
    pub omega_mode: OmegaMode,
    pub timestep_rule: TimestepRule,
}

impl Default for GapoConfig {
    fn default() -> Self {
        GapoConfig {
            beta: 500.0,
            alpha: 2.0,
            omega_mode: OmegaMode::ConstantOne,
            timestep_rule: TimestepRule::UniformShared,
        }
    }
}

impl GapoConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::Config(format!("beta {} must be positive", self.beta)));
        }
        if !self.alpha.is_finite() || self.alpha <= 1.0 {
            return Err(Error::Config(format!(
                "alpha {} must exceed 1",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bradley-Terry preference probability `sigmoid(r_w - r_l)`.
pub fn bt_probability(r_w: f64, r_l: f64) -> f64 {
    sigmoid(r_w - r_l)
}

/// Exponential reward gain `alpha^r` for a normalized reward in [0, 1].
pub fn reward_gain(r: f64, alpha: f64) -> Result<f64> {
    if !(1.0 < alpha && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must exceed 1")));
    }
    if !r.is_finite() || !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "normalized reward {r} outside [0, 1]"
        )));
    }
    Ok(alpha.powf(r))
}

/// Gain gap `alpha^r_w - alpha^r_l`, in [0, alpha - 1] for a valid pair.
pub fn gap_factor(pair: &PreferencePair, alpha: f64) -> Result<f64> {
    pair.validate()?;
    Ok(reward_gain(pair.winner_reward, alpha)? - reward_gain(pair.loser_reward, alpha)?)
}

struct BranchEval {
    policy_err: f64,
    reference_err: f64,
    policy_grad_seed: Vec<f64>, // 2 * (pred - eps) / n
    cache: ForwardCache,
}

fn eval_branch(
    policy: &DenoiserParams,
    reference: &DenoiserParams,
    clip: &VideoTensor,
    cond: &SceneCondition,
    initial_frame: &Frame,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<BranchEval> {
    let mut eps = Volume::zeros(clip.shape());
    Rng::stream(seed, "preference-noise", &[content_hash(clip.data())])
        .fill_normal(eps.data_mut());
    let x_t = forward_diffuse(clip, t, &eps, schedule)?;
    let input = build_input(&x_t, t, cond, initial_frame);

    let (policy_pred, cache) = forward_cached(policy, input.clone());
    let reference_pred = forward(reference, input);

    let n = policy_pred.len() as f64;
    let mut policy_err = 0.0;
    let mut reference_err = 0.0;
    let mut policy_grad_seed = vec![0.0; policy_pred.len()];
    for j in 0..policy_pred.len() {
        let e = eps.data()[j];
        let rp = policy_pred[j] - e;
        let rr = reference_pred[j] - e;
        policy_err += rp * rp;
        reference_err += rr * rr;
        policy_grad_seed[j] = 2.0 * rp / n;
    }
    policy_err /= n;
    reference_err /= n;
    if !policy_err.is_finite() || !reference_err.is_finite() {
        return Err(Error::NonFinite("preference branch error".into()));
    }
    Ok(BranchEval {
        policy_err,
        reference_err,
        policy_grad_seed,
        cache,
    })
}

/// Everything one preference evaluation produces: the (possibly gap-scaled)
/// loss and policy gradient, plus the raw inner argument `u` and the scale
/// that was applied (1 for the plain loss, the gain gap for the gap-aware
/// one).
#[derive(Clone, Debug)]
pub struct PreferenceEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub argument: f64,
    pub scale: f64,
}

fn preference_core(
    policy: &DenoiserParams,
    reference: &DenoiserParams,
    pair: &PreferencePair,
    schedule: &NoiseSchedule,
    config: &GapoConfig,
    seed: u64,
    scale: f64,
) -> Result<PreferenceEval> {
    policy.validate()?;
    reference.validate()?;
    config.validate()?;
    pair.validate()?;
    if policy.layout != reference.layout {
        return Err(Error::Shape("policy and reference layouts differ".into()));
    }
    if crate::diffusion::NetworkLayout::for_clip(pair.winner.shape()) != policy.layout {
        return Err(Error::Shape(format!(
            "pair clips {} do not fit the network",
            pair.winner.shape()
        )));
    }

    let t_count = schedule.len();
    let TimestepRule::UniformShared = config.timestep_rule;
    let t = 1 + Rng::stream(seed, "preference-timestep", &[]).next_below(t_count as u64) as usize;

    let w = eval_branch(
        policy,
        reference,
        &pair.winner,
        &pair.condition,
        &pair.initial_frame,
        t,
        schedule,
        seed,
    )?;
    let l = eval_branch(
        policy,
        reference,
        &pair.loser,
        &pair.condition,
        &pair.initial_frame,
        t,
        schedule,
        seed,
    )?;

    let delta = (w.policy_err - w.reference_err) - (l.policy_err - l.reference_err);
    let OmegaMode::ConstantOne = config.omega_mode;
    let omega = 1.0;
    let u = config.beta * t_count as f64 * omega * delta;
    if !u.is_finite() {
        return Err(Error::NonFinite("preference loss argument".into()));
    }
    let loss = scale * softplus(u);

    // d loss / d delta, times the constant prefactor.
    let s = scale * sigmoid(u) * config.beta * t_count as f64 * omega;
    let mut grad = vec![0.0; policy.values.len()];
    let mut grad_out_w = w.policy_grad_seed;
    for g in &mut grad_out_w {
        *g *= s;
    }
    backward(policy, &w.cache, &grad_out_w, &mut grad);
    let mut grad_out_l = l.policy_grad_seed;
    for g in &mut grad_out_l {
        *g *= -s;
    }
    backward(policy, &l.cache, &grad_out_l, &mut grad);

    if !loss.is_finite() {
        return Err(Error::NonFinite("preference loss".into()));
    }
    Ok(PreferenceEval {
        loss,
        grad,
        argument: u,
        scale,
    })
}

/// Full preference evaluation for one pair; `gap_aware` selects whether the
/// loss and gradient are scaled by the pair's reward-gain gap.
pub fn evaluate_preference(
    policy: &DenoiserParams,
    reference: &DenoiserParams,
    pair: &PreferencePair,
    schedule: &NoiseSchedule,
    config: &GapoConfig,
    seed: u64,
    gap_aware: bool,
) -> Result<PreferenceEval> {
    let scale = if gap_aware {
        gap_factor(pair, config.alpha)?
    } else {
        1.0
    };
    preference_core(policy, reference, pair, schedule, config, seed, scale)
}

/// Plain preference loss and policy gradient for one pair.
pub fn dpo_loss_and_grad(
    policy: &DenoiserParams,
    reference: &DenoiserParams,
    pair: &PreferencePair,
    schedule: &NoiseSchedule,
    config: &GapoConfig,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let eval = preference_core(policy, reference, pair, schedule, config, seed, 1.0)?;
    Ok((eval.loss, eval.grad))
}

/// Gap-aware preference loss: the plain loss and gradient scaled by the
/// pair's reward-gain gap. Equal rewards give exactly zero loss and gradient.
pub fn gapo_loss_and_grad(
    policy: &DenoiserParams,
    reference: &DenoiserParams,
    pair: &PreferencePair,
    schedule: &NoiseSchedule,
    config: &GapoConfig,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let factor = gap_factor(pair, config.alpha)?;
    let eval = preference_core(policy, reference, pair, schedule, config, seed, factor)?;
    Ok((eval.loss, eval.grad))
}
