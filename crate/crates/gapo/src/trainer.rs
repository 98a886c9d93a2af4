//! Training loops (denoiser pretraining, supervised finetuning on winners,
//! preference alignment), optimizers, checkpoint files, and metrics output.
//!
//! Every loop is bit-deterministic for a fixed config: batch composition,
//! timesteps, and noise all come from seed-derived streams, and parallel
//! gradient work is reduced in a fixed order.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::denoiser::{dm_loss_and_grad, DiffusionBatch, NetworkLayout};
use crate::diffusion::{DenoiserParams, NoiseSchedule};
use crate::error::{Error, Result};
use crate::losses::{evaluate_preference, gap_factor, GapoConfig, PreferencePair};
use crate::rng::Rng;
use crate::scenes::SceneInstance;
use crate::video::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pretrain,
    Sft,
    Dpo,
    Gapo,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Pretrain => "pretrain",
            TrainMode::Sft => "sft",
            TrainMode::Dpo => "dpo",
            TrainMode::Gapo => "gapo",
        })
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(TrainMode::Pretrain),
            "sft" => Ok(TrainMode::Sft),
            "dpo" => Ok(TrainMode::Dpo),
            "gapo" => Ok(TrainMode::Gapo),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub gapo: GapoConfig,
    /// Save an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_interval: usize,
}

impl TrainConfig {
    /// Desk defaults for pretraining: 3000 steps, batch 8, Adam at 1e-3.
    pub fn pretrain_default(seed: u64) -> Self {
        TrainConfig {
            mode: TrainMode::Pretrain,
            steps: 3000,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed,
            gapo: GapoConfig::default(),
            checkpoint_interval: 0,
        }
    }

    /// Desk defaults for alignment phases: 600 steps, batch 8, Adam at 1e-4.
    pub fn preference_default(mode: TrainMode, seed: u64) -> Self {
        TrainConfig {
            mode,
            steps: 600,
            batch_size: 8,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            seed,
            gapo: GapoConfig::default(),
            checkpoint_interval: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        self.gapo.validate()
    }
}

enum Optimizer {
    Sgd,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: u32,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            },
        }
    }

    fn step(&mut self, values: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in values.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { m, v, t } => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let bc1 = 1.0 - BETA1.powi(*t as i32);
                let bc2 = 1.0 - BETA2.powi(*t as i32);
                for i in 0..values.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    values[i] -= lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}

/// One metrics row per optimization step. `margin_mean` is the batch-mean
/// negated error gap `-delta` (positive when the policy fits winners better
/// than losers, relative to the reference), with the `beta * T` prefactor
/// divided out; `margin_mean` and `gap_factor_mean` are 0 in the
/// non-preference modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub margin_mean: f64,
    pub gap_factor_mean: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: DenoiserParams,
    pub metrics: Vec<MetricsRow>,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from("step,loss,margin_mean,gap_factor_mean,grad_norm\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.loss, r.margin_mean, r.gap_factor_mean, r.grad_norm
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

const DIVERGENCE_CAP: f64 = 1e8;

fn guard_step(step: usize, loss: f64, grad_norm: f64) -> Result<()> {
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(Error::Diverged {
            step,
            detail: format!("loss {loss}, grad norm {grad_norm}"),
        });
    }
    if loss.abs() > DIVERGENCE_CAP {
        return Err(Error::Diverged {
            step,
            detail: format!("loss {loss} exceeds {DIVERGENCE_CAP}"),
        });
    }
    Ok(())
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn maybe_checkpoint(
    dir: Option<&Path>,
    interval: usize,
    step: usize,
    params: &DenoiserParams,
) -> Result<()> {
    if let Some(dir) = dir {
        if interval > 0 && step % interval == 0 {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            save_checkpoint(params, &dir.join(format!("step_{step:05}.gapo")))?;
        }
    }
    Ok(())
}

/// Pretrain the denoiser on ground-truth scene clips. `steps == 0` returns
/// the seeded initialization unchanged.
pub fn pretrain(
    config: &TrainConfig,
    scenes: &[SceneInstance],
    schedule: &NoiseSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("no training scenes".into()));
    }
    let shape = scenes[0].gt_video.shape();
    let layout = NetworkLayout::for_clip(shape);
    let init_seed = Rng::stream(config.seed, "init-seed", &[]).next_u64();
    let mut params = DenoiserParams::seeded_init(layout, init_seed);
    let mut optimizer = Optimizer::new(config.optimizer, params.values.len());
    let mut metrics = Vec::with_capacity(config.steps);

    for step in 1..=config.steps {
        let mut batch_rng = Rng::stream(config.seed, "pretrain-batch", &[step as u64]);
        let mut clips = Vec::with_capacity(config.batch_size);
        let mut conditions = Vec::with_capacity(config.batch_size);
        let mut initial_frames = Vec::with_capacity(config.batch_size);
        let mut timesteps = Vec::with_capacity(config.batch_size);
        let mut noises = Vec::with_capacity(config.batch_size);
        for slot in 0..config.batch_size {
            let scene = &scenes[batch_rng.next_below(scenes.len() as u64) as usize];
            clips.push(scene.gt_video.clone());
            conditions.push(scene.condition);
            initial_frames.push(scene.initial_frame.clone());
            timesteps.push(1 + batch_rng.next_below(schedule.len() as u64) as usize);
            let mut noise = Volume::zeros(shape);
            Rng::stream(config.seed, "pretrain-noise", &[step as u64, slot as u64])
                .fill_normal(noise.data_mut());
            noises.push(noise);
        }
        let batch = DiffusionBatch {
            clips,
            conditions,
            initial_frames,
            timesteps,
            noises,
        };
        let (loss, grad) = dm_loss_and_grad(&params, &batch, schedule)?;
        let grad_norm = l2_norm(&grad);
        guard_step(step, loss, grad_norm)?;
        optimizer.step(&mut params.values, &grad, config.learning_rate);
        metrics.push(MetricsRow {
            step,
            loss,
            margin_mean: 0.0,
            gap_factor_mean: 0.0,
            grad_norm,
        });
        maybe_checkpoint(checkpoint_dir, config.checkpoint_interval, step, &params)?;
    }
    Ok(TrainOutcome { params, metrics })
}

/// Supervised finetuning on pair winners only; loser clips are never read.
pub fn train_sft(
    config: &TrainConfig,
    pairs: &[PreferencePair],
    baseline: &DenoiserParams,
    schedule: &NoiseSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    let shape = pairs[0].winner.shape();
    let mut params = baseline.clone();
    let mut optimizer = Optimizer::new(config.optimizer, params.values.len());
    let mut metrics = Vec::with_capacity(config.steps);

    for step in 1..=config.steps {
        let mut batch_rng = Rng::stream(config.seed, "sft-batch", &[step as u64]);
        let mut clips = Vec::with_capacity(config.batch_size);
        let mut conditions = Vec::with_capacity(config.batch_size);
        let mut initial_frames = Vec::with_capacity(config.batch_size);
        let mut timesteps = Vec::with_capacity(config.batch_size);
        let mut noises = Vec::with_capacity(config.batch_size);
        for slot in 0..config.batch_size {
            let pair = &pairs[batch_rng.next_below(pairs.len() as u64) as usize];
            clips.push(pair.winner.clone());
            conditions.push(pair.condition);
            initial_frames.push(pair.initial_frame.clone());
            timesteps.push(1 + batch_rng.next_below(schedule.len() as u64) as usize);
            let mut noise = Volume::zeros(shape);
            Rng::stream(config.seed, "sft-noise", &[step as u64, slot as u64])
                .fill_normal(noise.data_mut());
            noises.push(noise);
        }
        let batch = DiffusionBatch {
            clips,
            conditions,
            initial_frames,
            timesteps,
            noises,
        };
        let (loss, grad) = dm_loss_and_grad(&params, &batch, schedule)?;
        let grad_norm = l2_norm(&grad);
        guard_step(step, loss, grad_norm)?;
        optimizer.step(&mut params.values, &grad, config.learning_rate);
        metrics.push(MetricsRow {
            step,
            loss,
            margin_mean: 0.0,
            gap_factor_mean: 0.0,
            grad_norm,
        });
        maybe_checkpoint(checkpoint_dir, config.checkpoint_interval, step, &params)?;
    }
    Ok(TrainOutcome { params, metrics })
}

/// Preference alignment against a frozen reference copy of the baseline.
/// `config.mode` selects the plain or the gap-aware loss.
pub fn train_preference(
    config: &TrainConfig,
    pairs: &[PreferencePair],
    baseline: &DenoiserParams,
    schedule: &NoiseSchedule,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs".into()));
    }
    if !matches!(config.mode, TrainMode::Dpo | TrainMode::Gapo) {
        return Err(Error::InvalidArgument(format!(
            "preference training expects dpo or gapo mode, got {}",
            config.mode
        )));
    }
    let gap_aware = config.mode == TrainMode::Gapo;
    let mut policy = baseline.clone();
    let reference = baseline;
    let mut optimizer = Optimizer::new(config.optimizer, policy.values.len());
    let mut metrics = Vec::with_capacity(config.steps);
    let t_scale = config.gapo.beta * schedule.len() as f64;

    for step in 1..=config.steps {
        let mut batch_rng = Rng::stream(config.seed, "preference-batch", &[step as u64]);
        let items: Vec<(usize, u64)> = (0..config.batch_size)
            .map(|_| {
                let idx = batch_rng.next_below(pairs.len() as u64) as usize;
                let seed = batch_rng.next_u64();
                (idx, seed)
            })
            .collect();

        let per_item: Vec<Result<(crate::losses::PreferenceEval, f64)>> = items
            .par_iter()
            .map(|&(idx, seed)| {
                let pair = &pairs[idx];
                let eval =
                    evaluate_preference(&policy, reference, pair, schedule, &config.gapo, seed, gap_aware)?;
                let factor = gap_factor(pair, config.gapo.alpha)?;
                Ok((eval, factor))
            })
            .collect();

        let scale = 1.0 / config.batch_size as f64;
        let mut loss = 0.0;
        let mut gap_mean = 0.0;
        let mut margin_mean = 0.0;
        let mut grad = vec![0.0; policy.values.len()];
        for item in per_item {
            let (eval, factor) = item?;
            loss += eval.loss * scale;
            gap_mean += factor * scale;
            margin_mean -= eval.argument * scale;
            for (g, ig) in grad.iter_mut().zip(&eval.grad) {
                *g += ig * scale;
            }
        }
        let grad_norm = l2_norm(&grad);
        guard_step(step, loss, grad_norm)?;
        optimizer.step(&mut policy.values, &grad, config.learning_rate);
        metrics.push(MetricsRow {
            step,
            loss,
            margin_mean: margin_mean / t_scale,
            gap_factor_mean: gap_mean,
            grad_norm,
        });
        maybe_checkpoint(checkpoint_dir, config.checkpoint_interval, step, &policy)?;
    }
    Ok(TrainOutcome {
        params: policy,
        metrics,
    })
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GAPO";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Checkpoint layout: magic `GAPO`, version u32 LE, parameter count u64 LE,
/// layout descriptor (u32 LE byte length + JSON), parameters as f64 LE, and
/// a trailing u64 LE checksum (wrapping sum of the raw bit pattern of every
/// parameter).
pub fn save_checkpoint(params: &DenoiserParams, path: &Path) -> Result<()> {
    params.validate()?;
    let descriptor =
        serde_json::to_vec(&params.layout).map_err(|e| Error::Config(e.to_string()))?;
    let mut bytes =
        Vec::with_capacity(4 + 4 + 8 + 4 + descriptor.len() + 8 * params.values.len() + 8);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&descriptor);
    let mut checksum = 0u64;
    for v in &params.values {
        let bits = v.to_bits();
        checksum = checksum.wrapping_add(bits);
        bytes.extend_from_slice(&bits.to_le_bytes());
    }
    bytes.extend_from_slice(&checksum.to_le_bytes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let truncated = |expected: u64| Error::Truncated {
        path: display.clone(),
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < 20 {
        return Err(truncated(20));
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: "GAPO",
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadVersion {
            path: display,
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let param_count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let descriptor_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let expected_len = 20u64 + descriptor_len as u64 + 8 * param_count as u64 + 8;
    if (bytes.len() as u64) != expected_len {
        return Err(truncated(expected_len));
    }
    let layout: NetworkLayout =
        serde_json::from_slice(&bytes[20..20 + descriptor_len]).map_err(|e| Error::Format {
            path: display.clone(),
            what: "layout descriptor",
            detail: e.to_string(),
        })?;
    if layout.param_count() != param_count {
        return Err(Error::Format {
            path: display,
            what: "layout descriptor",
            detail: format!(
                "layout implies {} parameters, header says {param_count}",
                layout.param_count()
            ),
        });
    }
    let mut values = Vec::with_capacity(param_count);
    let mut checksum = 0u64;
    let data_start = 20 + descriptor_len;
    for chunk in bytes[data_start..data_start + 8 * param_count].chunks_exact(8) {
        let bits = u64::from_le_bytes(chunk.try_into().unwrap());
        checksum = checksum.wrapping_add(bits);
        values.push(f64::from_bits(bits));
    }
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if stored != checksum {
        return Err(Error::ChecksumMismatch {
            path: display,
            stored,
            computed: checksum,
        });
    }
    let params = DenoiserParams { layout, values };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;
    use crate::scenes::generate_scene;
    use crate::video::{ClipShape, VideoTensor};

    fn tiny_pairs(count: usize, seed: u64) -> Vec<PreferencePair> {
        let shape = ClipShape::new(2, 4, 4);
        let mut rng = Rng::stream(seed, "trainer-pairs", &[]);
        (0..count)
            .map(|_| {
                let clip = |rng: &mut Rng| {
                    let data: Vec<f64> = (0..shape.len()).map(|_| rng.next_f64()).collect();
                    VideoTensor::new(shape, data).unwrap()
                };
                let winner = clip(&mut rng);
                let loser = clip(&mut rng);
                PreferencePair {
                    condition: crate::scenes::SceneCondition {
                        velocity: [rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)],
                        brightness: rng.next_range(0.5, 1.0),
                        character_id: rng.next_below(16) as u8,
                    },
                    initial_frame: winner.first_frame(),
                    winner,
                    loser,
                    winner_reward: 0.8,
                    loser_reward: 0.3,
                }
            })
            .collect()
    }

    fn tiny_baseline(seed: u64) -> DenoiserParams {
        DenoiserParams::seeded_init(NetworkLayout::for_clip(ClipShape::new(2, 4, 4)), seed)
    }

    fn small_config(mode: TrainMode, steps: usize) -> TrainConfig {
        TrainConfig {
            mode,
            steps,
            batch_size: 4,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 7,
            gapo: GapoConfig {
                beta: 5.0,
                ..GapoConfig::default()
            },
            checkpoint_interval: 0,
        }
    }

    #[test]
    fn config_validation_enforces_ranges() {
        let mut c = TrainConfig::pretrain_default(1);
        c.validate().unwrap();
        c.steps = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::pretrain_default(1);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::pretrain_default(1);
        c.gapo.alpha = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_step_pretrain_returns_initialization() {
        let scenes: Vec<SceneInstance> = (0..2).map(generate_scene).collect();
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let mut config = TrainConfig::pretrain_default(3);
        config.steps = 0;
        let outcome = pretrain(&config, &scenes, &schedule, None).unwrap();
        let init_seed = Rng::stream(config.seed, "init-seed", &[]).next_u64();
        let expected = DenoiserParams::seeded_init(
            NetworkLayout::for_clip(scenes[0].gt_video.shape()),
            init_seed,
        );
        assert_eq!(outcome.params, expected);
        assert!(outcome.metrics.is_empty());
    }

    fn tiny_scenes(count: usize, seed: u64) -> Vec<SceneInstance> {
        let shape = ClipShape::new(2, 4, 4);
        let mut rng = Rng::stream(seed, "trainer-scenes", &[]);
        (0..count)
            .map(|i| {
                let data: Vec<f64> = (0..shape.len())
                    .map(|_| crate::video::quantize_f32(rng.next_f64()))
                    .collect();
                let gt_video = VideoTensor::new(shape, data).unwrap();
                SceneInstance {
                    seed: seed + i as u64,
                    condition: crate::scenes::SceneCondition {
                        velocity: [rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)],
                        brightness: rng.next_range(0.5, 1.0),
                        character_id: rng.next_below(16) as u8,
                    },
                    start: [1.0, 1.0],
                    initial_frame: gt_video.first_frame(),
                    gt_video,
                }
            })
            .collect()
    }

    #[test]
    fn pretraining_reduces_loss_on_tiny_problem() {
        let scenes = tiny_scenes(3, 21);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let mut config = TrainConfig::pretrain_default(3);
        config.steps = 300;
        config.batch_size = 4;
        let outcome = pretrain(&config, &scenes, &schedule, None).unwrap();
        let first: f64 = outcome.metrics[..10].iter().map(|m| m.loss).sum::<f64>() / 10.0;
        let last: f64 = outcome.metrics[outcome.metrics.len() - 10..]
            .iter()
            .map(|m| m.loss)
            .sum::<f64>()
            / 10.0;
        assert!(last < first * 0.8, "first {first} last {last}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let pairs = tiny_pairs(6, 1);
        let baseline = tiny_baseline(2);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Linear).unwrap();
        let config = small_config(TrainMode::Gapo, 20);
        let a = train_preference(&config, &pairs, &baseline, &schedule, None).unwrap();
        let b = train_preference(&config, &pairs, &baseline, &schedule, None).unwrap();
        assert_eq!(a.params.values, b.params.values);
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn sft_never_reads_loser_clips() {
        let pairs_a = tiny_pairs(5, 10);
        let mut pairs_b = pairs_a.clone();
        // Replace every loser with a different clip; SFT output must not move.
        let others = tiny_pairs(5, 999);
        for (p, o) in pairs_b.iter_mut().zip(&others) {
            p.loser = o.loser.clone();
        }
        let baseline = tiny_baseline(4);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let config = small_config(TrainMode::Sft, 15);
        let a = train_sft(&config, &pairs_a, &baseline, &schedule, None).unwrap();
        let b = train_sft(&config, &pairs_b, &baseline, &schedule, None).unwrap();
        assert_eq!(a.params.values, b.params.values);
    }

    #[test]
    fn preference_training_reduces_preference_loss() {
        let pairs = tiny_pairs(6, 3);
        let baseline = tiny_baseline(5);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let mut config = small_config(TrainMode::Dpo, 300);
        config.gapo.beta = 1.0;
        let outcome = train_preference(&config, &pairs, &baseline, &schedule, None).unwrap();
        // The first step evaluates at policy == reference, so its loss is
        // exactly softplus(0) = ln 2; training must then push it well down.
        let first = outcome.metrics[0].loss;
        let last: f64 = outcome.metrics[outcome.metrics.len() - 10..]
            .iter()
            .map(|m| m.loss)
            .sum::<f64>()
            / 10.0;
        assert!((first - std::f64::consts::LN_2).abs() <= 1e-12, "first {first}");
        assert!(last < 0.55, "first {first} last {last}");
        // Margins turn positive once the policy prefers winners.
        assert!(outcome.metrics.last().unwrap().margin_mean > 0.0);
    }

    #[test]
    fn preference_training_rejects_wrong_mode() {
        let pairs = tiny_pairs(2, 3);
        let baseline = tiny_baseline(5);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let config = small_config(TrainMode::Sft, 5);
        assert!(train_preference(&config, &pairs, &baseline, &schedule, None).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let params = tiny_baseline(6);
        let dir = std::env::temp_dir().join(format!("ckpt-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.gapo");
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.layout, params.layout);
        assert_eq!(back.values, params.values);
    }

    #[test]
    fn checkpoint_corruption_yields_distinct_errors() {
        let params = tiny_baseline(8);
        let dir = std::env::temp_dir().join(format!("ckpt-corrupt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.gapo");
        save_checkpoint(&params, &path).unwrap();
        let good = fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&7u32.to_le_bytes());
        fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::BadVersion { .. })
        ));

        let mut bad = good.clone();
        // Flip one bit inside the parameter payload.
        let mid = bad.len() / 2;
        bad[mid] ^= 1;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::ChecksumMismatch { .. })
        ));

        fs::write(&path, &good[..good.len() - 5]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn metrics_csv_has_expected_header_and_rows() {
        let rows = vec![
            MetricsRow {
                step: 1,
                loss: 0.5,
                margin_mean: 0.0,
                gap_factor_mean: 0.25,
                grad_norm: 1.5,
            },
            MetricsRow {
                step: 2,
                loss: 0.25,
                margin_mean: 0.125,
                gap_factor_mean: 0.5,
                grad_norm: 0.75,
            },
        ];
        let dir = std::env::temp_dir().join(format!("metrics-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        write_metrics_csv(&path, &rows).unwrap();
        let content = fs::read_to_string(&path).unwrap();
        assert_eq!(
            content,
            "step,loss,margin_mean,gap_factor_mean,grad_norm\n1,0.5,0,0.25,1.5\n2,0.25,0.125,0.5,0.75\n"
        );
    }
}
