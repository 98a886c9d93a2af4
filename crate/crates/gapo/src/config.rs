//! Run configuration: one flat JSON object with dotted keys, loadable from a
//! file and overridable key-by-key from command-line flags. Snapshots are
//! written with sorted keys so reruns diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::diffusion::{NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::losses::GapoConfig;
use crate::pairs::RewardNormalization;
use crate::reward::WeightStrategy;
use crate::trainer::{OptimizerKind, TrainConfig, TrainMode};

/// Everything a run needs. Field names map 1:1 onto the dotted JSON keys
/// listed next to them.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// "seed" — the single root seed; every substream derives from it.
    pub seed: u64,
    /// "workers" — data-parallel scene workers; 1 is the canonical order.
    pub workers: usize,
    /// "out_dir" — where commands write snapshots, logs, and outputs.
    pub out_dir: PathBuf,
    /// "scenes.count" — training scenes generated by gen-data.
    pub scenes_count: usize,
    /// "scenes.holdout" — held-out evaluation scenes (disjoint stream).
    pub scenes_holdout: usize,
    /// "schedule.steps" — diffusion timesteps T.
    pub schedule_steps: usize,
    /// "schedule.kind" — "cosine" or "linear".
    pub schedule_kind: ScheduleKind,
    /// "pairs.n" — candidates sampled per scene (N >= 2).
    pub pairs_n: usize,
    /// "pairs.strategy" — reward weighting: "uniform" or a ratio string.
    pub pairs_strategy: String,
    /// "pairs.normalization" — "identity" or "per_set_min_max".
    pub pairs_normalization: RewardNormalization,
    /// "pretrain.steps" / "pretrain.learning_rate".
    pub pretrain_steps: usize,
    pub pretrain_learning_rate: f64,
    /// "preference.steps" / "preference.learning_rate".
    pub preference_steps: usize,
    pub preference_learning_rate: f64,
    /// "train.batch_size" — minibatch size for every stage.
    pub batch_size: usize,
    /// "train.optimizer" — "adam" or "sgd".
    pub optimizer: OptimizerKind,
    /// "train.checkpoint_interval" — intermediate saves; 0 disables.
    pub checkpoint_interval: usize,
    /// "gapo.beta" / "gapo.alpha".
    pub gapo_beta: f64,
    pub gapo_alpha: f64,
    /// "eval.tie_threshold" — judge-score band counted as a tie.
    pub eval_tie_threshold: f64,
    /// "paths.scenes" — scene dataset directory (consumed by train/build-pairs).
    pub scenes_dir: Option<PathBuf>,
    /// "paths.pairs" — preference-pair dataset directory.
    pub pairs_dir: Option<PathBuf>,
    /// "paths.candidates" — candidate store directory (weight ablation input).
    pub candidates_dir: Option<PathBuf>,
    /// "paths.baseline" — pretrained reference checkpoint.
    pub baseline_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: 1,
            out_dir: PathBuf::from("runs/default"),
            scenes_count: 200,
            scenes_holdout: 100,
            schedule_steps: 32,
            schedule_kind: ScheduleKind::Cosine,
            pairs_n: 4,
            pairs_strategy: "uniform".to_string(),
            pairs_normalization: RewardNormalization::Identity,
            pretrain_steps: 3000,
            pretrain_learning_rate: 1e-3,
            preference_steps: 600,
            preference_learning_rate: 1e-4,
            batch_size: 8,
            optimizer: OptimizerKind::Adam,
            checkpoint_interval: 0,
            gapo_beta: 500.0,
            gapo_alpha: 2.0,
            eval_tie_threshold: 0.01,
            scenes_dir: None,
            pairs_dir: None,
            candidates_dir: None,
            baseline_checkpoint: None,
        }
    }
}

fn want_u64(key: &str, value: &Value) -> Result<u64> {
    value
        .as_u64()
        .ok_or_else(|| Error::Config(format!("key {key:?} expects a non-negative integer, got {value}")))
}

fn want_usize(key: &str, value: &Value) -> Result<usize> {
    Ok(want_u64(key, value)? as usize)
}

fn want_f64(key: &str, value: &Value) -> Result<f64> {
    value
        .as_f64()
        .ok_or_else(|| Error::Config(format!("key {key:?} expects a number, got {value}")))
}

fn want_str<'v>(key: &str, value: &'v Value) -> Result<&'v str> {
    value
        .as_str()
        .ok_or_else(|| Error::Config(format!("key {key:?} expects a string, got {value}")))
}

impl RunConfig {
    /// Apply one dotted key. Unknown keys are config errors — a typo must
    /// not silently fall back to a default.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        match key {
            "seed" => self.seed = want_u64(key, value)?,
            "workers" => self.workers = want_usize(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(want_str(key, value)?),
            "scenes.count" => self.scenes_count = want_usize(key, value)?,
            "scenes.holdout" => self.scenes_holdout = want_usize(key, value)?,
            "schedule.steps" => self.schedule_steps = want_usize(key, value)?,
            "schedule.kind" => self.schedule_kind = ScheduleKind::from_str(want_str(key, value)?)?,
            "pairs.n" => self.pairs_n = want_usize(key, value)?,
            "pairs.strategy" => self.pairs_strategy = want_str(key, value)?.to_string(),
            "pairs.normalization" => {
                self.pairs_normalization = RewardNormalization::from_str(want_str(key, value)?)?
            }
            "pretrain.steps" => self.pretrain_steps = want_usize(key, value)?,
            "pretrain.learning_rate" => self.pretrain_learning_rate = want_f64(key, value)?,
            "preference.steps" => self.preference_steps = want_usize(key, value)?,
            "preference.learning_rate" => self.preference_learning_rate = want_f64(key, value)?,
            "train.batch_size" => self.batch_size = want_usize(key, value)?,
            "train.optimizer" => self.optimizer = OptimizerKind::from_str(want_str(key, value)?)?,
            "train.checkpoint_interval" => self.checkpoint_interval = want_usize(key, value)?,
            "gapo.beta" => self.gapo_beta = want_f64(key, value)?,
            "gapo.alpha" => self.gapo_alpha = want_f64(key, value)?,
            "eval.tie_threshold" => self.eval_tie_threshold = want_f64(key, value)?,
            "paths.scenes" => self.scenes_dir = Some(PathBuf::from(want_str(key, value)?)),
            "paths.pairs" => self.pairs_dir = Some(PathBuf::from(want_str(key, value)?)),
            "paths.candidates" => {
                self.candidates_dir = Some(PathBuf::from(want_str(key, value)?))
            }
            "paths.baseline" => {
                self.baseline_checkpoint = Some(PathBuf::from(want_str(key, value)?))
            }
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Defaults, then every key from a flat JSON object.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, Value> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not a JSON object: {e}")))?;
        let mut config = RunConfig::default();
        // BTreeMap iteration gives a stable application order (moot for
        // disjoint keys, decisive for duplicate detection messages).
        for (key, value) in map.iter().collect::<BTreeMap<_, _>>() {
            config.set(key, value)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    /// The full flat-key form, every key present, sorted.
    pub fn to_json(&self) -> String {
        let mut map: BTreeMap<&str, Value> = BTreeMap::new();
        map.insert("seed", self.seed.into());
        map.insert("workers", self.workers.into());
        map.insert("out_dir", self.out_dir.display().to_string().into());
        map.insert("scenes.count", self.scenes_count.into());
        map.insert("scenes.holdout", self.scenes_holdout.into());
        map.insert("schedule.steps", self.schedule_steps.into());
        map.insert("schedule.kind", self.schedule_kind.to_string().into());
        map.insert("pairs.n", self.pairs_n.into());
        map.insert("pairs.strategy", self.pairs_strategy.clone().into());
        map.insert(
            "pairs.normalization",
            self.pairs_normalization.to_string().into(),
        );
        map.insert("pretrain.steps", self.pretrain_steps.into());
        map.insert("pretrain.learning_rate", self.pretrain_learning_rate.into());
        map.insert("preference.steps", self.preference_steps.into());
        map.insert(
            "preference.learning_rate",
            self.preference_learning_rate.into(),
        );
        map.insert("train.batch_size", self.batch_size.into());
        map.insert("train.optimizer", self.optimizer.to_string().into());
        map.insert("train.checkpoint_interval", self.checkpoint_interval.into());
        map.insert("gapo.beta", self.gapo_beta.into());
        map.insert("gapo.alpha", self.gapo_alpha.into());
        map.insert("eval.tie_threshold", self.eval_tie_threshold.into());
        if let Some(p) = &self.scenes_dir {
            map.insert("paths.scenes", p.display().to_string().into());
        }
        if let Some(p) = &self.pairs_dir {
            map.insert("paths.pairs", p.display().to_string().into());
        }
        if let Some(p) = &self.candidates_dir {
            map.insert("paths.candidates", p.display().to_string().into());
        }
        if let Some(p) = &self.baseline_checkpoint {
            map.insert("paths.baseline", p.display().to_string().into());
        }
        let mut out = String::from("{\n");
        let last = map.len().saturating_sub(1);
        for (i, (key, value)) in map.iter().enumerate() {
            let comma = if i == last { "" } else { "," };
            writeln!(out, "  {:?}: {}{}", key, value, comma).expect("string write");
        }
        out.push_str("}\n");
        out
    }

    /// Write the sorted snapshot into the run directory.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes_count == 0 {
            return Err(Error::Config("scenes.count must be at least 1".into()));
        }
        if self.scenes_holdout == 0 {
            return Err(Error::Config("scenes.holdout must be at least 1".into()));
        }
        if self.pairs_n < 2 {
            return Err(Error::Config(format!(
                "pairs.n must be at least 2, got {}",
                self.pairs_n
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.eval_tie_threshold < 0.0 || self.eval_tie_threshold.is_nan() {
            return Err(Error::Config(format!(
                "eval.tie_threshold {} must be non-negative",
                self.eval_tie_threshold
            )));
        }
        // Strategy and schedule strings must parse/build.
        WeightStrategy::parse(&self.pairs_strategy)
            .map_err(|e| Error::Config(format!("pairs.strategy: {e}")))?;
        self.schedule()?;
        self.pretrain_config().validate()?;
        self.preference_config(TrainMode::Gapo).validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.schedule_steps, self.schedule_kind)
    }

    pub fn strategy(&self) -> Result<WeightStrategy> {
        WeightStrategy::parse(&self.pairs_strategy)
    }

    fn gapo(&self) -> GapoConfig {
        GapoConfig {
            beta: self.gapo_beta,
            alpha: self.gapo_alpha,
            ..GapoConfig::default()
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            mode: TrainMode::Pretrain,
            steps: self.pretrain_steps,
            batch_size: self.batch_size,
            learning_rate: self.pretrain_learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            gapo: self.gapo(),
            checkpoint_interval: self.checkpoint_interval,
        }
    }

    pub fn preference_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            mode,
            steps: self.preference_steps,
            batch_size: self.batch_size,
            learning_rate: self.preference_learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            gapo: self.gapo(),
            checkpoint_interval: self.checkpoint_interval,
        }
    }
}
