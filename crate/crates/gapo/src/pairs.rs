//! Best/worst-of-N preference pair construction.
//!
//! For each scene, N clips are sampled from the reference model with
//! deterministic per-candidate seeds and scored by the judge; the pair is
//! the aggregate argmax vs argmin (ties to the lowest index). Sets whose
//! candidates all tie are degenerate: skipped and counted, never emitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, DenoiserParams, NoiseSchedule};
use crate::error::{Error, Result};
use crate::losses::PreferencePair;
use crate::reward::{score_clip, RewardVector, WeightStrategy};
use crate::scenes::SceneInstance;
use crate::video::VideoTensor;

/// How winner/loser rewards carried by a pair relate to raw aggregates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RewardNormalization {
    /// Raw aggregate scores (already in [0, 1]).
    #[default]
    Identity,
    /// Min-max over the candidate set: the winner carries 1, the loser 0.
    PerSetMinMax,
}

impl std::fmt::Display for RewardNormalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RewardNormalization::Identity => "identity",
            RewardNormalization::PerSetMinMax => "per_set_min_max",
        })
    }
}

impl std::str::FromStr for RewardNormalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(RewardNormalization::Identity),
            "per_set_min_max" => Ok(RewardNormalization::PerSetMinMax),
            other => Err(Error::Config(format!(
                "unknown reward normalization {other:?} (expected \"identity\" or \"per_set_min_max\")"
            ))),
        }
    }
}

/// N sampled candidates for one scene, with their scores and sampling seeds.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub scene: SceneInstance,
    pub clips: Vec<VideoTensor>,
    pub rewards: Vec<RewardVector>,
    pub sample_seeds: Vec<u64>,
}

impl CandidateSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.clips.len();
        // Pair building separately requires n >= 2; a stored set of one is
        // fine (method-comparison clip dumps hold one clip per scene).
        if n == 0 {
            return Err(Error::InvalidArgument("empty candidate set".into()));
        }
        if self.rewards.len() != n || self.sample_seeds.len() != n {
            return Err(Error::Shape("candidate set field lengths disagree".into()));
        }
        for (i, &s) in self.sample_seeds.iter().enumerate() {
            if self.sample_seeds[..i].contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sampling seed {s} in candidate set"
                )));
            }
        }
        Ok(())
    }
}

/// Sample and score N candidates for a scene. Candidate k uses sampling
/// seed `base_seed + k`.
pub fn build_candidates(
    reference: &DenoiserParams,
    scene: &SceneInstance,
    n: usize,
    base_seed: u64,
    schedule: &NoiseSchedule,
    strategy: &WeightStrategy,
) -> Result<CandidateSet> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "candidates per scene must be at least 2, got {n}"
        )));
    }
    let mut clips = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut sample_seeds = Vec::with_capacity(n);
    for k in 0..n {
        let seed = base_seed.wrapping_add(k as u64);
        let clip = sample(
            reference,
            schedule,
            &scene.condition,
            &scene.initial_frame,
            seed,
        )?;
        rewards.push(score_clip(
            &clip,
            &scene.condition,
            &scene.initial_frame,
            strategy,
        )?);
        clips.push(clip);
        sample_seeds.push(seed);
    }
    let set = CandidateSet {
        scene: scene.clone(),
        clips,
        rewards,
        sample_seeds,
    };
    set.validate()?;
    Ok(set)
}

/// Index of winner (argmax) and loser (argmin) by aggregate, ties to the
/// lowest index; None when every aggregate is equal.
pub fn select_indices(aggregates: &[f64]) -> Option<(usize, usize)> {
    let mut best = 0;
    let mut worst = 0;
    for (i, &a) in aggregates.iter().enumerate() {
        if a > aggregates[best] {
            best = i;
        }
        if a < aggregates[worst] {
            worst = i;
        }
    }
    if aggregates[best] == aggregates[worst] {
        None
    } else {
        Some((best, worst))
    }
}

/// Build the best/worst pair of a candidate set under a normalization mode.
/// Degenerate (all-tied) sets give None.
pub fn select_pair_normalized(
    set: &CandidateSet,
    normalization: RewardNormalization,
) -> Result<Option<PreferencePair>> {
    set.validate()?;
    let aggregates: Vec<f64> = set.rewards.iter().map(|r| r.aggregate).collect();
    let Some((best, worst)) = select_indices(&aggregates) else {
        return Ok(None);
    };
    let (winner_reward, loser_reward) = match normalization {
        RewardNormalization::Identity => (aggregates[best], aggregates[worst]),
        RewardNormalization::PerSetMinMax => (1.0, 0.0),
    };
    let pair = PreferencePair {
        condition: set.scene.condition,
        initial_frame: set.scene.initial_frame.clone(),
        winner: set.clips[best].clone(),
        loser: set.clips[worst].clone(),
        winner_reward,
        loser_reward,
    };
    pair.validate()?;
    Ok(Some(pair))
}

/// `select_pair_normalized` with raw aggregate rewards.
pub fn select_pair(set: &CandidateSet) -> Result<Option<PreferencePair>> {
    select_pair_normalized(set, RewardNormalization::Identity)
}

/// Provenance of one built pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairProvenance {
    pub scene_seed: u64,
    pub winner_sample_seed: u64,
    pub loser_sample_seed: u64,
}

#[derive(Clone, Debug)]
pub struct PairDataset {
    pub pairs: Vec<PreferencePair>,
    pub provenance: Vec<PairProvenance>,
    pub skipped_degenerate: usize,
}

/// Candidate sets for a batch of scenes; scene i draws candidate seeds from
/// `base_seed + i * n`.
pub fn build_candidate_sets(
    reference: &DenoiserParams,
    scenes: &[SceneInstance],
    n: usize,
    base_seed: u64,
    schedule: &NoiseSchedule,
    strategy: &WeightStrategy,
) -> Result<Vec<CandidateSet>> {
    let sets: Vec<Result<CandidateSet>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let scene_base = base_seed.wrapping_add((i * n) as u64);
            build_candidates(reference, scene, n, scene_base, schedule, strategy)
        })
        .collect();
    sets.into_iter().collect()
}

/// Select best/worst pairs from prebuilt candidate sets, keeping set order.
pub fn pairs_from_sets(
    sets: &[CandidateSet],
    normalization: RewardNormalization,
) -> Result<PairDataset> {
    let mut pairs = Vec::new();
    let mut provenance = Vec::new();
    let mut skipped_degenerate = 0;
    for set in sets {
        match select_pair_normalized(set, normalization)? {
            Some(pair) => {
                let aggregates: Vec<f64> = set.rewards.iter().map(|r| r.aggregate).collect();
                let (best, worst) =
                    select_indices(&aggregates).expect("selection succeeded above");
                pairs.push(pair);
                provenance.push(PairProvenance {
                    scene_seed: set.scene.seed,
                    winner_sample_seed: set.sample_seeds[best],
                    loser_sample_seed: set.sample_seeds[worst],
                });
            }
            None => skipped_degenerate += 1,
        }
    }
    Ok(PairDataset {
        pairs,
        provenance,
        skipped_degenerate,
    })
}

/// Build pairs for a batch of scenes; scene i draws candidate seeds from
/// `base_seed + i * n`.
pub fn build_dataset(
    reference: &DenoiserParams,
    scenes: &[SceneInstance],
    n: usize,
    base_seed: u64,
    schedule: &NoiseSchedule,
    strategy: &WeightStrategy,
    normalization: RewardNormalization,
) -> Result<PairDataset> {
    let sets = build_candidate_sets(reference, scenes, n, base_seed, schedule, strategy)?;
    pairs_from_sets(&sets, normalization)
}
