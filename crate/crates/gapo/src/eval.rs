//! Win-rate evaluation between checkpoints and the two runnable ablation
//! templates (method comparison and reward-weighting comparison).
//!
//! Both models in a comparison sample with identical per-scene seeds, so any
//! score difference comes from the parameters alone. Scene-level work runs
//! in parallel; results are reduced in scene order, making every report
//! byte-stable for any worker count.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, DenoiserParams, NoiseSchedule};
use crate::error::{Error, Result};
use crate::pairs::{select_indices, select_pair_normalized, CandidateSet, RewardNormalization};
use crate::reward::{aggregate_reward, score_clip, WeightStrategy};
use crate::rng::Rng;
use crate::scenes::{oracle_reward, SceneInstance};
use crate::trainer::{train_preference, TrainConfig, TrainMode};
use crate::video::VideoTensor;

/// How a generated clip is scored during evaluation.
#[derive(Clone, Debug)]
pub enum Judge {
    /// Scene-aware analytic judge with access to ground truth.
    Oracle,
    /// The six-dimension reward system under a weighting strategy.
    RewardSystem(WeightStrategy),
}

impl Judge {
    pub fn name(&self) -> &'static str {
        match self {
            Judge::Oracle => "oracle",
            Judge::RewardSystem(_) => "reward_system",
        }
    }

    pub fn score(&self, clip: &VideoTensor, scene: &SceneInstance) -> Result<f64> {
        match self {
            Judge::Oracle => oracle_reward(clip, scene),
            Judge::RewardSystem(strategy) => Ok(score_clip(
                clip,
                &scene.condition,
                &scene.initial_frame,
                strategy,
            )?
            .aggregate),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRateReport {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub win_rate: f64,
    pub tie_rate: f64,
    pub loss_rate: f64,
    pub judge: String,
    pub tie_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneVerdict {
    pub scene_seed: u64,
    pub score_a: f64,
    pub score_b: f64,
    pub verdict: String,
}

/// Classify paired scores into (wins, ties, losses) for the first element.
pub fn count_verdicts(scores: &[(f64, f64)], tie_threshold: f64) -> (usize, usize, usize) {
    let (mut wins, mut ties, mut losses) = (0, 0, 0);
    for &(a, b) in scores {
        let d = a - b;
        if d.abs() <= tie_threshold {
            ties += 1;
        } else if d > 0.0 {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    (wins, ties, losses)
}

fn verdict_label(a: f64, b: f64, tie_threshold: f64) -> &'static str {
    let d = a - b;
    if d.abs() <= tie_threshold {
        "tie"
    } else if d > 0.0 {
        "win"
    } else {
        "loss"
    }
}

/// Deterministic per-scene sampling seed, keyed by the scene's own seed so
/// reports don't depend on test-set ordering.
fn scene_sample_seed(eval_seed: u64, scene: &SceneInstance) -> u64 {
    Rng::stream(eval_seed, "eval-sample", &[scene.seed]).next_u64()
}

/// Compare two checkpoints on a test set. Both models sample each scene with
/// the same seed; `model_a` wins a scene when its judged score exceeds
/// `model_b`'s by more than `tie_threshold`.
pub fn win_rate(
    model_a: &DenoiserParams,
    model_b: &DenoiserParams,
    testset: &[SceneInstance],
    judge: &Judge,
    tie_threshold: f64,
    seed: u64,
    schedule: &NoiseSchedule,
) -> Result<(WinRateReport, Vec<SceneVerdict>)> {
    if testset.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if tie_threshold < 0.0 || tie_threshold.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "tie threshold {tie_threshold} must be non-negative"
        )));
    }
    let verdicts: Vec<Result<SceneVerdict>> = testset
        .par_iter()
        .map(|scene| {
            let s = scene_sample_seed(seed, scene);
            let clip_a = sample(model_a, schedule, &scene.condition, &scene.initial_frame, s)?;
            let clip_b = sample(model_b, schedule, &scene.condition, &scene.initial_frame, s)?;
            let score_a = judge.score(&clip_a, scene)?;
            let score_b = judge.score(&clip_b, scene)?;
            Ok(SceneVerdict {
                scene_seed: scene.seed,
                score_a,
                score_b,
                verdict: verdict_label(score_a, score_b, tie_threshold).to_string(),
            })
        })
        .collect();
    let verdicts: Vec<SceneVerdict> = verdicts.into_iter().collect::<Result<_>>()?;
    let scores: Vec<(f64, f64)> = verdicts.iter().map(|v| (v.score_a, v.score_b)).collect();
    let (wins, ties, losses) = count_verdicts(&scores, tie_threshold);
    let n = testset.len() as f64;
    Ok((
        WinRateReport {
            wins,
            ties,
            losses,
            win_rate: wins as f64 / n,
            tie_rate: ties as f64 / n,
            loss_rate: losses as f64 / n,
            judge: judge.name().to_string(),
            tie_threshold,
        },
        verdicts,
    ))
}

pub fn write_win_rate_csv(path: &Path, report: &WinRateReport) -> Result<()> {
    let text = format!(
        "judge,tie_threshold,wins,ties,losses,win_rate,tie_rate,loss_rate\n{},{},{},{},{},{},{},{}\n",
        report.judge,
        report.tie_threshold,
        report.wins,
        report.ties,
        report.losses,
        report.win_rate,
        report.tie_rate,
        report.loss_rate
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_verdicts_jsonl(path: &Path, verdicts: &[SceneVerdict]) -> Result<()> {
    let mut out = String::new();
    for v in verdicts {
        out.push_str(&serde_json::to_string(v).map_err(|e| Error::Format {
            path: path.display().to_string(),
            what: "verdict row",
            detail: e.to_string(),
        })?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row of the method-comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub mean_oracle: f64,
    pub mean_aggregate: f64,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

/// Per-method evaluation against a shared baseline (the first entry).
/// Samples one clip per (method, scene) with shared per-scene seeds, scores
/// it with both the oracle and the reward system, and counts verdicts
/// against the baseline's clips. When `clip_dump` is given, each method's
/// clips are written to `<dump>/clips_<method>/` as a candidate store so the
/// table can be independently re-derived from the files.
pub fn run_method_ablation(
    methods: &[(String, DenoiserParams)],
    testset: &[SceneInstance],
    schedule: &NoiseSchedule,
    strategy: &WeightStrategy,
    tie_threshold: f64,
    seed: u64,
    clip_dump: Option<&Path>,
) -> Result<Vec<MethodRow>> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to compare".into()));
    }
    if testset.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    let mut baseline_oracle: Vec<f64> = Vec::new();
    for (m, (name, params)) in methods.iter().enumerate() {
        let per_scene: Vec<Result<(VideoTensor, f64, f64)>> = testset
            .par_iter()
            .map(|scene| {
                let s = scene_sample_seed(seed, scene);
                let clip = sample(params, schedule, &scene.condition, &scene.initial_frame, s)?;
                let oracle = oracle_reward(&clip, scene)?;
                let aggregate =
                    score_clip(&clip, &scene.condition, &scene.initial_frame, strategy)?.aggregate;
                Ok((clip, oracle, aggregate))
            })
            .collect();
        let mut clips = Vec::with_capacity(testset.len());
        let mut oracles = Vec::with_capacity(testset.len());
        let mut mean_aggregate = 0.0;
        for item in per_scene {
            let (clip, oracle, aggregate) = item?;
            clips.push(clip);
            oracles.push(oracle);
            mean_aggregate += aggregate;
        }
        mean_aggregate /= testset.len() as f64;
        let mean_oracle = oracles.iter().sum::<f64>() / testset.len() as f64;
        if m == 0 {
            baseline_oracle = oracles.clone();
        }
        let scores: Vec<(f64, f64)> = oracles
            .iter()
            .zip(&baseline_oracle)
            .map(|(&a, &b)| (a, b))
            .collect();
        let (wins, ties, losses) = count_verdicts(&scores, tie_threshold);
        if let Some(dump) = clip_dump {
            let sets: Vec<CandidateSet> = testset
                .iter()
                .zip(&clips)
                .map(|(scene, clip)| {
                    Ok(CandidateSet {
                        scene: scene.clone(),
                        rewards: vec![score_clip(
                            clip,
                            &scene.condition,
                            &scene.initial_frame,
                            strategy,
                        )?],
                        clips: vec![clip.clone()],
                        sample_seeds: vec![scene_sample_seed(seed, scene)],
                    })
                })
                .collect::<Result<_>>()?;
            crate::dataset::write_candidate_store(
                &dump.join(format!("clips_{name}")),
                &sets,
                seed,
            )?;
        }
        rows.push(MethodRow {
            method: name.clone(),
            mean_oracle,
            mean_aggregate,
            wins,
            ties,
            losses,
        });
    }
    Ok(rows)
}

pub fn write_method_csv(path: &Path, rows: &[MethodRow]) -> Result<()> {
    let mut out =
        String::from("method,mean_oracle,mean_aggregate,wins_vs_baseline,ties_vs_baseline,losses_vs_baseline\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method, r.mean_oracle, r.mean_aggregate, r.wins, r.ties, r.losses
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Win/tie/loss counts per method, one row each, for external chart tools.
pub fn write_plot_csv(path: &Path, rows: &[MethodRow]) -> Result<()> {
    let mut out = String::from("method,win,tie,loss\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.method, r.wins, r.ties, r.losses));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn render_method_table(rows: &[MethodRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>12} {:>15} {:>6} {:>5} {:>6}\n",
        "method", "mean_oracle", "mean_aggregate", "win", "tie", "loss"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>12.6} {:>15.6} {:>6} {:>5} {:>6}\n",
            r.method, r.mean_oracle, r.mean_aggregate, r.wins, r.ties, r.losses
        ));
    }
    out
}

/// One row of the weighting-strategy comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub strategy: String,
    /// Normalized weights actually used for aggregation.
    pub weights: [f64; 6],
    pub pairs: usize,
    pub skipped_degenerate: usize,
    pub mean_oracle: f64,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

/// For each strategy: re-aggregate the stored candidate scores, rebuild
/// best/worst pairs, train a fresh gap-aware policy from the baseline, and
/// evaluate it against the baseline with the oracle judge. Candidate clips
/// are reused from the store, so strategies differ only in how rewards are
/// weighted.
#[allow(clippy::too_many_arguments)]
pub fn run_weight_ablation(
    store_sets: &[CandidateSet],
    baseline: &DenoiserParams,
    strategies: &[WeightStrategy],
    normalization: RewardNormalization,
    train_config: &TrainConfig,
    testset: &[SceneInstance],
    schedule: &NoiseSchedule,
    tie_threshold: f64,
    seed: u64,
) -> Result<Vec<WeightRow>> {
    if strategies.is_empty() {
        return Err(Error::InvalidArgument("no weighting strategies".into()));
    }
    if !matches!(train_config.mode, TrainMode::Gapo) {
        return Err(Error::InvalidArgument(format!(
            "weight ablation trains gapo policies, config says {}",
            train_config.mode
        )));
    }
    let mut rows = Vec::with_capacity(strategies.len());
    for strategy in strategies {
        let mut pairs = Vec::new();
        let mut skipped = 0usize;
        for set in store_sets {
            let rescored = CandidateSet {
                scene: set.scene.clone(),
                clips: set.clips.clone(),
                rewards: set
                    .rewards
                    .iter()
                    .map(|r| aggregate_reward(r.scores(), strategy))
                    .collect::<Result<_>>()?,
                sample_seeds: set.sample_seeds.clone(),
            };
            match select_pair_normalized(&rescored, normalization)? {
                Some(pair) => pairs.push(pair),
                None => skipped += 1,
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "strategy {} selected no pairs",
                strategy.name()
            )));
        }
        let outcome = train_preference(train_config, &pairs, baseline, schedule, None)?;
        let (report, _) = win_rate(
            &outcome.params,
            baseline,
            testset,
            &Judge::Oracle,
            tie_threshold,
            seed,
            schedule,
        )?;
        let mean_oracle: f64 = {
            let oracles: Vec<Result<f64>> = testset
                .par_iter()
                .map(|scene| {
                    let s = scene_sample_seed(seed, scene);
                    let clip = sample(
                        &outcome.params,
                        schedule,
                        &scene.condition,
                        &scene.initial_frame,
                        s,
                    )?;
                    oracle_reward(&clip, scene)
                })
                .collect();
            let oracles: Vec<f64> = oracles.into_iter().collect::<Result<_>>()?;
            oracles.iter().sum::<f64>() / testset.len() as f64
        };
        rows.push(WeightRow {
            strategy: strategy.name().to_string(),
            weights: strategy.weights(),
            pairs: pairs.len(),
            skipped_degenerate: skipped,
            mean_oracle,
            wins: report.wins,
            ties: report.ties,
            losses: report.losses,
        });
    }
    Ok(rows)
}

pub fn write_weight_csv(path: &Path, rows: &[WeightRow]) -> Result<()> {
    let mut out = String::from(
        "strategy,weights,pairs,skipped_degenerate,mean_oracle,wins_vs_baseline,ties_vs_baseline,losses_vs_baseline\n",
    );
    for r in rows {
        let weights = r
            .weights
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(":");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.strategy, weights, r.pairs, r.skipped_degenerate, r.mean_oracle, r.wins, r.ties, r.losses
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn render_weight_table(rows: &[WeightRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>6} {:>8} {:>12} {:>6} {:>5} {:>6}\n",
        "strategy", "pairs", "skipped", "mean_oracle", "win", "tie", "loss"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>8} {:>12.6} {:>6} {:>5} {:>6}\n",
            r.strategy, r.pairs, r.skipped_degenerate, r.mean_oracle, r.wins, r.ties, r.losses
        ));
    }
    out
}

/// Make sure `select_indices` stays reachable for callers that only need the
/// ranking side of a stored candidate set.
pub fn best_and_worst(aggregates: &[f64]) -> Option<(usize, usize)> {
    select_indices(aggregates)
}
