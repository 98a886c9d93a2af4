//! Command-line front end: gen-data, train, build-pairs, score, eval,
//! ablate. Each command loads a `RunConfig` (defaults, then `--config` file,
//! then flag overrides), runs inside a worker pool of the requested size,
//! and writes its outputs plus a sorted config snapshot into the run
//! directory. Artifacts are byte-stable for identical inputs; anything
//! timing-related goes to stderr only.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid config, 4 data error,
//! 5 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{
    self, load_candidate_store, load_pair_dataset, load_scene_dataset, write_candidate_store,
    write_pair_dataset, write_scene_dataset, PairDatasetMeta, CANDIDATE_MANIFEST, SCENE_MANIFEST,
};
use crate::diffusion::DenoiserParams;
use crate::error::{Error, Result};
use crate::eval::{
    render_method_table, render_weight_table, run_method_ablation, run_weight_ablation,
    win_rate, write_method_csv, write_plot_csv, write_verdicts_jsonl, write_weight_csv,
    write_win_rate_csv, Judge,
};
use crate::pairs::{build_candidate_sets, pairs_from_sets};
use crate::reward::{score_clip, WeightStrategy};
use crate::rng::Rng;
use crate::scenes::{generate_scene, oracle_reward, scene_seed, SceneInstance};
use crate::trainer::{
    load_checkpoint, pretrain, save_checkpoint, train_preference, train_sft, write_metrics_csv,
    TrainMode,
};

#[derive(Parser, Debug)]
#[command(
    name = "gapo",
    version,
    about = "Desk-scale lab for gap-aware preference optimization of a tiny video diffusion model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Each one overrides the matching config
/// key; the config file fills the rest.
#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file with flat dotted keys (e.g. {"pairs.n": 4}).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the config snapshot.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scene-parallel workers; 1 is the canonical ordering (results are
    /// identical for any value).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Number of scenes (overrides "scenes.count").
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        scenes: Option<u64>,
    },
    /// Train a stage: pretrain, sft, dpo, or gapo.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training stage.
        #[arg(long, value_enum)]
        mode: TrainMode,
        /// Optimizer steps (overrides the stage's steps key).
        #[arg(long)]
        steps: Option<usize>,
        /// Scene dataset directory (pretrain input; overrides "paths.scenes").
        #[arg(long)]
        scenes_dir: Option<PathBuf>,
        /// Preference-pair dataset directory (sft/dpo/gapo input;
        /// overrides "paths.pairs").
        #[arg(long)]
        pairs_dir: Option<PathBuf>,
        /// Baseline checkpoint (sft/dpo/gapo input; overrides
        /// "paths.baseline").
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Sample N candidates per scene, keep best/worst pairs.
    BuildPairs {
        #[command(flatten)]
        common: Common,
        /// Scene dataset directory (overrides "paths.scenes").
        #[arg(long)]
        scenes_dir: Option<PathBuf>,
        /// Reference checkpoint to sample from (overrides "paths.baseline").
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Candidates per scene (overrides "pairs.n").
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        n: Option<u64>,
        /// Reward weighting (overrides "pairs.strategy").
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Score every clip in a dataset directory, one CSV row per clip.
    Score {
        #[command(flatten)]
        common: Common,
        /// Scene dataset or candidate store directory.
        #[arg(long)]
        clips: PathBuf,
        /// Reward weighting (overrides "pairs.strategy").
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Compare two checkpoints on held-out scenes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint A (the candidate).
        #[arg(long)]
        a: PathBuf,
        /// Checkpoint B (the opponent).
        #[arg(long)]
        b: PathBuf,
        /// Judge: "oracle" or "reward_system".
        #[arg(long, default_value = "oracle")]
        judge: String,
        /// Score band counted as a tie (overrides "eval.tie_threshold").
        #[arg(long)]
        tie_threshold: Option<f64>,
    },
    /// Method table (baseline/sft/dpo/gapo), or the reward-weighting table
    /// when --weights is given.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Run the weighting ablation. With a value, a JSON file holding an
        /// array of strategy strings; without one, the built-in grid.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        weights: Option<String>,
        /// Directory holding baseline/sft/dpo/gapo checkpoints
        /// (default: the output directory).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Candidate store for the weighting ablation (overrides
        /// "paths.candidates").
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Baseline checkpoint (overrides "paths.baseline").
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

/// Parse and run; the returned code is the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout with success; real usage
            // errors go to stderr with code 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main_entry() -> u8 {
    run(std::env::args_os())
}

fn dispatch(command: Command) -> Result<()> {
    let common = match &command {
        Command::GenData { common, .. }
        | Command::Train { common, .. }
        | Command::BuildPairs { common, .. }
        | Command::Score { common, .. }
        | Command::Eval { common, .. }
        | Command::Ablate { common, .. } => common.clone(),
    };
    let config = common.load()?;
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match command {
        Command::GenData { scenes, .. } => cmd_gen_data(&config, scenes.map(|n| n as usize)),
        Command::Train {
            mode,
            steps,
            scenes_dir,
            pairs_dir,
            baseline,
            ..
        } => cmd_train(&config, mode, steps, scenes_dir, pairs_dir, baseline),
        Command::BuildPairs {
            scenes_dir,
            baseline,
            n,
            strategy,
            ..
        } => cmd_build_pairs(&config, scenes_dir, baseline, n.map(|n| n as usize), strategy),
        Command::Score {
            clips, strategy, ..
        } => cmd_score(&config, &clips, strategy),
        Command::Eval {
            a,
            b,
            judge,
            tie_threshold,
            ..
        } => cmd_eval(&config, &a, &b, &judge, tie_threshold),
        Command::Ablate {
            weights,
            run_dir,
            candidates,
            baseline,
            ..
        } => cmd_ablate(&config, weights, run_dir, candidates, baseline),
    })
}

/// Training scenes: index i gets seed scene_seed(seed, i).
fn training_scenes(seed: u64, count: usize) -> Vec<SceneInstance> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(scene_seed(seed, i)))
        .collect()
}

/// Held-out scenes draw from a stream disjoint from training indices.
pub fn holdout_scenes(seed: u64, count: usize) -> Vec<SceneInstance> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(crate::scenes::holdout_seed(seed, i)))
        .collect()
}

fn cmd_gen_data(config: &RunConfig, scenes_flag: Option<usize>) -> Result<()> {
    let count = scenes_flag.unwrap_or(config.scenes_count);
    let scenes = training_scenes(config.seed, count);
    write_scene_dataset(&config.out_dir, &scenes, config.seed)?;
    let mut snapshot = config.clone();
    snapshot.scenes_count = count;
    snapshot.write_snapshot(&config.out_dir)?;
    println!("{}", config.out_dir.join(SCENE_MANIFEST).display());
    Ok(())
}

fn require(path: Option<PathBuf>, key: &str, needed_by: &str) -> Result<PathBuf> {
    path.ok_or_else(|| {
        Error::Config(format!("{needed_by} needs {key} (config key or flag)"))
    })
}

/// Checkpoint a stage writes; pretrain produces the baseline everything
/// else starts from.
fn checkpoint_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Pretrain => "baseline.gapo",
        TrainMode::Sft => "sft.gapo",
        TrainMode::Dpo => "dpo.gapo",
        TrainMode::Gapo => "gapo.gapo",
    }
}

fn cmd_train(
    config: &RunConfig,
    mode: TrainMode,
    steps: Option<usize>,
    scenes_dir: Option<PathBuf>,
    pairs_dir: Option<PathBuf>,
    baseline: Option<PathBuf>,
) -> Result<()> {
    let schedule = config.schedule()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let interval_dir = out.join(format!("checkpoints_{mode}"));
    let checkpoint_dir = (config.checkpoint_interval > 0).then_some(interval_dir.as_path());

    let outcome = match mode {
        TrainMode::Pretrain => {
            let dir = require(
                scenes_dir.or_else(|| config.scenes_dir.clone()),
                "paths.scenes",
                "train --mode pretrain",
            )?;
            let (scenes, _) = load_scene_dataset(&dir)?;
            let mut train_config = config.pretrain_config();
            if let Some(s) = steps {
                train_config.steps = s;
            }
            train_config.validate()?;
            pretrain(&train_config, &scenes, &schedule, checkpoint_dir)?
        }
        TrainMode::Sft | TrainMode::Dpo | TrainMode::Gapo => {
            let pairs_dir = require(
                pairs_dir.or_else(|| config.pairs_dir.clone()),
                "paths.pairs",
                "preference-stage train",
            )?;
            let baseline_path = require(
                baseline.or_else(|| config.baseline_checkpoint.clone()),
                "paths.baseline",
                "preference-stage train",
            )?;
            let (dataset, _) = load_pair_dataset(&pairs_dir)?;
            let reference = load_checkpoint(&baseline_path)?;
            let mut train_config = config.preference_config(mode);
            if let Some(s) = steps {
                train_config.steps = s;
            }
            train_config.validate()?;
            if matches!(mode, TrainMode::Sft) {
                train_sft(&train_config, &dataset.pairs, &reference, &schedule, checkpoint_dir)?
            } else {
                train_preference(
                    &train_config,
                    &dataset.pairs,
                    &reference,
                    &schedule,
                    checkpoint_dir,
                )?
            }
        }
    };

    let checkpoint_path = out.join(checkpoint_name(mode));
    save_checkpoint(&outcome.params, &checkpoint_path)?;
    let metrics_path = out.join(format!("{mode}_metrics.csv"));
    write_metrics_csv(&metrics_path, &outcome.metrics)?;
    config.write_snapshot(out)?;
    println!("{}", checkpoint_path.display());
    println!("{}", metrics_path.display());
    Ok(())
}

fn cmd_build_pairs(
    config: &RunConfig,
    scenes_dir: Option<PathBuf>,
    baseline: Option<PathBuf>,
    n: Option<usize>,
    strategy: Option<String>,
) -> Result<()> {
    let scenes_dir = require(
        scenes_dir.or_else(|| config.scenes_dir.clone()),
        "paths.scenes",
        "build-pairs",
    )?;
    let baseline_path = require(
        baseline.or_else(|| config.baseline_checkpoint.clone()),
        "paths.baseline",
        "build-pairs",
    )?;
    let n = n.unwrap_or(config.pairs_n);
    let strategy_text = strategy.unwrap_or_else(|| config.pairs_strategy.clone());
    let strategy = WeightStrategy::parse(&strategy_text)?;

    let (scenes, _) = load_scene_dataset(&scenes_dir)?;
    let reference = load_checkpoint(&baseline_path)?;
    let schedule = config.schedule()?;
    let base_seed = Rng::stream(config.seed, "pair-build", &[]).next_u64();

    let sets = build_candidate_sets(&reference, &scenes, n, base_seed, &schedule, &strategy)?;
    let dataset = pairs_from_sets(&sets, config.pairs_normalization)?;

    let out = &config.out_dir;
    let candidates_dir = out.join("candidates");
    let pairs_dir = out.join("pairs");
    write_candidate_store(&candidates_dir, &sets, base_seed)?;
    write_pair_dataset(
        &pairs_dir,
        &dataset,
        &PairDatasetMeta {
            base_seed,
            candidates_per_scene: n,
            strategy: strategy_text,
            normalization: config.pairs_normalization,
        },
    )?;
    config.write_snapshot(out)?;
    println!("{}", candidates_dir.display());
    println!("{}", pairs_dir.display());
    println!(
        "pairs: {} kept, {} degenerate",
        dataset.pairs.len(),
        dataset.skipped_degenerate
    );
    Ok(())
}

const SCORE_HEADER: &str = "clip,smooth,motion,appeal,text_consistency,image_consistency,character_consistency,aggregate,oracle";

fn score_row(
    name: &str,
    clip: &crate::video::VideoTensor,
    scene: &SceneInstance,
    strategy: &WeightStrategy,
) -> Result<String> {
    let rv = score_clip(clip, &scene.condition, &scene.initial_frame, strategy)?;
    let oracle = oracle_reward(clip, scene)?;
    Ok(format!(
        "{},{},{},{},{},{},{},{},{}",
        name,
        rv.smooth,
        rv.motion,
        rv.appeal,
        rv.text_consistency,
        rv.image_consistency,
        rv.character_consistency,
        rv.aggregate,
        oracle
    ))
}

/// Score every clip under a dataset directory: ground-truth clips of a
/// scene dataset, or every stored candidate of a candidate store.
fn cmd_score(config: &RunConfig, clips: &Path, strategy: Option<String>) -> Result<()> {
    let strategy_text = strategy.unwrap_or_else(|| config.pairs_strategy.clone());
    let strategy = WeightStrategy::parse(&strategy_text)?;
    let mut rows = vec![SCORE_HEADER.to_string()];
    if clips.join(SCENE_MANIFEST).exists() {
        let (scenes, _) = load_scene_dataset(clips)?;
        let scored: Vec<Result<String>> = scenes
            .par_iter()
            .enumerate()
            .map(|(i, scene)| {
                score_row(
                    &format!("clips/scene_{i:05}.gvid"),
                    &scene.gt_video,
                    scene,
                    &strategy,
                )
            })
            .collect();
        for row in scored {
            rows.push(row?);
        }
    } else if clips.join(CANDIDATE_MANIFEST).exists() {
        let (sets, _) = load_candidate_store(clips, &strategy)?;
        let scored: Vec<Result<Vec<String>>> = sets
            .par_iter()
            .enumerate()
            .map(|(i, set)| {
                set.clips
                    .iter()
                    .enumerate()
                    .map(|(k, clip)| {
                        score_row(
                            &format!("clips/cand_{i:05}_{k}.gvid"),
                            clip,
                            &set.scene,
                            &strategy,
                        )
                    })
                    .collect()
            })
            .collect();
        for group in scored {
            rows.extend(group?);
        }
    } else {
        return Err(Error::Format {
            path: clips.display().to_string(),
            what: "dataset directory",
            detail: format!("no {SCENE_MANIFEST} or {CANDIDATE_MANIFEST} found"),
        });
    }
    let mut text = rows.join("\n");
    text.push('\n');
    print!("{text}");
    Ok(())
}

fn parse_judge(config: &RunConfig, judge: &str) -> Result<Judge> {
    match judge {
        "oracle" => Ok(Judge::Oracle),
        "reward_system" => Ok(Judge::RewardSystem(config.strategy()?)),
        other => Err(Error::Config(format!(
            "unknown judge {other:?} (expected \"oracle\" or \"reward_system\")"
        ))),
    }
}

fn cmd_eval(
    config: &RunConfig,
    a: &Path,
    b: &Path,
    judge: &str,
    tie_threshold: Option<f64>,
) -> Result<()> {
    let judge = parse_judge(config, judge)?;
    let tie_threshold = tie_threshold.unwrap_or(config.eval_tie_threshold);
    let model_a = load_checkpoint(a)?;
    let model_b = load_checkpoint(b)?;
    let testset = holdout_scenes(config.seed, config.scenes_holdout);
    let schedule = config.schedule()?;
    let (report, verdicts) = win_rate(
        &model_a,
        &model_b,
        &testset,
        &judge,
        tie_threshold,
        config.seed,
        &schedule,
    )?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report_path = out.join("win_rate.csv");
    write_win_rate_csv(&report_path, &report)?;
    let verdicts_path = out.join("verdicts.jsonl");
    write_verdicts_jsonl(&verdicts_path, &verdicts)?;
    config.write_snapshot(out)?;
    println!(
        "wins {} ties {} losses {} (judge {}, tie threshold {})",
        report.wins, report.ties, report.losses, report.judge, report.tie_threshold
    );
    println!("{}", report_path.display());
    println!("{}", verdicts_path.display());
    Ok(())
}

/// Methods compared by the ablation table, baseline first.
pub const ABLATION_METHODS: [&str; 4] = ["baseline", "sft", "dpo", "gapo"];

fn load_method_checkpoints(run_dir: &Path) -> Result<Vec<(String, DenoiserParams)>> {
    ABLATION_METHODS
        .iter()
        .map(|name| {
            let path = run_dir.join(format!("{name}.gapo"));
            if !path.exists() {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    what: "method checkpoint",
                    detail: format!("missing for method {name:?}"),
                });
            }
            Ok((name.to_string(), load_checkpoint(&path)?))
        })
        .collect()
}

fn cmd_ablate(
    config: &RunConfig,
    weights: Option<String>,
    run_dir: Option<PathBuf>,
    candidates: Option<PathBuf>,
    baseline: Option<PathBuf>,
) -> Result<()> {
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let testset = holdout_scenes(config.seed, config.scenes_holdout);
    let schedule = config.schedule()?;

    match weights {
        None => {
            let run_dir = run_dir.unwrap_or_else(|| config.out_dir.clone());
            let methods = load_method_checkpoints(&run_dir)?;
            let rows = run_method_ablation(
                &methods,
                &testset,
                &schedule,
                &config.strategy()?,
                config.eval_tie_threshold,
                config.seed,
                Some(out),
            )?;
            write_method_csv(&out.join("methods.csv"), &rows)?;
            write_plot_csv(&out.join("plot.csv"), &rows)?;
            let table = render_method_table(&rows);
            fs::write(out.join("methods.txt"), &table)
                .map_err(|e| Error::io(&out.join("methods.txt"), e))?;
            config.write_snapshot(out)?;
            print!("{table}");
        }
        Some(spec) => {
            let strategies = if spec.is_empty() {
                WeightStrategy::ablation_grid()
            } else {
                let path = PathBuf::from(&spec);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let names: Vec<String> =
                    serde_json::from_str(&text).map_err(|e| Error::Format {
                        path: spec.clone(),
                        what: "strategy list",
                        detail: e.to_string(),
                    })?;
                names
                    .iter()
                    .map(|s| WeightStrategy::parse(s))
                    .collect::<Result<_>>()?
            };
            let candidates_dir = require(
                candidates.or_else(|| config.candidates_dir.clone()),
                "paths.candidates",
                "ablate --weights",
            )?;
            let baseline_path = require(
                baseline.or_else(|| config.baseline_checkpoint.clone()),
                "paths.baseline",
                "ablate --weights",
            )?;
            // Stored raw score vectors are strategy-independent; load under
            // uniform and re-aggregate per strategy inside the ablation.
            let (sets, _) = load_candidate_store(&candidates_dir, &WeightStrategy::uniform())?;
            let reference = load_checkpoint(&baseline_path)?;
            let rows = run_weight_ablation(
                &sets,
                &reference,
                &strategies,
                config.pairs_normalization,
                &config.preference_config(TrainMode::Gapo),
                &testset,
                &schedule,
                config.eval_tie_threshold,
                config.seed,
            )?;
            write_weight_csv(&out.join("weights.csv"), &rows)?;
            let table = render_weight_table(&rows);
            fs::write(out.join("weights.txt"), &table)
                .map_err(|e| Error::io(&out.join("weights.txt"), e))?;
            config.write_snapshot(out)?;
            print!("{table}");
        }
    }
    Ok(())
}

// Re-export for integration tests that assemble pipelines programmatically.
pub use dataset::list_checkpoints;
