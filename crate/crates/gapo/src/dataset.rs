//! On-disk layouts for the lab's three artifact kinds: scene datasets,
//! candidate stores, and preference-pair datasets.
//!
//! Each artifact is a directory with one JSON manifest plus clip files in
//! `clips/`. Clip payloads round-trip bit-exactly (values are f32-quantized
//! at creation), and manifests are written with a fixed field order, so a
//! rerun with the same seed reproduces every output byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gvid;
use crate::losses::PreferencePair;
use crate::pairs::{CandidateSet, PairDataset, PairProvenance, RewardNormalization};
use crate::reward::{aggregate_reward, RewardVector, WeightStrategy};
use crate::scenes::{generate_scene, SceneCondition, SceneInstance};
use crate::video::VideoTensor;

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.display().to_string(),
        what,
        detail: e.to_string(),
    })
}

fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format {
        path: path.display().to_string(),
        what: "manifest serialization",
        detail: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct SceneEntry {
    index: u64,
    seed: u64,
    condition: SceneCondition,
    start: [f64; 2],
    clip: String,
}

#[derive(Serialize, Deserialize)]
struct SceneManifest {
    kind: String,
    version: u32,
    seed: u64,
    count: usize,
    scenes: Vec<SceneEntry>,
}

pub const SCENE_MANIFEST: &str = "manifest.json";

/// Write a scene dataset directory: `manifest.json` plus one clip file per
/// scene under `clips/`.
pub fn write_scene_dataset(dir: &Path, scenes: &[SceneInstance], dataset_seed: u64) -> Result<()> {
    let clips_dir = dir.join("clips");
    fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let rel = format!("clips/scene_{i:05}.gvid");
        gvid::write_clip(&dir.join(&rel), &scene.gt_video)?;
        entries.push(SceneEntry {
            index: i as u64,
            seed: scene.seed,
            condition: scene.condition,
            start: scene.start,
            clip: rel,
        });
    }
    write_manifest(
        &dir.join(SCENE_MANIFEST),
        &SceneManifest {
            kind: "scene-dataset".into(),
            version: 1,
            seed: dataset_seed,
            count: scenes.len(),
            scenes: entries,
        },
    )
}

/// Load a scene dataset directory; returns the scenes and the dataset seed
/// recorded in the manifest.
pub fn load_scene_dataset(dir: &Path) -> Result<(Vec<SceneInstance>, u64)> {
    let manifest_path = dir.join(SCENE_MANIFEST);
    let manifest: SceneManifest = read_manifest(&manifest_path, "scene dataset manifest")?;
    if manifest.kind != "scene-dataset" {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            what: "scene dataset manifest",
            detail: format!("kind {:?} is not \"scene-dataset\"", manifest.kind),
        });
    }
    if manifest.scenes.len() != manifest.count {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            what: "scene dataset manifest",
            detail: format!(
                "count {} does not match {} scene entries",
                manifest.count,
                manifest.scenes.len()
            ),
        });
    }
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for entry in &manifest.scenes {
        entry.condition.validate()?;
        let gt_video = gvid::read_clip(&dir.join(&entry.clip))?;
        scenes.push(SceneInstance {
            seed: entry.seed,
            condition: entry.condition,
            start: entry.start,
            initial_frame: gt_video.first_frame(),
            gt_video,
        });
    }
    Ok((scenes, manifest.seed))
}

#[derive(Serialize, Deserialize)]
struct CandidateEntry {
    sample_seed: u64,
    clip: String,
    /// Raw per-dimension scores in canonical order; aggregation is
    /// re-derivable under any weight strategy.
    scores: [f64; 6],
}

#[derive(Serialize, Deserialize)]
struct CandidateSceneEntry {
    scene_seed: u64,
    candidates: Vec<CandidateEntry>,
}

#[derive(Serialize, Deserialize)]
struct CandidateManifest {
    kind: String,
    version: u32,
    base_seed: u64,
    candidates_per_scene: usize,
    scenes: Vec<CandidateSceneEntry>,
}

pub const CANDIDATE_MANIFEST: &str = "candidates.json";

/// Write a candidate store: every sampled candidate clip plus its raw
/// six-dimension scores, so pairs can later be rebuilt under any weighting
/// strategy without regenerating or rescoring clips.
pub fn write_candidate_store(dir: &Path, sets: &[CandidateSet], base_seed: u64) -> Result<()> {
    let clips_dir = dir.join("clips");
    fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let per_scene = sets.first().map_or(0, |s| s.clips.len());
    let mut scenes = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        set.validate()?;
        let mut candidates = Vec::with_capacity(set.clips.len());
        for (k, clip) in set.clips.iter().enumerate() {
            let rel = format!("clips/cand_{i:05}_{k}.gvid");
            gvid::write_clip(&dir.join(&rel), clip)?;
            candidates.push(CandidateEntry {
                sample_seed: set.sample_seeds[k],
                clip: rel,
                scores: set.rewards[k].scores(),
            });
        }
        scenes.push(CandidateSceneEntry {
            scene_seed: set.scene.seed,
            candidates,
        });
    }
    write_manifest(
        &dir.join(CANDIDATE_MANIFEST),
        &CandidateManifest {
            kind: "candidate-store".into(),
            version: 1,
            base_seed,
            candidates_per_scene: per_scene,
            scenes,
        },
    )
}

/// Load a candidate store, re-aggregating the stored raw scores under
/// `strategy`. Scene conditions and initial frames are regenerated from the
/// recorded scene seeds.
pub fn load_candidate_store(
    dir: &Path,
    strategy: &WeightStrategy,
) -> Result<(Vec<CandidateSet>, u64)> {
    let manifest_path = dir.join(CANDIDATE_MANIFEST);
    let manifest: CandidateManifest = read_manifest(&manifest_path, "candidate store manifest")?;
    if manifest.kind != "candidate-store" {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            what: "candidate store manifest",
            detail: format!("kind {:?} is not \"candidate-store\"", manifest.kind),
        });
    }
    let mut sets = Vec::with_capacity(manifest.scenes.len());
    for entry in &manifest.scenes {
        let scene = generate_scene(entry.scene_seed);
        let mut clips = Vec::with_capacity(entry.candidates.len());
        let mut rewards: Vec<RewardVector> = Vec::with_capacity(entry.candidates.len());
        let mut sample_seeds = Vec::with_capacity(entry.candidates.len());
        for cand in &entry.candidates {
            clips.push(gvid::read_clip(&dir.join(&cand.clip))?);
            rewards.push(aggregate_reward(cand.scores, strategy)?);
            sample_seeds.push(cand.sample_seed);
        }
        let set = CandidateSet {
            scene,
            clips,
            rewards,
            sample_seeds,
        };
        set.validate()?;
        sets.push(set);
    }
    Ok((sets, manifest.base_seed))
}

#[derive(Serialize, Deserialize)]
struct PairEntry {
    index: u64,
    scene_seed: u64,
    winner_sample_seed: u64,
    loser_sample_seed: u64,
    winner_reward: f64,
    loser_reward: f64,
    condition: SceneCondition,
    winner_clip: String,
    loser_clip: String,
}

#[derive(Serialize, Deserialize)]
struct PairManifest {
    kind: String,
    version: u32,
    base_seed: u64,
    candidates_per_scene: usize,
    strategy: String,
    normalization: RewardNormalization,
    skipped_degenerate: usize,
    pairs: Vec<PairEntry>,
}

pub const PAIR_MANIFEST: &str = "pairs.json";

/// Everything recorded about how a pair dataset was built.
#[derive(Clone, Debug)]
pub struct PairDatasetMeta {
    pub base_seed: u64,
    pub candidates_per_scene: usize,
    pub strategy: String,
    pub normalization: RewardNormalization,
}

/// Write a preference-pair dataset: `pairs.json` plus winner/loser clips.
pub fn write_pair_dataset(dir: &Path, dataset: &PairDataset, meta: &PairDatasetMeta) -> Result<()> {
    if dataset.pairs.len() != dataset.provenance.len() {
        return Err(Error::InvalidArgument(format!(
            "{} pairs with {} provenance rows",
            dataset.pairs.len(),
            dataset.provenance.len()
        )));
    }
    let clips_dir = dir.join("clips");
    fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.pairs.len());
    for (i, (pair, prov)) in dataset.pairs.iter().zip(&dataset.provenance).enumerate() {
        pair.validate()?;
        let winner_rel = format!("clips/pair_{i:05}_w.gvid");
        let loser_rel = format!("clips/pair_{i:05}_l.gvid");
        gvid::write_clip(&dir.join(&winner_rel), &pair.winner)?;
        gvid::write_clip(&dir.join(&loser_rel), &pair.loser)?;
        entries.push(PairEntry {
            index: i as u64,
            scene_seed: prov.scene_seed,
            winner_sample_seed: prov.winner_sample_seed,
            loser_sample_seed: prov.loser_sample_seed,
            winner_reward: pair.winner_reward,
            loser_reward: pair.loser_reward,
            condition: pair.condition,
            winner_clip: winner_rel,
            loser_clip: loser_rel,
        });
    }
    write_manifest(
        &dir.join(PAIR_MANIFEST),
        &PairManifest {
            kind: "preference-pairs".into(),
            version: 1,
            base_seed: meta.base_seed,
            candidates_per_scene: meta.candidates_per_scene,
            strategy: meta.strategy.clone(),
            normalization: meta.normalization,
            skipped_degenerate: dataset.skipped_degenerate,
            pairs: entries,
        },
    )
}

/// Load a preference-pair dataset. Initial frames are regenerated from the
/// recorded scene seeds; the stored condition must match the regenerated
/// scene exactly, which guards against manifests paired with the wrong
/// clips.
pub fn load_pair_dataset(dir: &Path) -> Result<(PairDataset, PairDatasetMeta)> {
    let manifest_path = dir.join(PAIR_MANIFEST);
    let manifest: PairManifest = read_manifest(&manifest_path, "pair dataset manifest")?;
    if manifest.kind != "preference-pairs" {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            what: "pair dataset manifest",
            detail: format!("kind {:?} is not \"preference-pairs\"", manifest.kind),
        });
    }
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    let mut provenance = Vec::with_capacity(manifest.pairs.len());
    for entry in &manifest.pairs {
        let scene = generate_scene(entry.scene_seed);
        if scene.condition != entry.condition {
            return Err(Error::Format {
                path: manifest_path.display().to_string(),
                what: "pair dataset manifest",
                detail: format!(
                    "pair {} condition does not match scene seed {}",
                    entry.index, entry.scene_seed
                ),
            });
        }
        let winner = gvid::read_clip(&dir.join(&entry.winner_clip))?;
        let loser = gvid::read_clip(&dir.join(&entry.loser_clip))?;
        let pair = PreferencePair {
            condition: scene.condition,
            initial_frame: scene.initial_frame,
            winner,
            loser,
            winner_reward: entry.winner_reward,
            loser_reward: entry.loser_reward,
        };
        pair.validate()?;
        pairs.push(pair);
        provenance.push(PairProvenance {
            scene_seed: entry.scene_seed,
            winner_sample_seed: entry.winner_sample_seed,
            loser_sample_seed: entry.loser_sample_seed,
        });
    }
    Ok((
        PairDataset {
            pairs,
            provenance,
            skipped_degenerate: manifest.skipped_degenerate,
        },
        PairDatasetMeta {
            base_seed: manifest.base_seed,
            candidates_per_scene: manifest.candidates_per_scene,
            strategy: manifest.strategy.clone(),
            normalization: manifest.normalization,
        },
    ))
}

/// Write one clip to a standalone file (the `score` entry point reads these).
pub fn write_clip_file(path: &Path, clip: &VideoTensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    gvid::write_clip(path, clip)
}

pub fn read_clip_file(path: &Path) -> Result<VideoTensor> {
    gvid::read_clip(path)
}

/// List the numbered checkpoint files in a training output directory,
/// sorted by step.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("step_") && name.ends_with(".gapo") {
            found.push(path);
        }
    }
    found.sort();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserParams, NetworkLayout, NoiseSchedule, ScheduleKind};
    use crate::pairs::build_dataset;
    use crate::scenes::{scene_seed, CLIP_SHAPE};

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("gapo-ds-{tag}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).unwrap();
        }
        dir
    }

    #[test]
    fn scene_dataset_round_trips_exactly() {
        let scenes: Vec<SceneInstance> =
            (0..5).map(|i| generate_scene(scene_seed(3, i))).collect();
        let dir = temp_dir("scenes");
        write_scene_dataset(&dir, &scenes, 3).unwrap();
        let (back, seed) = load_scene_dataset(&dir).unwrap();
        assert_eq!(seed, 3);
        assert_eq!(back, scenes);
    }

    #[test]
    fn scene_manifest_rejects_wrong_kind() {
        let scenes: Vec<SceneInstance> = (0..2).map(|i| generate_scene(scene_seed(4, i))).collect();
        let dir = temp_dir("scenes-kind");
        write_scene_dataset(&dir, &scenes, 4).unwrap();
        let path = dir.join(SCENE_MANIFEST);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("scene-dataset", "who-knows");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_scene_dataset(&dir),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pair_dataset_round_trips_and_checks_condition() {
        let scenes: Vec<SceneInstance> =
            (0..3).map(|i| generate_scene(scene_seed(9, i))).collect();
        let params = DenoiserParams::seeded_init(NetworkLayout::for_clip(CLIP_SHAPE), 1);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let dataset = build_dataset(
            &params,
            &scenes,
            2,
            100,
            &schedule,
            &WeightStrategy::uniform(),
            RewardNormalization::Identity,
        )
        .unwrap();
        assert!(!dataset.pairs.is_empty());
        let meta = PairDatasetMeta {
            base_seed: 100,
            candidates_per_scene: 2,
            strategy: "uniform".into(),
            normalization: RewardNormalization::Identity,
        };
        let dir = temp_dir("pairs");
        write_pair_dataset(&dir, &dataset, &meta).unwrap();
        let (back, back_meta) = load_pair_dataset(&dir).unwrap();
        assert_eq!(back.pairs, dataset.pairs);
        assert_eq!(back.skipped_degenerate, dataset.skipped_degenerate);
        assert_eq!(back_meta.candidates_per_scene, 2);

        // Corrupt the recorded scene seed: the regenerated condition no
        // longer matches and loading must fail.
        let path = dir.join(PAIR_MANIFEST);
        let text = fs::read_to_string(&path).unwrap();
        let wrong = text.replacen(
            &format!("\"scene_seed\": {}", dataset.provenance[0].scene_seed),
            &format!("\"scene_seed\": {}", dataset.provenance[0].scene_seed ^ 1),
            1,
        );
        assert_ne!(wrong, text);
        fs::write(&path, wrong).unwrap();
        assert!(matches!(load_pair_dataset(&dir), Err(Error::Format { .. })));
    }

    #[test]
    fn candidate_store_reaggregates_under_new_strategy() {
        let scenes: Vec<SceneInstance> =
            (0..2).map(|i| generate_scene(scene_seed(11, i))).collect();
        let params = DenoiserParams::seeded_init(NetworkLayout::for_clip(CLIP_SHAPE), 2);
        let schedule = NoiseSchedule::build(4, ScheduleKind::Cosine).unwrap();
        let uniform = WeightStrategy::uniform();
        let sets: Vec<CandidateSet> = scenes
            .iter()
            .enumerate()
            .map(|(i, scene)| {
                crate::pairs::build_candidates(
                    &params,
                    scene,
                    3,
                    200 + (i * 3) as u64,
                    &schedule,
                    &uniform,
                )
                .unwrap()
            })
            .collect();
        let dir = temp_dir("cands");
        write_candidate_store(&dir, &sets, 200).unwrap();

        let skewed = WeightStrategy::parse("0:0:1:1:1:1").unwrap();
        let (back, base_seed) = load_candidate_store(&dir, &skewed).unwrap();
        assert_eq!(base_seed, 200);
        assert_eq!(back.len(), sets.len());
        for (set, orig) in back.iter().zip(&sets) {
            assert_eq!(set.scene, orig.scene);
            assert_eq!(set.sample_seeds, orig.sample_seeds);
            for (r, o) in set.rewards.iter().zip(&orig.rewards) {
                // Same raw scores, different aggregation.
                assert_eq!(r.scores(), o.scores());
                let expected = aggregate_reward(o.scores(), &skewed).unwrap().aggregate;
                assert!((r.aggregate - expected).abs() <= 1e-15);
            }
            for (c, o) in set.clips.iter().zip(&orig.clips) {
                assert_eq!(c, o);
            }
        }
    }

    #[test]
    fn clip_file_round_trip() {
        let scene = generate_scene(77);
        let dir = temp_dir("clip");
        let path = dir.join("x").join("clip.gvid");
        write_clip_file(&path, &scene.gt_video).unwrap();
        assert_eq!(read_clip_file(&path).unwrap(), scene.gt_video);
    }
}
