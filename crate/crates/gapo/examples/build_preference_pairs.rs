//! Best-of-N / worst-of-N preference pairs: sample candidates from a
//! reference model, score them, and keep the extremes.

use gapo::diffusion::{DenoiserParams, NetworkLayout, NoiseSchedule, ScheduleKind};
use gapo::pairs::{build_candidate_sets, pairs_from_sets, RewardNormalization};
use gapo::reward::WeightStrategy;
use gapo::scenes::{generate_scene, scene_seed, CLIP_SHAPE};

fn main() -> gapo::Result<()> {
    let scenes: Vec<_> = (0..6).map(|i| generate_scene(scene_seed(11, i))).collect();
    let schedule = NoiseSchedule::build(6, ScheduleKind::Cosine)?;
    let reference = DenoiserParams::seeded_init(NetworkLayout::for_clip(CLIP_SHAPE), 1);
    let strategy = WeightStrategy::uniform();

    let n = 4;
    let sets = build_candidate_sets(&reference, &scenes, n, 1000, &schedule, &strategy)?;
    println!("scene  candidate aggregates");
    for (i, set) in sets.iter().enumerate() {
        let scores: Vec<String> = set
            .rewards
            .iter()
            .map(|r| format!("{:.4}", r.aggregate))
            .collect();
        println!("{i:>5}  {}", scores.join("  "));
    }

    let dataset = pairs_from_sets(&sets, RewardNormalization::Identity)?;
    println!(
        "\n{} pairs kept, {} degenerate sets skipped",
        dataset.pairs.len(),
        dataset.skipped_degenerate
    );
    let mean_gap: f64 = dataset
        .pairs
        .iter()
        .map(|p| p.winner_reward - p.loser_reward)
        .sum::<f64>()
        / dataset.pairs.len() as f64;
    println!("mean winner-loser reward gap: {mean_gap:.4}");
    for pair in &dataset.pairs {
        assert!(pair.winner_reward >= pair.loser_reward);
    }

    // Min-max normalization pins every pair to gap 1: useful to see how the
    // gap-aware weighting degenerates to the plain method.
    let minmax = pairs_from_sets(&sets, RewardNormalization::PerSetMinMax)?;
    println!(
        "under per-set min-max every gap is {:.1}",
        minmax.pairs[0].winner_reward - minmax.pairs[0].loser_reward
    );
    Ok(())
}
