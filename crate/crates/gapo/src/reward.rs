//! The analytic judge: six per-dimension scores in [0, 1] and their weighted
//! aggregation.
//!
//! Dimensions, in the canonical order used by every vector, CSV column, and
//! weight string: smoothness, motion, appeal, text consistency, image
//! consistency, character consistency. Each scorer is a closed-form function
//! of the clip (plus condition / initial frame / identity reference where
//! relevant), so scores are exactly reproducible from stored clips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenes::{background_value, canonical_identity_frame, SceneCondition, IDENTITY_COUNT};
use crate::video::{Frame, VideoTensor};

/// Sharpness of the smoothness score's exponential.
pub const SMOOTHNESS_SHARPNESS: f64 = 50.0;
/// Displacement (px/frame) at which the motion score reaches 0.5.
pub const MOTION_HALF_SCALE: f64 = 0.5;
/// Segmentation threshold above the local background value.
pub const SEGMENT_THRESHOLD_OFFSET: f64 = 0.15;
pub const HISTOGRAM_BINS: usize = 32;
pub const APPEAL_KEYFRAMES: usize = 4;
/// Multiplier mapping per-frame contrast (std) into [0, 1].
pub const APPEAL_CONTRAST_SCALE: f64 = 4.0;
pub const DESCRIPTOR_RINGS: usize = 8;

pub const DIMENSION_NAMES: [&str; 6] = [
    "smooth",
    "motion",
    "appeal",
    "text_consistency",
    "image_consistency",
    "character_consistency",
];

/// Binary character mask over one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

impl Mask {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&p| p)
    }
}

/// Threshold against the background gradient, then keep the largest
/// 4-connected component (ties broken by scan order of discovery).
pub fn segment_character(frame: &[f64], height: usize, width: usize) -> Mask {
    assert_eq!(frame.len(), height * width, "frame length mismatch");
    let candidate: Vec<bool> = (0..height * width)
        .map(|i| {
            let (y, x) = (i / width, i % width);
            frame[i] > background_value(y, x, height, width) + SEGMENT_THRESHOLD_OFFSET
        })
        .collect();

    let mut component = vec![usize::MAX; height * width];
    let mut best: Option<(usize, usize)> = None; // (component id, size)
    let mut next_id = 0;
    let mut stack = Vec::new();
    for start in 0..height * width {
        if !candidate[start] || component[start] != usize::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        let mut size = 0;
        stack.push(start);
        component[start] = id;
        while let Some(i) = stack.pop() {
            size += 1;
            let (y, x) = (i / width, i % width);
            let mut visit = |j: usize| {
                if candidate[j] && component[j] == usize::MAX {
                    component[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if best.map_or(true, |(_, s)| size > s) {
            best = Some((id, size));
        }
    }

    let pixels = match best {
        None => vec![false; height * width],
        Some((id, _)) => component.iter().map(|&c| c == id).collect(),
    };
    Mask {
        height,
        width,
        pixels,
    }
}

/// Intensity-weighted centroid [cx, cy] of the masked pixels.
fn mask_centroid(frame: &[f64], mask: &Mask) -> Option<[f64; 2]> {
    let mut wsum = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.contains(y, x) {
                let w = frame[y * mask.width + x];
                wsum += w;
                cx += w * x as f64;
                cy += w * y as f64;
            }
        }
    }
    if wsum <= 0.0 {
        None
    } else {
        Some([cx / wsum, cy / wsum])
    }
}

fn per_frame_centroids(video: &VideoTensor) -> Vec<Option<[f64; 2]>> {
    let shape = video.shape();
    (0..shape.frames)
        .map(|f| {
            let frame = video.frame(f);
            let mask = segment_character(frame, shape.height, shape.width);
            if mask.is_empty() {
                None
            } else {
                mask_centroid(frame, &mask)
            }
        })
        .collect()
}

/// Temporal smoothness: `exp(-50 * mean squared second difference)`.
/// Needs at least 3 frames.
pub fn score_smoothness(video: &VideoTensor) -> Result<f64> {
    Ok((-SMOOTHNESS_SHARPNESS * crate::scenes::second_difference_energy(video)?).exp())
}

/// Motion magnitude: mean frame-to-frame character displacement `d` mapped
/// through the saturating `d / (d + 0.5)`. Clips with no trackable character
/// in consecutive frames score 0.
pub fn score_motion(video: &VideoTensor) -> f64 {
    let centroids = per_frame_centroids(video);
    let mut count = 0.0;
    let mut total = 0.0;
    for pair in centroids.windows(2) {
        if let (Some(a), Some(b)) = (pair[0], pair[1]) {
            total += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            count += 1.0;
        }
    }
    if count == 0.0 {
        return 0.0;
    }
    let d = total / count;
    d / (d + MOTION_HALF_SCALE)
}

/// Greedy farthest-point keyframe selection: seed with frame 0, then
/// repeatedly add the frame farthest (L2 over pixels) from the selected set;
/// ties go to the lower index. Returns sorted indices.
pub fn extract_keyframes(video: &VideoTensor, k: usize) -> Result<Vec<usize>> {
    let frames = video.shape().frames;
    if k == 0 || k > frames {
        return Err(Error::InvalidArgument(format!(
            "keyframe count {k} outside 1..={frames}"
        )));
    }
    let dist2 = |a: usize, b: usize| -> f64 {
        video
            .frame(a)
            .iter()
            .zip(video.frame(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut selected = vec![0usize];
    // min squared distance from each frame to the selected set
    let mut min_d2: Vec<f64> = (0..frames).map(|f| dist2(f, 0)).collect();
    while selected.len() < k {
        let mut best = 0;
        let mut best_d2 = f64::NEG_INFINITY;
        for f in 0..frames {
            if !selected.contains(&f) && min_d2[f] > best_d2 {
                best = f;
                best_d2 = min_d2[f];
            }
        }
        selected.push(best);
        for f in 0..frames {
            min_d2[f] = min_d2[f].min(dist2(f, best));
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank - 1]
}

/// Visual appeal over up to 4 keyframes: half contrast (population std,
/// scaled), half dynamic range (p95 - p5).
pub fn score_appeal(video: &VideoTensor) -> f64 {
    let k = APPEAL_KEYFRAMES.min(video.shape().frames);
    let keyframes = extract_keyframes(video, k).expect("k is clamped to the frame count");
    let mut total = 0.0;
    for &f in &keyframes {
        let frame = video.frame(f);
        let n = frame.len() as f64;
        let mean = frame.iter().sum::<f64>() / n;
        let var = (frame.iter().map(|v| v * v).sum::<f64>() / n - mean * mean).max(0.0);
        let contrast = (APPEAL_CONTRAST_SCALE * var.sqrt()).min(1.0);
        let mut sorted = frame.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("clip values are finite"));
        let range = percentile(&sorted, 95.0) - percentile(&sorted, 5.0);
        total += 0.5 * contrast + 0.5 * range;
    }
    total / keyframes.len() as f64
}

/// Agreement with the conditioning text (velocity and brightness):
/// `exp(-|v_measured - v_cond|) * exp(-|b_measured - b_cond|)`.
///
/// Velocity is the vector mean of frame-to-frame character displacements
/// (zero when never trackable); brightness is the peak masked value.
pub fn score_text_consistency(video: &VideoTensor, cond: &SceneCondition) -> f64 {
    let shape = video.shape();
    let centroids = per_frame_centroids(video);
    let mut count = 0.0;
    let mut sum = [0.0, 0.0];
    for pair in centroids.windows(2) {
        if let (Some(a), Some(b)) = (pair[0], pair[1]) {
            sum[0] += b[0] - a[0];
            sum[1] += b[1] - a[1];
            count += 1.0;
        }
    }
    let v = if count == 0.0 {
        [0.0, 0.0]
    } else {
        [sum[0] / count, sum[1] / count]
    };
    let dv = ((v[0] - cond.velocity[0]).powi(2) + (v[1] - cond.velocity[1]).powi(2)).sqrt();

    let mut b_meas = 0.0f64;
    for f in 0..shape.frames {
        let frame = video.frame(f);
        let mask = segment_character(frame, shape.height, shape.width);
        for y in 0..shape.height {
            for x in 0..shape.width {
                if mask.contains(y, x) {
                    b_meas = b_meas.max(frame[y * shape.width + x]);
                }
            }
        }
    }
    (-dv).exp() * (-(b_meas - cond.brightness).abs()).exp()
}

fn histogram(values: &[f64]) -> [f64; HISTOGRAM_BINS] {
    let mut h = [0.0; HISTOGRAM_BINS];
    for &v in values {
        let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        h[bin] += 1.0;
    }
    let total = values.len() as f64;
    for b in &mut h {
        *b /= total;
    }
    h
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= 0.0 || nb <= 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Palette agreement with the conditioning image: mean cosine between each
/// frame's 32-bin intensity histogram and the initial frame's, mapped to
/// [0, 1] via `(c + 1) / 2`.
pub fn score_image_consistency(video: &VideoTensor, initial_frame: &Frame) -> Result<f64> {
    let shape = video.shape();
    if initial_frame.height() != shape.height || initial_frame.width() != shape.width {
        return Err(Error::Shape(format!(
            "initial frame {}x{} vs clip {}",
            initial_frame.height(),
            initial_frame.width(),
            shape
        )));
    }
    let ref_hist = histogram(initial_frame.data());
    let mean_cos = (0..shape.frames)
        .map(|f| cosine(&histogram(video.frame(f)), &ref_hist))
        .sum::<f64>()
        / shape.frames as f64;
    Ok((mean_cos + 1.0) / 2.0)
}

/// 8-ring radial intensity descriptor around the masked centroid, L2
/// normalized. Rings are 1 px wide; everything at radius >= 7 folds into the
/// outer ring. Zero vector when the mask is empty.
pub fn radial_descriptor(frame: &[f64], mask: &Mask) -> [f64; DESCRIPTOR_RINGS] {
    let mut desc = [0.0; DESCRIPTOR_RINGS];
    let Some(c) = mask_centroid(frame, mask) else {
        return desc;
    };
    let mut counts = [0.0; DESCRIPTOR_RINGS];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.contains(y, x) {
                let r = ((x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2)).sqrt();
                let ring = (r.floor() as usize).min(DESCRIPTOR_RINGS - 1);
                desc[ring] += frame[y * mask.width() + x];
                counts[ring] += 1.0;
            }
        }
    }
    for (d, n) in desc.iter_mut().zip(counts) {
        if n > 0.0 {
            *d /= n;
        }
    }
    let norm = desc.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for d in &mut desc {
            *d /= norm;
        }
    }
    desc
}

/// Stored reference feature for an identity: the unit-normalized radial
/// descriptor of its canonical centered rendering.
pub fn reference_feature(id: u8) -> [f64; DESCRIPTOR_RINGS] {
    assert!((id as usize) < IDENTITY_COUNT, "identity {id} out of range");
    let frame = canonical_identity_frame(id);
    let mask = segment_character(frame.data(), frame.height(), frame.width());
    radial_descriptor(frame.data(), &mask)
}

/// Identity preservation: per frame the cosine between the frame's radial
/// descriptor and the stored reference, mapped via `(c + 1) / 2`; frames
/// with no character contribute 0. The reference must be unit-normalized.
pub fn score_character_consistency(
    video: &VideoTensor,
    ref_feature: &[f64; DESCRIPTOR_RINGS],
) -> Result<f64> {
    let norm = ref_feature.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "reference feature norm {norm} is not 1"
        )));
    }
    let shape = video.shape();
    let mut total = 0.0;
    for f in 0..shape.frames {
        let frame = video.frame(f);
        let mask = segment_character(frame, shape.height, shape.width);
        if mask.is_empty() {
            continue; // contributes 0
        }
        let desc = radial_descriptor(frame, &mask);
        let c = desc
            .iter()
            .zip(ref_feature)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0);
        total += (c + 1.0) / 2.0;
    }
    Ok(total / shape.frames as f64)
}

/// A named, normalized weighting over the six dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightStrategy {
    name: String,
    weights: [f64; 6],
}

impl WeightStrategy {
    pub fn new(name: &str, raw: [f64; 6]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) || sum <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weights {raw:?} must be non-negative with positive sum"
            )));
        }
        let mut weights = raw;
        for w in &mut weights {
            *w /= sum;
        }
        Ok(WeightStrategy {
            name: name.to_string(),
            weights,
        })
    }

    /// Parse `"uniform"` or a ratio string like `"3:5:3:3:3:3"` (dimension
    /// order: smooth, motion, appeal, text, image, character).
    pub fn parse(s: &str) -> Result<Self> {
        if s == "uniform" {
            return WeightStrategy::new("uniform", [1.0; 6]);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(Error::InvalidArgument(format!(
                "weight strategy {s:?} needs 6 ratio components"
            )));
        }
        let mut raw = [0.0; 6];
        for (slot, part) in raw.iter_mut().zip(&parts) {
            *slot = part.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("bad weight component {part:?} in {s:?}"))
            })?;
        }
        WeightStrategy::new(s, raw)
    }

    pub fn uniform() -> Self {
        WeightStrategy::new("uniform", [1.0; 6]).expect("uniform weights are valid")
    }

    /// The weighting ablation grid shipped with the lab.
    pub fn ablation_grid() -> Vec<WeightStrategy> {
        ["0:0:1:1:1:1", "3:5:3:3:3:3", "3:3:6:4:4:4", "1:1:1:1:1:1"]
            .iter()
            .map(|s| WeightStrategy::parse(s).expect("grid strategies are valid"))
            .collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn weights(&self) -> [f64; 6] {
        self.weights
    }
}

/// All six scores plus their weighted aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub smooth: f64,
    pub motion: f64,
    pub appeal: f64,
    pub text_consistency: f64,
    pub image_consistency: f64,
    pub character_consistency: f64,
    pub weights: [f64; 6],
    pub aggregate: f64,
}

impl RewardVector {
    pub fn scores(&self) -> [f64; 6] {
        [
            self.smooth,
            self.motion,
            self.appeal,
            self.text_consistency,
            self.image_consistency,
            self.character_consistency,
        ]
    }
}

/// Weighted mean of six per-dimension scores (weights already sum to 1).
pub fn aggregate_reward(scores: [f64; 6], strategy: &WeightStrategy) -> Result<RewardVector> {
    for (name, s) in DIMENSION_NAMES.iter().zip(scores) {
        if !s.is_finite() || !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!(
                "{name} score {s} outside [0, 1]"
            )));
        }
    }
    let weights = strategy.weights();
    let aggregate = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
    Ok(RewardVector {
        smooth: scores[0],
        motion: scores[1],
        appeal: scores[2],
        text_consistency: scores[3],
        image_consistency: scores[4],
        character_consistency: scores[5],
        weights,
        aggregate,
    })
}

/// Score a clip on all six dimensions and aggregate.
pub fn score_clip(
    video: &VideoTensor,
    cond: &SceneCondition,
    initial_frame: &Frame,
    strategy: &WeightStrategy,
) -> Result<RewardVector> {
    cond.validate()?;
    let scores = [
        score_smoothness(video)?,
        score_motion(video),
        score_appeal(video),
        score_text_consistency(video, cond),
        score_image_consistency(video, initial_frame)?,
        score_character_consistency(video, &reference_feature(cond.character_id))?,
    ];
    aggregate_reward(scores, strategy)
}
