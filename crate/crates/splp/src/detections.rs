//! Synthetic detector stand-in: samples ground-truth scenes, generates
//! noisy part candidates from them, and selects the representative subset
//! fed to the solver.
//!
//! All randomness flows through a ChaCha8 stream seeded explicitly, so a
//! fixture is reproducible byte-for-byte from its recorded seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BoundingBox, Detection, DetectionSet, GroundTruthScene, GtPart, GtPerson, ImageSize,
    PartClass,
};
use crate::skeleton;

/// Default representative subset size.
pub const DEFAULT_SUBSET_SIZE: usize = 100;

/// How raw class similarity scores become unary probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryNorm {
    /// Normalized over classes.
    Softmax,
    /// Independent per-class scores.
    Sigmoid,
}

/// Noise model of the synthetic detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Location noise per axis, pixels.
    pub loc_sigma: f64,
    /// Log-scale noise, fraction.
    pub scale_sigma: f64,
    /// Sharpness of the correct-class probability.
    pub unary_concentration: f64,
    /// Expected false candidates per image.
    pub clutter_rate: f64,
    /// Probability a visible part produces no candidate at all.
    pub miss_rate: f64,
    /// Expected candidates per non-missed visible part (>= 1); the count is
    /// `1 + Poisson(dup_mean - 1)`.
    pub dup_mean: f64,
    pub unary_norm: UnaryNorm,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            loc_sigma: 4.0,
            scale_sigma: 0.1,
            unary_concentration: 8.0,
            clutter_rate: 5.0,
            miss_rate: 0.1,
            dup_mean: 1.5,
            unary_norm: UnaryNorm::Softmax,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::InvalidInput(format!(
                "miss_rate {} outside [0, 1]",
                self.miss_rate
            )));
        }
        if self.loc_sigma < 0.0 || self.scale_sigma < 0.0 || self.clutter_rate < 0.0 {
            return Err(Error::InvalidInput("noise rates must be non-negative".into()));
        }
        if self.dup_mean < 1.0 {
            return Err(Error::InvalidInput(format!(
                "dup_mean {} must be at least 1",
                self.dup_mean
            )));
        }
        Ok(())
    }
}

/// Where a candidate came from: a ground-truth part slot, or clutter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartOrigin {
    pub person: usize,
    pub class_id: usize,
}

/// A generated detection set plus the provenance of each candidate
/// (None = clutter). Training uses provenance to build labeled pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub detections: DetectionSet,
    pub provenance: Vec<Option<PartOrigin>>,
}

/// Configuration of the ground-truth scene sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub persons_min: usize,
    pub persons_max: usize,
    pub image: ImageSize,
    /// Head size of every person, pixels.
    pub scale: f64,
    /// Log-normal jitter of the per-person scale.
    pub scale_jitter: f64,
    /// Per-joint Gaussian jitter as a fraction of the person scale.
    pub pose_jitter: f64,
    /// Whole-body rotation jitter, degrees.
    pub rotation_jitter_deg: f64,
    /// Probability each non-head part is occluded.
    pub occlusion_rate: f64,
    /// Minimum distance between person centers, in person scales.
    pub min_separation: f64,
    /// Number of part classes (14 full, 8 reduced).
    pub num_classes: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            persons_min: 1,
            persons_max: 5,
            image: ImageSize {
                width: 640.0,
                height: 480.0,
            },
            scale: 40.0,
            scale_jitter: 0.0,
            pose_jitter: 0.08,
            rotation_jitter_deg: 10.0,
            occlusion_rate: 0.1,
            min_separation: 3.0,
            num_classes: skeleton::NUM_CLASSES,
        }
    }
}

pub fn part_classes_for(cfg: &SceneConfig) -> Vec<PartClass> {
    if cfg.num_classes == skeleton::NUM_CLASSES {
        skeleton::part_classes()
    } else {
        skeleton::part_classes_reduced()
    }
}

/// Samples one ground-truth scene: persons placed with rejection sampling
/// for separation, template poses jittered and rotated, random occlusions
/// (the head stays visible so every person keeps at least one part).
pub fn sample_ground_truth(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> GroundTruthScene {
    let template = skeleton::template(cfg.num_classes);
    let n_persons = rng.gen_range(cfg.persons_min..=cfg.persons_max);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut centers: Vec<(f64, f64)> = Vec::new();
    let margin = 1.2 * cfg.scale;
    let body_h = 4.8 * cfg.scale;
    let mut persons = Vec::new();
    for _ in 0..n_persons {
        let scale = cfg.scale * (cfg.scale_jitter * normal.sample(rng)).exp();
        // Head anchor such that the whole template fits the image.
        let mut head = (0.0, 0.0);
        for attempt in 0..200 {
            let x = rng.gen_range(margin..(cfg.image.width - margin));
            let y = rng.gen_range(margin..(cfg.image.height - body_h).max(margin + 1.0));
            let ok = centers.iter().all(|&(cx, cy)| {
                let dx = cx - x;
                let dy = cy - y;
                (dx * dx + dy * dy).sqrt() >= cfg.min_separation * cfg.scale
            });
            if ok || attempt == 199 {
                head = (x, y);
                break;
            }
        }
        centers.push(head);

        let angle = cfg.rotation_jitter_deg.to_radians() * (rng.gen_range(-1.0..1.0f64));
        let (sin, cos) = angle.sin_cos();
        let mut parts = Vec::with_capacity(template.len());
        for (class_id, &(tx, ty)) in template.iter().enumerate() {
            let jx = cfg.pose_jitter * scale * normal.sample(rng);
            let jy = cfg.pose_jitter * scale * normal.sample(rng);
            let (ox, oy) = (tx * scale + jx, ty * scale + jy);
            let (rx, ry) = (ox * cos - oy * sin, ox * sin + oy * cos);
            let visible = class_id == skeleton::HEAD || !rng.gen_bool(cfg.occlusion_rate);
            parts.push(GtPart {
                class_id,
                x: head.0 + rx,
                y: head.1 + ry,
                visible,
            });
        }
        let head_part = parts[skeleton::HEAD];
        persons.push(GtPerson {
            parts,
            scale,
            head_box: Some(BoundingBox::centered(head_part.x, head_part.y, scale)),
            torso_size: None,
        });
    }
    GroundTruthScene {
        persons,
        image_size: cfg.image,
    }
}

/// Similarity of a location to the nearest visible ground-truth part of
/// each class, with a Gaussian kernel of half the person scale.
fn class_similarities(gt: &GroundTruthScene, num_classes: usize, x: f64, y: f64) -> Vec<f64> {
    let mut sims = vec![0.0f64; num_classes];
    for person in &gt.persons {
        let denom = 2.0 * (0.5 * person.scale) * (0.5 * person.scale);
        for part in &person.parts {
            if !part.visible {
                continue;
            }
            let dx = x - part.x;
            let dy = y - part.y;
            let sim = (-(dx * dx + dy * dy) / denom).exp();
            if sim > sims[part.class_id] {
                sims[part.class_id] = sim;
            }
        }
    }
    sims
}

fn unary_from_similarities(sims: &[f64], cfg: &NoiseConfig) -> Vec<f64> {
    match cfg.unary_norm {
        UnaryNorm::Softmax => {
            let kappa = cfg.unary_concentration;
            let m = sims.iter().copied().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = sims.iter().map(|&s| (kappa * (s - m)).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        }
        UnaryNorm::Sigmoid => sims
            .iter()
            .map(|&s| crate::objective::sigmoid(cfg.unary_concentration * (s - 0.5)))
            .collect(),
    }
}

/// Generates noisy part candidates for a ground-truth scene:
/// per visible part, a miss gate then `1 + Poisson(dup_mean - 1)`
/// Gaussian-perturbed candidates; plus `Poisson(clutter_rate)` uniform
/// clutter candidates. Deterministic given the seed in `cfg`.
pub fn generate_scene(
    gt: &GroundTruthScene,
    classes: &[PartClass],
    cfg: &NoiseConfig,
) -> Result<SyntheticScene> {
    cfg.validate()?;
    gt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let k = classes.len();

    let mut detections = Vec::new();
    let mut provenance = Vec::new();
    let mut push = |det: Detection, origin: Option<PartOrigin>, out: &mut Vec<Detection>| {
        out.push(det);
        provenance.push(origin);
    };

    for (pi, person) in gt.persons.iter().enumerate() {
        for part in &person.parts {
            if !part.visible {
                continue;
            }
            if cfg.miss_rate >= 1.0 || (cfg.miss_rate > 0.0 && rng.gen_bool(cfg.miss_rate)) {
                continue;
            }
            let extra = if cfg.dup_mean > 1.0 {
                Poisson::new(cfg.dup_mean - 1.0).unwrap().sample(&mut rng) as usize
            } else {
                0
            };
            for _ in 0..1 + extra {
                let x = part.x + cfg.loc_sigma * normal.sample(&mut rng);
                let y = part.y + cfg.loc_sigma * normal.sample(&mut rng);
                let h = person.scale * (cfg.scale_sigma * normal.sample(&mut rng)).exp();
                let sims = class_similarities(gt, k, x, y);
                let unary = unary_from_similarities(&sims, cfg);
                let det = Detection::new(
                    detections.len(),
                    x,
                    y,
                    h,
                    BoundingBox::centered(x, y, h),
                    unary,
                );
                push(
                    det,
                    Some(PartOrigin {
                        person: pi,
                        class_id: part.class_id,
                    }),
                    &mut detections,
                );
            }
        }
    }

    let mean_scale = if gt.persons.is_empty() {
        40.0
    } else {
        gt.persons.iter().map(|p| p.scale).sum::<f64>() / gt.persons.len() as f64
    };
    let n_clutter = if cfg.clutter_rate > 0.0 {
        Poisson::new(cfg.clutter_rate).unwrap().sample(&mut rng) as usize
    } else {
        0
    };
    for _ in 0..n_clutter {
        let x = rng.gen_range(0.0..gt.image_size.width);
        let y = rng.gen_range(0.0..gt.image_size.height);
        let h = mean_scale * (cfg.scale_sigma * normal.sample(&mut rng)).exp();
        let sims = class_similarities(gt, k, x, y);
        let unary = unary_from_similarities(&sims, cfg);
        let det = Detection::new(
            detections.len(),
            x,
            y,
            h,
            BoundingBox::centered(x, y, h),
            unary,
        );
        push(det, None, &mut detections);
    }

    // Detector output carries no ordering by person or class; shuffle so
    // downstream id-order conventions see both orders of every class pair.
    let mut order: Vec<usize> = (0..detections.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let mut shuffled_dets = Vec::with_capacity(detections.len());
    let mut shuffled_prov = Vec::with_capacity(provenance.len());
    for (new_id, &old) in order.iter().enumerate() {
        let mut d = detections[old].clone();
        d.id = new_id;
        shuffled_dets.push(d);
        shuffled_prov.push(provenance[old]);
    }

    Ok(SyntheticScene {
        detections: DetectionSet {
            classes: classes.to_vec(),
            detections: shuffled_dets,
            image_size: gt.image_size,
        },
        provenance: shuffled_prov,
    })
}

/// Indices kept by the representative-subset rule: candidates ranked by
/// their best unary probability within their argmax class, taken round
/// robin over classes so every class keeps representation. Returned
/// sorted ascending.
pub fn select_subset_indices(dets: &DetectionSet, k: usize) -> Vec<usize> {
    let n = dets.num_detections();
    if n <= k {
        return (0..n).collect();
    }
    let num_classes = dets.num_classes();
    let mut per_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); num_classes];
    for det in &dets.detections {
        per_class[det.argmax_class()].push((det.max_unary(), det.id));
    }
    for list in &mut per_class {
        list.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    }
    let mut kept = Vec::with_capacity(k);
    let mut cursor = vec![0usize; num_classes];
    'outer: loop {
        let mut progressed = false;
        for c in 0..num_classes {
            if cursor[c] < per_class[c].len() {
                kept.push(per_class[c][cursor[c]].1);
                cursor[c] += 1;
                progressed = true;
                if kept.len() == k {
                    break 'outer;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    kept.sort_unstable();
    kept
}

/// Representative subset with re-densified ids.
pub fn select_subset(dets: &DetectionSet, k: usize) -> DetectionSet {
    let kept = select_subset_indices(dets, k);
    reindex(dets, &kept)
}

/// Subset of a synthetic scene, keeping provenance aligned.
pub fn select_subset_scene(scene: &SyntheticScene, k: usize) -> SyntheticScene {
    let kept = select_subset_indices(&scene.detections, k);
    SyntheticScene {
        detections: reindex(&scene.detections, &kept),
        provenance: kept.iter().map(|&i| scene.provenance[i]).collect(),
    }
}

fn reindex(dets: &DetectionSet, kept: &[usize]) -> DetectionSet {
    DetectionSet {
        classes: dets.classes.clone(),
        detections: kept
            .iter()
            .enumerate()
            .map(|(new_id, &i)| {
                let mut d = dets.detections[i].clone();
                d.id = new_id;
                d
            })
            .collect(),
        image_size: dets.image_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene_cfg() -> SceneConfig {
        SceneConfig {
            persons_min: 2,
            persons_max: 2,
            num_classes: 8,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn sampled_scene_is_valid() {
        let cfg = small_scene_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = sample_ground_truth(&cfg, &mut rng);
        assert!(gt.validate().is_ok());
        assert_eq!(gt.persons.len(), 2);
        for p in &gt.persons {
            assert_eq!(p.parts.len(), 8);
            assert!(p.parts[skeleton::HEAD].visible);
            assert!(p.head_box.is_some());
        }
    }

    #[test]
    fn miss_rate_one_and_no_clutter_gives_empty_set() {
        let cfg = small_scene_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = sample_ground_truth(&cfg, &mut rng);
        let noise = NoiseConfig {
            miss_rate: 1.0,
            clutter_rate: 0.0,
            ..NoiseConfig::default()
        };
        let scene = generate_scene(&gt, &part_classes_for(&cfg), &noise).unwrap();
        assert!(scene.detections.detections.is_empty());
    }

    #[test]
    fn noiseless_limit_hits_ground_truth() {
        let cfg = SceneConfig {
            occlusion_rate: 0.0,
            ..small_scene_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = sample_ground_truth(&cfg, &mut rng);
        let noise = NoiseConfig {
            loc_sigma: 0.0,
            scale_sigma: 0.0,
            dup_mean: 1.0,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            unary_concentration: 60.0,
            ..NoiseConfig::default()
        };
        let scene = generate_scene(&gt, &part_classes_for(&cfg), &noise).unwrap();
        // Exactly one candidate per visible part, at the part, argmax true.
        let visible: usize = gt.persons.iter().map(|p| p.num_visible()).sum();
        assert_eq!(scene.detections.detections.len(), visible);
        for (det, origin) in scene
            .detections
            .detections
            .iter()
            .zip(&scene.provenance)
        {
            let origin = origin.unwrap();
            let part = gt.persons[origin.person].part(origin.class_id).unwrap();
            assert_eq!((det.x, det.y), (part.x, part.y));
            assert_eq!(det.argmax_class(), origin.class_id);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_scene_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = sample_ground_truth(&cfg, &mut rng);
        let noise = NoiseConfig::default();
        let a = generate_scene(&gt, &part_classes_for(&cfg), &noise).unwrap();
        let b = generate_scene(&gt, &part_classes_for(&cfg), &noise).unwrap();
        assert_eq!(a, b);
        let other = generate_scene(
            &gt,
            &part_classes_for(&cfg),
            &NoiseConfig {
                rng_seed: 5,
                ..noise
            },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn clutter_unaries_are_near_uniform_away_from_persons() {
        // A scene with one person in a corner; clutter far away should have
        // no dominant class.
        let cfg = SceneConfig {
            persons_min: 1,
            persons_max: 1,
            num_classes: 8,
            ..SceneConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = sample_ground_truth(&cfg, &mut rng);
        let sims = class_similarities(&gt, 8, 10_000.0, 10_000.0);
        let unary = unary_from_similarities(&sims, &NoiseConfig::default());
        let min = unary.iter().copied().fold(f64::MAX, f64::min);
        let max = unary.iter().copied().fold(f64::MIN, f64::max);
        assert!(max - min < 1e-9);
    }

    fn synthetic_for_subset() -> DetectionSet {
        // Two classes; class 0 has 3 strong candidates, class 1 has 1 weak.
        let mk = |id: usize, p0: f64, p1: f64| {
            Detection::new(
                id,
                id as f64,
                0.0,
                10.0,
                BoundingBox::centered(id as f64, 0.0, 10.0),
                vec![p0, p1],
            )
        };
        DetectionSet {
            classes: vec![
                PartClass { id: 0, name: "a".into() },
                PartClass { id: 1, name: "b".into() },
            ],
            detections: vec![
                mk(0, 0.9, 0.1),
                mk(1, 0.8, 0.1),
                mk(2, 0.7, 0.1),
                mk(3, 0.2, 0.4),
            ],
            image_size: ImageSize { width: 100.0, height: 100.0 },
        }
    }

    #[test]
    fn subset_identity_when_small() {
        let dets = synthetic_for_subset();
        let kept = select_subset(&dets, 10);
        assert_eq!(kept.num_detections(), 4);
        assert_eq!(kept, dets);
    }

    #[test]
    fn subset_round_robin_keeps_every_class() {
        let dets = synthetic_for_subset();
        let kept = select_subset(&dets, 2);
        assert_eq!(kept.num_detections(), 2);
        // One per class despite class 0 dominating: ids 0 and 3 survive.
        assert_eq!(kept.detections[0].unary, vec![0.9, 0.1]);
        assert_eq!(kept.detections[1].unary, vec![0.2, 0.4]);
        // Ids re-densified.
        assert_eq!(kept.detections[0].id, 0);
        assert_eq!(kept.detections[1].id, 1);
    }

    #[test]
    fn subset_keeps_best_scores_within_class() {
        let dets = synthetic_for_subset();
        let kept_idx = select_subset_indices(&dets, 3);
        assert_eq!(kept_idx, vec![0, 1, 3]);
        let dropped = 2; // weakest class-0 candidate among the kept count
        for &i in &kept_idx {
            if dets.detections[i].argmax_class() == 0 {
                assert!(dets.detections[i].max_unary() >= dets.detections[dropped].max_unary());
            }
        }
    }

    #[test]
    fn subset_size_is_min() {
        let dets = synthetic_for_subset();
        for k in 1..6 {
            assert_eq!(select_subset(&dets, k).num_detections(), k.min(4));
        }
    }
}
