//! Builds labeled pair sets from generated scenes with known provenance
//! and fits the full pairwise model: histograms first, then one logistic
//! regression per unordered class pair.
//!
//! Pair labeling: a candidate pair is positive when both candidates
//! originate from ground-truth parts of the same person; every other pair
//! (different persons, clutter involved) is negative. Candidate classes
//! come from provenance; clutter candidates count under their argmax
//! class.

use serde::{Deserialize, Serialize};

use crate::detections::SyntheticScene;
use crate::error::{Error, Result};
use crate::pairwise::{
    cross_class_features, same_class_features, train_logistic, AppearanceMode, GeomSample,
    HistogramConfig, HistogramPosterior, PairwiseModel, ThetaEntry,
};
use crate::{par, pairwise};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Gaussian prior std of the logistic weights.
    pub sigma: f64,
    pub histogram: HistogramConfig,
    pub appearance: AppearanceMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            histogram: HistogramConfig::default(),
            appearance: AppearanceMode::None,
        }
    }
}

struct BucketEntry {
    scene: usize,
    lo: usize,
    hi: usize,
    c_lo: usize,
    c_hi: usize,
    positive: bool,
}

/// Trains histograms and per-class-pair logistic parameters from scenes
/// with provenance. Every unordered class pair must receive at least one
/// positive and one negative sample; otherwise the pair is named in the
/// error.
pub fn train_model(scenes: &[SyntheticScene], cfg: &TrainingConfig) -> Result<PairwiseModel> {
    let k = scenes
        .first()
        .map(|s| s.detections.num_classes())
        .ok_or_else(|| Error::InvalidInput("training requires at least one scene".into()))?;

    let mut geom: Vec<GeomSample> = Vec::new();
    let num_buckets = k * (k + 1) / 2;
    let bucket_of = |c: usize, c2: usize| {
        let (a, b) = (c.min(c2), c.max(c2));
        a * k - a * (a + 1) / 2 + b
    };
    let mut buckets: Vec<Vec<BucketEntry>> = (0..num_buckets).map(|_| Vec::new()).collect();

    for (si, scene) in scenes.iter().enumerate() {
        let dets = &scene.detections;
        if dets.num_classes() != k {
            return Err(Error::DimensionMismatch {
                context: "class count across training scenes",
                expected: k,
                got: dets.num_classes(),
            });
        }
        let pairs = dets.pair_indexer();
        for (lo, hi) in pairs.iter() {
            let (o_lo, o_hi) = (scene.provenance[lo], scene.provenance[hi]);
            let c_lo = o_lo.map_or_else(|| dets.detections[lo].argmax_class(), |o| o.class_id);
            let c_hi = o_hi.map_or_else(|| dets.detections[hi].argmax_class(), |o| o.class_id);
            let positive = match (o_lo, o_hi) {
                (Some(a), Some(b)) => a.person == b.person,
                _ => false,
            };
            if c_lo != c_hi {
                let (s, r) = pairwise::pair_geometry(&dets.detections[lo], &dets.detections[hi]);
                geom.push(GeomSample {
                    c: c_lo,
                    c_prime: c_hi,
                    s,
                    r,
                    positive,
                });
            }
            buckets[bucket_of(c_lo, c_hi)].push(BucketEntry {
                scene: si,
                lo,
                hi,
                c_lo,
                c_hi,
                positive,
            });
        }
    }

    let histograms = HistogramPosterior::fit(&geom, k, cfg.histogram)?;

    // Independent per-class-pair training jobs.
    let results: Vec<Result<Option<ThetaEntry>>> = par::map_range(num_buckets, |bi| {
        let entries = &buckets[bi];
        // Recover (c, c') from the bucket index.
        let mut c = 0;
        let mut offset = bi;
        while offset >= k - c {
            offset -= k - c;
            c += 1;
        }
        let c_prime = c + offset;
        if entries.is_empty() {
            return Ok(None);
        }
        let mut features = Vec::with_capacity(entries.len());
        let mut labels = Vec::with_capacity(entries.len());
        let mut seen = [false, false];
        for e in entries {
            let dets = &scenes[e.scene].detections;
            let (lo, hi) = (&dets.detections[e.lo], &dets.detections[e.hi]);
            let f = if e.c_lo == e.c_hi {
                same_class_features(lo, hi)
            } else {
                cross_class_features(lo, hi, e.c_lo, e.c_hi, &histograms, cfg.appearance)?
            };
            features.push(f.values);
            labels.push(e.positive);
            seen[e.positive as usize] = true;
        }
        if !seen[1] {
            return Err(Error::EmptyTrainingSet {
                label: "positive",
                c,
                c_prime,
            });
        }
        if !seen[0] {
            return Err(Error::EmptyTrainingSet {
                label: "negative",
                c,
                c_prime,
            });
        }
        let values = train_logistic(&features, &labels, cfg.sigma)?;
        Ok(Some(ThetaEntry { c, c_prime, values }))
    });

    let mut theta = Vec::new();
    for r in results {
        if let Some(entry) = r? {
            theta.push(entry);
        }
    }
    theta.sort_by_key(|e| (e.c, e.c_prime));
    Ok(PairwiseModel {
        sigma: cfg.sigma,
        appearance: cfg.appearance,
        num_classes: k,
        histograms,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{
        generate_scene, part_classes_for, sample_ground_truth, NoiseConfig, SceneConfig,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(n: usize, seed: u64) -> Vec<SyntheticScene> {
        let cfg = SceneConfig {
            persons_min: 2,
            persons_max: 3,
            num_classes: 8,
            occlusion_rate: 0.05,
            ..SceneConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let gt = sample_ground_truth(&cfg, &mut rng);
                generate_scene(
                    &gt,
                    &part_classes_for(&cfg),
                    &NoiseConfig {
                        rng_seed: seed.wrapping_add(i as u64),
                        dup_mean: 1.3,
                        clutter_rate: 3.0,
                        ..NoiseConfig::default()
                    },
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn trains_full_model_on_synthetic_corpus() {
        let scenes = corpus(12, 7);
        let model = train_model(&scenes, &TrainingConfig::default()).unwrap();
        assert_eq!(model.num_classes, 8);
        assert_eq!(model.theta.len(), 8 * 9 / 2);
        // Same-class parameters have the geometric dimension, cross-class
        // ones the posterior + bias dimension.
        let same = model.theta_for(0, 0).unwrap();
        assert_eq!(same.len(), pairwise::SAME_CLASS_DIM);
        let cross = model.theta_for(0, 1).unwrap();
        assert_eq!(cross.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let scenes = corpus(6, 9);
        let a = train_model(&scenes, &TrainingConfig::default()).unwrap();
        let b = train_model(&scenes, &TrainingConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    /// Close same-person pairs should be attractive (negative cost), far
    /// cross-person pairs repulsive, under the trained model.
    #[test]
    fn trained_model_orders_costs_sensibly() {
        let scenes = corpus(16, 11);
        let model = train_model(&scenes, &TrainingConfig::default()).unwrap();

        let mut same_person_costs = Vec::new();
        let mut cross_person_costs = Vec::new();
        for scene in &scenes[..4] {
            let dets = &scene.detections;
            for (lo, hi) in dets.pair_indexer().iter() {
                let (Some(a), Some(b)) = (scene.provenance[lo], scene.provenance[hi]) else {
                    continue;
                };
                let cost = model
                    .beta(&dets.detections[lo], &dets.detections[hi], a.class_id, b.class_id)
                    .unwrap();
                if a.person == b.person {
                    same_person_costs.push(cost);
                } else {
                    cross_person_costs.push(cost);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&same_person_costs) < mean(&cross_person_costs),
            "same-person pairs should be cheaper on average"
        );
        assert!(mean(&same_person_costs) < 0.0);
        assert!(mean(&cross_person_costs) > 0.0);
    }

    /// With persons planted at a fixed offset, the cross-class posterior
    /// concentrates at the planted geometry.
    #[test]
    fn histogram_peaks_at_planted_offset() {
        let scenes = corpus(16, 13);
        let model = train_model(&scenes, &TrainingConfig::default()).unwrap();
        // head -> neck in the template sits 0.8 scales below the head.
        let hist = &model.histograms;
        let peak = hist.posterior(0, 1, 0.8, std::f64::consts::FRAC_PI_2).unwrap();
        let anti = hist.posterior(0, 1, 8.0, -std::f64::consts::FRAC_PI_2).unwrap();
        assert!(
            peak > anti,
            "posterior at the planted offset {peak} should beat the opposite {anti}"
        );
        assert!(peak > 0.5);
    }
}
