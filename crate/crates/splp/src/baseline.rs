//! Two-stage reference method: per-class greedy non-maximum suppression
//! followed by proximity clustering. No pairwise model, no joint
//! reasoning; this is the comparison point for the joint solver.

use crate::model::{DetectionSet, PartPrediction, PersonPose, PoseResult};

#[derive(Debug, Clone, Copy)]
pub struct BaselineConfig {
    /// Candidates below this best-class probability are dropped up front.
    pub min_score: f64,
    /// NMS suppression radius in units of the candidate scale.
    pub nms_radius: f64,
    /// Single-linkage clustering radius in units of the candidate scale.
    pub cluster_radius: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            min_score: 0.3,
            nms_radius: 0.8,
            cluster_radius: 2.5,
        }
    }
}

/// Greedy per-class NMS, then single-linkage clustering of the survivors
/// into persons; within a cluster the best-scoring candidate of each class
/// becomes that part.
pub fn nms_cluster_baseline(dets: &DetectionSet, cfg: &BaselineConfig) -> PoseResult {
    let k = dets.num_classes();
    // Stage 1: per-class greedy NMS on argmax-class candidates.
    let mut survivors: Vec<usize> = Vec::new();
    for c in 0..k {
        let mut candidates: Vec<usize> = dets
            .detections
            .iter()
            .filter(|d| d.argmax_class() == c && d.unary[c] >= cfg.min_score)
            .map(|d| d.id)
            .collect();
        candidates.sort_by(|&a, &b| {
            let pa = dets.detections[a].unary[c];
            let pb = dets.detections[b].unary[c];
            pb.partial_cmp(&pa).unwrap().then(a.cmp(&b))
        });
        let mut kept: Vec<usize> = Vec::new();
        for id in candidates {
            let d = &dets.detections[id];
            let radius = cfg.nms_radius * d.h;
            let suppressed = kept.iter().any(|&other| {
                let o = &dets.detections[other];
                let dx = o.x - d.x;
                let dy = o.y - d.y;
                (dx * dx + dy * dy).sqrt() < radius
            });
            if !suppressed {
                kept.push(id);
            }
        }
        survivors.extend(kept);
    }
    survivors.sort_unstable();

    // Stage 2: single-linkage clustering by proximity.
    let m = survivors.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, a: usize) -> usize {
        let mut r = a;
        while parent[r] != r {
            r = parent[r];
        }
        let mut cur = a;
        while parent[cur] != r {
            let next = parent[cur];
            parent[cur] = r;
            cur = next;
        }
        r
    }
    for i in 0..m {
        for j in i + 1..m {
            let a = &dets.detections[survivors[i]];
            let b = &dets.detections[survivors[j]];
            let dx = a.x - b.x;
            let dy = a.y - b.y;
            let scale = (a.h + b.h) / 2.0;
            if (dx * dx + dy * dy).sqrt() <= cfg.cluster_radius * scale {
                let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                if ra != rb {
                    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in 0..m {
        let r = find(&mut parent, i);
        clusters[r].push(survivors[i]);
    }

    let mut persons = Vec::new();
    for cluster in clusters.into_iter().filter(|c| !c.is_empty()) {
        let mut parts = Vec::with_capacity(k);
        let mut conf = 0.0;
        for c in 0..k {
            let best = cluster
                .iter()
                .copied()
                .filter(|&id| dets.detections[id].argmax_class() == c)
                .max_by(|&a, &b| {
                    dets.detections[a].unary[c]
                        .partial_cmp(&dets.detections[b].unary[c])
                        .unwrap()
                        .then(b.cmp(&a))
                });
            match best {
                Some(id) => {
                    let d = &dets.detections[id];
                    parts.push(PartPrediction::at(c, d.x, d.y));
                }
                None => parts.push(PartPrediction::occluded(c)),
            }
        }
        for &id in &cluster {
            let d = &dets.detections[id];
            conf += d.unary[d.argmax_class()];
        }
        conf /= cluster.len() as f64;
        persons.push(PersonPose {
            confidence: conf,
            parts,
        });
    }
    PoseResult { persons }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Detection, ImageSize, PartClass};

    fn det(id: usize, x: f64, y: f64, unary: Vec<f64>) -> Detection {
        Detection::new(id, x, y, 10.0, BoundingBox::centered(x, y, 10.0), unary)
    }

    fn set(detections: Vec<Detection>, k: usize) -> DetectionSet {
        DetectionSet {
            classes: (0..k)
                .map(|id| PartClass {
                    id,
                    name: format!("c{id}"),
                })
                .collect(),
            detections,
            image_size: ImageSize {
                width: 200.0,
                height: 200.0,
            },
        }
    }

    #[test]
    fn nms_keeps_strongest_of_near_duplicates() {
        let dets = set(
            vec![
                det(0, 10.0, 10.0, vec![0.9, 0.05]),
                det(1, 12.0, 10.0, vec![0.7, 0.05]),
                det(2, 100.0, 100.0, vec![0.8, 0.05]),
            ],
            2,
        );
        let result = nms_cluster_baseline(&dets, &BaselineConfig::default());
        // Duplicate at (12,10) suppressed; two far-apart clusters remain.
        assert_eq!(result.persons.len(), 2);
    }

    #[test]
    fn clustering_groups_nearby_parts_into_one_person() {
        let dets = set(
            vec![
                det(0, 10.0, 10.0, vec![0.9, 0.1]),
                det(1, 15.0, 20.0, vec![0.1, 0.85]),
            ],
            2,
        );
        let result = nms_cluster_baseline(&dets, &BaselineConfig::default());
        assert_eq!(result.persons.len(), 1);
        let person = &result.persons[0];
        assert!(!person.part(0).unwrap().occluded);
        assert!(!person.part(1).unwrap().occluded);
    }

    #[test]
    fn weak_candidates_are_dropped() {
        let dets = set(vec![det(0, 10.0, 10.0, vec![0.2, 0.1])], 2);
        let result = nms_cluster_baseline(&dets, &BaselineConfig::default());
        assert!(result.persons.is_empty());
    }
}
