//! Evaluation protocols: PCK/PCKh with area under the curve, strict stick
//! based PCP, mean average precision over consistent pose configurations,
//! and occlusion-prediction accuracy.
//!
//! Conventions pinned here (the common benchmarks defer these to external
//! scripts): the PCK reference size is the torso diagonal between a
//! shoulder and the opposite hip; the PCKh reference is half the
//! ground-truth head-box diagonal; a part is correct when its distance to
//! the ground truth is at most `threshold * reference`. Average precision
//! uses the exact precision-recall steps without interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroundTruthScene, GtPerson, PartPrediction, PersonPose, PoseResult};
use crate::skeleton::{self, Stick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSize {
    TorsoDiag,
    HeadSize,
}

/// Uniform threshold grid for the PCK curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Default for AucRange {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 0.5,
            steps: 26,
        }
    }
}

impl AucRange {
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.steps.max(2);
        (0..n)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    pub pck_threshold: f64,
    pub pckh_threshold: f64,
    pub pcp_threshold: f64,
    pub reference: ReferenceSize,
    pub auc_range: AucRange,
    /// Exclude sticks whose ground truth is occluded from the PCP
    /// denominator (their visibility is scored by AOP instead).
    pub occlusion_aware_pcp: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            pck_threshold: 0.2,
            pckh_threshold: 0.5,
            pcp_threshold: 0.5,
            reference: ReferenceSize::TorsoDiag,
            auc_range: AucRange::default(),
            occlusion_aware_pcp: true,
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Reference size of one ground-truth person under the chosen convention.
pub fn reference_size(person: &GtPerson, reference: ReferenceSize, num_classes: usize) -> f64 {
    match reference {
        ReferenceSize::TorsoDiag => {
            if let Some(t) = person.torso_size {
                return t;
            }
            let (a, b) = skeleton::torso_reference(num_classes);
            match (person.part(a), person.part(b)) {
                (Some(pa), Some(pb)) => dist((pa.x, pa.y), (pb.x, pb.y)),
                _ => 2.0 * person.scale,
            }
        }
        ReferenceSize::HeadSize => person
            .head_box
            .map(|b| 0.5 * b.diagonal())
            .unwrap_or(person.scale),
    }
}

/// Per-class correct/total counters, mergeable across scenes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PckCounts {
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
}

impl PckCounts {
    pub fn new(num_classes: usize) -> Self {
        Self {
            correct: vec![0; num_classes],
            total: vec![0; num_classes],
        }
    }

    pub fn merge(&mut self, other: &PckCounts) {
        if self.correct.len() < other.correct.len() {
            self.correct.resize(other.correct.len(), 0);
            self.total.resize(other.total.len(), 0);
        }
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
        for (a, b) in self.total.iter_mut().zip(&other.total) {
            *a += b;
        }
    }

    pub fn per_class(&self) -> Vec<f64> {
        self.correct
            .iter()
            .zip(&self.total)
            .map(|(&c, &t)| if t > 0 { c as f64 / t as f64 } else { 0.0 })
            .collect()
    }

    /// Mean over classes that appear in the ground truth.
    pub fn mean(&self) -> f64 {
        let fractions: Vec<f64> = self
            .correct
            .iter()
            .zip(&self.total)
            .filter(|(_, &t)| t > 0)
            .map(|(&c, &t)| c as f64 / t as f64)
            .collect();
        if fractions.is_empty() {
            0.0
        } else {
            fractions.iter().sum::<f64>() / fractions.len() as f64
        }
    }
}

fn single_person_pairs<'a>(
    pred: &'a PoseResult,
    gt: &'a GroundTruthScene,
) -> Result<Vec<(&'a PersonPose, &'a GtPerson)>> {
    if pred.persons.len() != gt.persons.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted persons vs ground truth (single-person protocol)",
            expected: gt.persons.len(),
            got: pred.persons.len(),
        });
    }
    Ok(pred.persons.iter().zip(gt.persons.iter()).collect())
}

/// PCK counts of one scene at an explicit threshold (single-person
/// correspondence by index).
pub fn pck_counts(
    pred: &PoseResult,
    gt: &GroundTruthScene,
    cfg: &MatchConfig,
    threshold: f64,
) -> Result<PckCounts> {
    let num_classes = gt
        .persons
        .iter()
        .flat_map(|p| p.parts.iter())
        .map(|p| p.class_id + 1)
        .max()
        .unwrap_or(0);
    let mut counts = PckCounts::new(num_classes);
    for (pose, person) in single_person_pairs(pred, gt)? {
        let reference = reference_size(person, cfg.reference, num_classes);
        for part in &person.parts {
            if !part.visible {
                continue;
            }
            counts.total[part.class_id] += 1;
            let predicted = pose.part(part.class_id).and_then(PartPrediction::location);
            if let Some(loc) = predicted {
                if dist(loc, (part.x, part.y)) <= threshold * reference {
                    counts.correct[part.class_id] += 1;
                }
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PckReport {
    pub per_class: Vec<f64>,
    pub mean: f64,
}

/// PCK at the configured threshold; visible ground-truth parts only.
pub fn pck(pred: &PoseResult, gt: &GroundTruthScene, cfg: &MatchConfig) -> Result<PckReport> {
    let counts = pck_counts(pred, gt, cfg, cfg.pck_threshold)?;
    Ok(PckReport {
        per_class: counts.per_class(),
        mean: counts.mean(),
    })
}

/// Trapezoidal integral of a PCK curve over its threshold grid,
/// normalized by the grid range.
pub fn auc(curve: &[f64], range: &AucRange) -> f64 {
    let thresholds = range.thresholds();
    debug_assert_eq!(curve.len(), thresholds.len());
    if curve.len() < 2 {
        return curve.first().copied().unwrap_or(0.0);
    }
    let mut area = 0.0;
    for i in 1..curve.len() {
        area += 0.5 * (curve[i] + curve[i - 1]) * (thresholds[i] - thresholds[i - 1]);
    }
    area / (range.stop - range.start)
}

/// Mean PCK over the configured threshold grid (the curve `auc` integrates).
pub fn pck_curve(
    scenes: &[(&PoseResult, &GroundTruthScene)],
    cfg: &MatchConfig,
) -> Result<Vec<f64>> {
    let mut curve = Vec::new();
    for t in cfg.auc_range.thresholds() {
        let mut counts = PckCounts::default();
        for (pred, gt) in scenes {
            counts.merge(&pck_counts(pred, gt, cfg, t)?);
        }
        curve.push(counts.mean());
    }
    Ok(curve)
}

/// Per-stick correct/total counters for PCP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PcpCounts {
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
}

impl PcpCounts {
    pub fn merge(&mut self, other: &PcpCounts) {
        if self.correct.len() < other.correct.len() {
            self.correct.resize(other.correct.len(), 0);
            self.total.resize(other.total.len(), 0);
        }
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
        for (a, b) in self.total.iter_mut().zip(&other.total) {
            *a += b;
        }
    }

    pub fn per_stick(&self) -> Vec<f64> {
        self.correct
            .iter()
            .zip(&self.total)
            .map(|(&c, &t)| if t > 0 { c as f64 / t as f64 } else { 0.0 })
            .collect()
    }

    pub fn mean(&self) -> f64 {
        let f: Vec<f64> = self
            .correct
            .iter()
            .zip(&self.total)
            .filter(|(_, &t)| t > 0)
            .map(|(&c, &t)| c as f64 / t as f64)
            .collect();
        if f.is_empty() {
            0.0
        } else {
            f.iter().sum::<f64>() / f.len() as f64
        }
    }
}

/// Strict PCP: a stick is correct when both predicted endpoints fall
/// within `pcp_threshold * stick length` of their ground-truth endpoints.
/// A predicted-occluded endpoint with visible ground truth is incorrect.
pub fn pcp_counts(
    pred: &PoseResult,
    gt: &GroundTruthScene,
    cfg: &MatchConfig,
    sticks: &[Stick],
) -> Result<PcpCounts> {
    let mut counts = PcpCounts {
        correct: vec![0; sticks.len()],
        total: vec![0; sticks.len()],
    };
    for (pose, person) in single_person_pairs(pred, gt)? {
        for (si, stick) in sticks.iter().enumerate() {
            let (Some(ga), Some(gb)) = (person.part(stick.a), person.part(stick.b)) else {
                continue;
            };
            if cfg.occlusion_aware_pcp && (!ga.visible || !gb.visible) {
                continue;
            }
            counts.total[si] += 1;
            let len = dist((ga.x, ga.y), (gb.x, gb.y));
            let tol = cfg.pcp_threshold * len;
            let pa = pose.part(stick.a).and_then(PartPrediction::location);
            let pb = pose.part(stick.b).and_then(PartPrediction::location);
            if let (Some(pa), Some(pb)) = (pa, pb) {
                if dist(pa, (ga.x, ga.y)) <= tol && dist(pb, (gb.x, gb.y)) <= tol {
                    counts.correct[si] += 1;
                }
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcpReport {
    pub stick_names: Vec<String>,
    pub per_stick: Vec<f64>,
    pub mean: f64,
}

pub fn pcp(
    pred: &PoseResult,
    gt: &GroundTruthScene,
    cfg: &MatchConfig,
    sticks: &[Stick],
) -> Result<PcpReport> {
    let counts = pcp_counts(pred, gt, cfg, sticks)?;
    Ok(PcpReport {
        stick_names: sticks.iter().map(|s| s.name.to_string()).collect(),
        per_stick: counts.per_stick(),
        mean: counts.mean(),
    })
}

/// PCKh overlap of one predicted pose against one ground-truth person:
/// the fraction of visible ground-truth parts predicted within
/// `pckh_threshold * head reference`.
fn pckh_overlap(pose: &PersonPose, person: &GtPerson, cfg: &MatchConfig, num_classes: usize) -> f64 {
    let reference = reference_size(person, ReferenceSize::HeadSize, num_classes);
    let mut visible = 0usize;
    let mut hit = 0usize;
    for part in &person.parts {
        if !part.visible {
            continue;
        }
        visible += 1;
        if let Some(loc) = pose.part(part.class_id).and_then(PartPrediction::location) {
            if dist(loc, (part.x, part.y)) <= cfg.pckh_threshold * reference {
                hit += 1;
            }
        }
    }
    if visible == 0 {
        0.0
    } else {
        hit as f64 / visible as f64
    }
}

/// Greedy one-to-one assignment of predicted poses to ground-truth persons
/// by descending PCKh overlap; ties break by higher confidence, then lower
/// pose index. Returns `assigned[pred_index] = Some(gt_index)`.
pub fn assign_poses(
    pred: &PoseResult,
    gt: &GroundTruthScene,
    cfg: &MatchConfig,
    num_classes: usize,
) -> Vec<Option<usize>> {
    let mut overlaps: Vec<(f64, f64, usize, usize)> = Vec::new(); // (overlap, conf, pi, gi)
    for (pi, pose) in pred.persons.iter().enumerate() {
        for (gi, person) in gt.persons.iter().enumerate() {
            let ov = pckh_overlap(pose, person, cfg, num_classes);
            if ov > 0.0 {
                overlaps.push((ov, pose.confidence, pi, gi));
            }
        }
    }
    overlaps.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut assigned = vec![None; pred.persons.len()];
    let mut gt_taken = vec![false; gt.persons.len()];
    for (_, _, pi, gi) in overlaps {
        if assigned[pi].is_none() && !gt_taken[gi] {
            assigned[pi] = Some(gi);
            gt_taken[gi] = true;
        }
    }
    assigned
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapReport {
    pub per_class_ap: Vec<f64>,
    pub mean_ap: f64,
}

/// Mean average precision over consistent configurations: poses are
/// assigned one-to-one to ground truth by PCKh; unassigned predictions
/// count as false positives; per-class AP comes from the
/// confidence-ranked list of predicted parts.
pub fn map_multi(
    scenes: &[(&PoseResult, &GroundTruthScene)],
    cfg: &MatchConfig,
) -> Result<MapReport> {
    let num_classes = scenes
        .iter()
        .flat_map(|(_, gt)| gt.persons.iter())
        .flat_map(|p| p.parts.iter())
        .map(|p| p.class_id + 1)
        .max()
        .unwrap_or(0);

    // (confidence, is_tp) per class; order made canonical below.
    let mut entries: Vec<Vec<(f64, bool)>> = vec![Vec::new(); num_classes];
    let mut positives = vec![0usize; num_classes];

    for (pred, gt) in scenes {
        for person in &gt.persons {
            for part in &person.parts {
                if part.visible {
                    positives[part.class_id] += 1;
                }
            }
        }
        let assigned = assign_poses(pred, gt, cfg, num_classes);
        for (pose, gt_idx) in pred.persons.iter().zip(&assigned) {
            for part in &pose.parts {
                let Some(loc) = part.location() else {
                    continue; // occlusion prediction claims nothing
                };
                let tp = match gt_idx {
                    Some(gi) => {
                        let person = &gt.persons[*gi];
                        let reference =
                            reference_size(person, ReferenceSize::HeadSize, num_classes);
                        person.part(part.class_id).is_some_and(|g| {
                            g.visible
                                && dist(loc, (g.x, g.y)) <= cfg.pckh_threshold * reference
                        })
                    }
                    None => false,
                };
                entries[part.class_id].push((pose.confidence, tp));
            }
        }
    }

    let mut per_class_ap = vec![0.0; num_classes];
    for c in 0..num_classes {
        if positives[c] == 0 {
            continue;
        }
        let list = &mut entries[c];
        // Descending confidence; equal confidences rank false positives
        // first (pessimistic and permutation-invariant).
        list.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
        });
        let mut tp = 0usize;
        let mut ap = 0.0;
        for (rank, &(_, is_tp)) in list.iter().enumerate() {
            if is_tp {
                tp += 1;
                ap += tp as f64 / (rank + 1) as f64;
            }
        }
        per_class_ap[c] = ap / positives[c] as f64;
    }

    let active: Vec<f64> = (0..num_classes)
        .filter(|&c| positives[c] > 0)
        .map(|c| per_class_ap[c])
        .collect();
    let mean_ap = if active.is_empty() {
        0.0
    } else {
        active.iter().sum::<f64>() / active.len() as f64
    };
    Ok(MapReport {
        per_class_ap,
        mean_ap,
    })
}

/// Accuracy of occlusion prediction: over all part slots of assigned
/// (prediction, ground truth) pairs, the fraction whose predicted
/// visible/occluded state matches the ground-truth visibility.
pub fn aop(
    scenes: &[(&PoseResult, &GroundTruthScene)],
    cfg: &MatchConfig,
) -> Result<f64> {
    let mut total = 0usize;
    let mut matched = 0usize;
    for (pred, gt) in scenes {
        let num_classes = gt
            .persons
            .iter()
            .flat_map(|p| p.parts.iter())
            .map(|p| p.class_id + 1)
            .max()
            .unwrap_or(0);
        let assigned = assign_poses(pred, gt, cfg, num_classes);
        for (pose, gt_idx) in pred.persons.iter().zip(&assigned) {
            let Some(gi) = gt_idx else { continue };
            for part in &gt.persons[*gi].parts {
                total += 1;
                let predicted_visible = pose
                    .part(part.class_id)
                    .map(|p| !p.occluded)
                    .unwrap_or(false);
                if predicted_visible == part.visible {
                    matched += 1;
                }
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    })
}

/// Fraction of scenes whose predicted person count equals the ground truth.
pub fn person_count_accuracy(scenes: &[(&PoseResult, &GroundTruthScene)]) -> f64 {
    if scenes.is_empty() {
        return 0.0;
    }
    let hits = scenes
        .iter()
        .filter(|(pred, gt)| pred.persons.len() == gt.persons.len())
        .count();
    hits as f64 / scenes.len() as f64
}

/// The prediction that mirrors the ground truth exactly: visible parts at
/// their true locations, invisible parts marked occluded, confidence by
/// person index order.
pub fn pose_from_ground_truth(gt: &GroundTruthScene) -> PoseResult {
    PoseResult {
        persons: gt
            .persons
            .iter()
            .map(|person| PersonPose {
                confidence: 1.0,
                parts: person
                    .parts
                    .iter()
                    .map(|p| {
                        if p.visible {
                            PartPrediction::at(p.class_id, p.x, p.y)
                        } else {
                            PartPrediction::occluded(p.class_id)
                        }
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Renders rows of labeled fractions as an aligned plain-text table with
/// per-column headers (values printed as percentages).
pub fn text_table(columns: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once(6))
        .max()
        .unwrap();
    let col_width = columns.iter().map(|c| c.len()).max().unwrap_or(5).max(6);
    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", ""));
    for c in columns {
        out.push_str(&format!(" {c:>col_width$}"));
    }
    out.push('\n');
    for (label, values) in rows {
        out.push_str(&format!("{label:<label_width$}"));
        for v in values {
            out.push_str(&format!(" {:>col_width$.1}", v * 100.0));
        }
        out.push('\n');
    }
    out
}
