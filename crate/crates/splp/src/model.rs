//! Domain types shared by every stage of the pipeline: detections, part
//! classes, solutions of the subset partition and labeling problem, cost
//! instances, poses and ground-truth scenes.
//!
//! Conventions fixed here so the rest of the crate never re-derives them:
//!
//! * Detection ids are dense `0..|D|`, class ids dense `0..|C|`.
//! * Unordered detection pairs `(d, d')` are stored with `d < d'` and
//!   addressed through [`PairIndexer`] in lexicographic order.
//! * For a pair `(d, d')` with `d < d'`, an ordered class pair `(c, c')`
//!   always means "`c` is the class of `d`, `c'` the class of `d'`".
//! * The auxiliary variable `z` is never stored in a solution; on integral
//!   points it is the product `x[d][c] * x[d'][c'] * y[dd']` ([`derive_z`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unary probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` on ingest
/// so log-odds costs stay finite.
pub const PROB_EPS: f64 = 1e-6;

/// One body part category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartClass {
    pub id: usize,
    pub name: String,
}

/// Axis-aligned box in pixel coordinates, `min <= max` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Square box of side `size` centered on `(x, y)`.
    pub fn centered(x: f64, y: f64, size: f64) -> Self {
        let half = size / 2.0;
        Self::new(x - half, y - half, x + half, y + half)
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    pub fn diagonal(&self) -> f64 {
        let w = self.x_max - self.x_min;
        let h = self.y_max - self.y_min;
        (w * w + h * h).sqrt()
    }
}

/// One part candidate: location, scale, box and per-class unary probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Scale in pixels, strictly positive.
    pub h: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// One probability per class, each inside the open interval (0, 1).
    pub unary: Vec<f64>,
}

impl Detection {
    /// Builds a detection, clamping unary probabilities into
    /// `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn new(id: usize, x: f64, y: f64, h: f64, bbox: BoundingBox, unary: Vec<f64>) -> Self {
        let unary = unary.into_iter().map(clamp_probability).collect();
        Self {
            id,
            x,
            y,
            h,
            bbox,
            unary,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Highest unary probability over all classes.
    pub fn max_unary(&self) -> f64 {
        self.unary.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Class index of the highest unary probability (lowest id wins ties).
    pub fn argmax_class(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.unary.iter().enumerate() {
            if p > self.unary[best] {
                best = c;
            }
        }
        best
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn diagonal(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }
}

/// A set of part candidates over a fixed class list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub classes: Vec<PartClass>,
    pub detections: Vec<Detection>,
    pub image_size: ImageSize,
}

impl DetectionSet {
    pub fn num_detections(&self) -> usize {
        self.detections.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn pair_indexer(&self) -> PairIndexer {
        PairIndexer::new(self.detections.len())
    }

    /// Checks the structural invariants: dense ids, consistent unary lengths,
    /// positive scales, well-formed boxes, probabilities in (0, 1).
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidInput("class list is empty".into()));
        }
        for (i, class) in self.classes.iter().enumerate() {
            if class.id != i {
                return Err(Error::InvalidInput(format!(
                    "class ids must be dense: position {i} holds id {}",
                    class.id
                )));
            }
        }
        for (i, det) in self.detections.iter().enumerate() {
            if det.id != i {
                return Err(Error::InvalidInput(format!(
                    "detection ids must be dense: position {i} holds id {}",
                    det.id
                )));
            }
            if det.unary.len() != self.classes.len() {
                return Err(Error::DimensionMismatch {
                    context: "unary vector length vs class count",
                    expected: self.classes.len(),
                    got: det.unary.len(),
                });
            }
            if !(det.h > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "detection {i} has non-positive scale {}",
                    det.h
                )));
            }
            if !det.bbox.is_well_formed() {
                return Err(Error::InvalidInput(format!(
                    "detection {i} has a malformed bounding box"
                )));
            }
            for &p in &det.unary {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::InvalidProbability(p));
                }
            }
        }
        Ok(())
    }

    /// Clamps every unary probability into the legal open interval.
    /// Loaders call this so external JSON with exact 0/1 entries stays usable.
    pub fn clamp_unaries(&mut self) {
        for det in &mut self.detections {
            for p in &mut det.unary {
                *p = clamp_probability(*p);
            }
        }
    }
}

/// Linear indexing of unordered detection pairs `(d, d')`, `d < d'`,
/// in lexicographic order: (0,1), (0,2), ..., (1,2), ...
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndexer {
    n: usize,
}

impl PairIndexer {
    pub fn new(num_detections: usize) -> Self {
        Self { n: num_detections }
    }

    pub fn num_detections(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of the unordered pair `{a, b}`, `a != b`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a != b && a < self.n && b < self.n);
        let (d, d2) = if a < b { (a, b) } else { (b, a) };
        d * (2 * self.n - d - 1) / 2 + (d2 - d - 1)
    }

    /// Inverse of [`PairIndexer::index`].
    pub fn pair(&self, mut idx: usize) -> (usize, usize) {
        debug_assert!(idx < self.len());
        let mut d = 0;
        loop {
            let row = self.n - d - 1;
            if idx < row {
                return (d, d + 1 + idx);
            }
            idx -= row;
            d += 1;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |d| (d + 1..self.n).map(move |d2| (d, d2)))
    }
}

/// Whether the feasible set is constrained to a single cluster (Eq-style
/// single person) or allows any partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SinglePerson,
    MultiPerson,
}

/// Binary assignment of labels (`x`) and same-person indicators (`y`).
///
/// `z` is derived, never stored: see [`derive_z`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionTriple {
    /// `x[d][c] = true` iff detection `d` is labeled with class `c`.
    pub x: Vec<Vec<bool>>,
    /// `y[p] = true` iff the pair with linear index `p` is in one person.
    pub y: Vec<bool>,
    pub mode: Mode,
}

impl SolutionTriple {
    /// All-suppressed solution: nothing selected, nothing joined.
    /// Feasible in both modes with objective 0.
    pub fn all_suppressed(num_detections: usize, num_classes: usize, mode: Mode) -> Self {
        Self {
            x: vec![vec![false; num_classes]; num_detections],
            y: vec![false; PairIndexer::new(num_detections).len()],
            mode,
        }
    }

    pub fn num_detections(&self) -> usize {
        self.x.len()
    }

    pub fn num_classes(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Class assigned to `d`, or `None` when suppressed.
    pub fn label_of(&self, d: usize) -> Option<usize> {
        self.x[d].iter().position(|&v| v)
    }

    /// True iff some class is assigned to `d`.
    pub fn is_selected(&self, d: usize) -> bool {
        self.x[d].iter().any(|&v| v)
    }
}

/// `z[dd'cc'] = x[d][c] * x[d'][c'] * y[dd']` on integral points.
///
/// `d` and `d_prime` may come in either order; `c` is always the class slot
/// of `d` and `c_prime` of `d_prime`.
pub fn derive_z(
    sol: &SolutionTriple,
    d: usize,
    d_prime: usize,
    c: usize,
    c_prime: usize,
) -> Result<bool> {
    let n = sol.num_detections();
    let k = sol.num_classes();
    for (what, index, size) in [
        ("detection", d, n),
        ("detection", d_prime, n),
        ("class", c, k),
        ("class", c_prime, k),
    ] {
        if index >= size {
            return Err(Error::IndexOutOfRange { what, index, size });
        }
    }
    if d == d_prime {
        return Err(Error::InvalidInput(format!(
            "pair requires two distinct detections, got ({d}, {d_prime})"
        )));
    }
    let pair = PairIndexer::new(n).index(d, d_prime);
    Ok(sol.x[d][c] && sol.x[d_prime][c_prime] && sol.y[pair])
}

/// Costs of the minimization problem: `alpha` per (detection, class) and
/// `beta` per (pair, ordered class pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    /// `alpha[d][c]`.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[p][c * |C| + c']` for pair index `p = (d, d')` with `d < d'`;
    /// `c` refers to `d`, `c'` to `d'`.
    pub beta: Vec<Vec<f64>>,
    pub mode: Mode,
}

impl ProblemInstance {
    pub fn num_detections(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }

    pub fn pair_indexer(&self) -> PairIndexer {
        PairIndexer::new(self.num_detections())
    }

    /// `beta` cost for pair `{d, d'}` where `c` labels `d` and `c_prime`
    /// labels `d_prime` (any order of `d`, `d_prime`).
    pub fn beta_for(&self, d: usize, d_prime: usize, c: usize, c_prime: usize) -> f64 {
        let k = self.num_classes();
        let pair = self.pair_indexer().index(d, d_prime);
        if d < d_prime {
            self.beta[pair][c * k + c_prime]
        } else {
            self.beta[pair][c_prime * k + c]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_detections();
        let k = self.num_classes();
        if k == 0 && n > 0 {
            return Err(Error::InvalidInput("instance has detections but no classes".into()));
        }
        for row in &self.alpha {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    context: "alpha row length",
                    expected: k,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite alpha cost".into()));
            }
        }
        let pairs = self.pair_indexer().len();
        if self.beta.len() != pairs {
            return Err(Error::DimensionMismatch {
                context: "beta pair count",
                expected: pairs,
                got: self.beta.len(),
            });
        }
        for row in &self.beta {
            if row.len() != k * k {
                return Err(Error::DimensionMismatch {
                    context: "beta class-combination count",
                    expected: k * k,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite beta cost".into()));
            }
        }
        Ok(())
    }
}

/// Predicted location of one part, or an explicit occlusion marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartPrediction {
    pub class_id: usize,
    pub occluded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl PartPrediction {
    pub fn at(class_id: usize, x: f64, y: f64) -> Self {
        Self {
            class_id,
            occluded: false,
            x: Some(x),
            y: Some(y),
        }
    }

    pub fn occluded(class_id: usize) -> Self {
        Self {
            class_id,
            occluded: true,
            x: None,
            y: None,
        }
    }

    pub fn location(&self) -> Option<(f64, f64)> {
        match (self.occluded, self.x, self.y) {
            (false, Some(x), Some(y)) => Some((x, y)),
            _ => None,
        }
    }
}

/// One person: a location or occlusion marker for every class, plus a
/// ranking confidence (mean unary probability of the selected detections).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPose {
    pub confidence: f64,
    pub parts: Vec<PartPrediction>,
}

impl PersonPose {
    pub fn part(&self, class_id: usize) -> Option<&PartPrediction> {
        self.parts.iter().find(|p| p.class_id == class_id)
    }
}

/// Final output of a solve: one entry per person cluster.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseResult {
    pub persons: Vec<PersonPose>,
}

/// Ground-truth location and visibility of one part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtPart {
    pub class_id: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Ground-truth pose of one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtPerson {
    pub parts: Vec<GtPart>,
    /// Person scale (head size) in pixels.
    pub scale: f64,
    /// Head box for PCKh-style references.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_box: Option<BoundingBox>,
    /// Optional override of the PCK reference size; when absent the torso
    /// diagonal is computed from the joints.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torso_size: Option<f64>,
}

impl GtPerson {
    pub fn part(&self, class_id: usize) -> Option<&GtPart> {
        self.parts.iter().find(|p| p.class_id == class_id)
    }

    pub fn num_visible(&self) -> usize {
        self.parts.iter().filter(|p| p.visible).count()
    }
}

/// A scene of ground-truth poses; the input of the synthetic detector and
/// the reference of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub persons: Vec<GtPerson>,
    pub image_size: ImageSize,
}

impl GroundTruthScene {
    pub fn validate(&self) -> Result<()> {
        for (i, person) in self.persons.iter().enumerate() {
            if person.num_visible() == 0 {
                return Err(Error::InvalidInput(format!(
                    "ground-truth person {i} has no visible part"
                )));
            }
            if !(person.scale > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "ground-truth person {i} has non-positive scale"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_det_solution(x0: &[bool], x1: &[bool], y01: bool) -> SolutionTriple {
        SolutionTriple {
            x: vec![x0.to_vec(), x1.to_vec()],
            y: vec![y01],
            mode: Mode::MultiPerson,
        }
    }

    #[test]
    fn derive_z_all_ones() {
        let sol = two_det_solution(&[true], &[true], true);
        assert!(derive_z(&sol, 0, 1, 0, 0).unwrap());
    }

    #[test]
    fn derive_z_zero_y() {
        let sol = two_det_solution(&[true], &[true], false);
        assert!(!derive_z(&sol, 0, 1, 0, 0).unwrap());
    }

    #[test]
    fn derive_z_zero_x() {
        let sol = two_det_solution(&[true, false], &[false, false], true);
        assert!(!derive_z(&sol, 0, 1, 0, 1).unwrap());
    }

    #[test]
    fn derive_z_out_of_range() {
        let sol = two_det_solution(&[true], &[true], true);
        assert!(matches!(
            derive_z(&sol, 0, 2, 0, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            derive_z(&sol, 0, 1, 1, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    /// The four linearization inequalities hold exactly on every one of the
    /// eight binary input combinations.
    #[test]
    fn derive_z_satisfies_linearization_exhaustively() {
        for bits in 0..8u8 {
            let xa = bits & 1 != 0;
            let xb = bits & 2 != 0;
            let yy = bits & 4 != 0;
            let sol = two_det_solution(&[xa], &[xb], yy);
            let z = derive_z(&sol, 0, 1, 0, 0).unwrap() as i32;
            let (xa, xb, yy) = (xa as i32, xb as i32, yy as i32);
            assert!(xa + xb + yy - 2 <= z);
            assert!(z <= xa);
            assert!(z <= xb);
            assert!(z <= yy);
        }
    }

    #[test]
    fn pair_indexer_roundtrip() {
        for n in 0..12 {
            let idx = PairIndexer::new(n);
            let mut seen = 0;
            for (k, (a, b)) in idx.iter().enumerate() {
                assert_eq!(idx.index(a, b), k);
                assert_eq!(idx.index(b, a), k);
                assert_eq!(idx.pair(k), (a, b));
                seen += 1;
            }
            assert_eq!(seen, idx.len());
        }
    }

    #[test]
    fn detection_clamps_unaries() {
        let det = Detection::new(
            0,
            1.0,
            2.0,
            10.0,
            BoundingBox::centered(1.0, 2.0, 10.0),
            vec![0.0, 1.0, 0.3],
        );
        assert_eq!(det.unary[0], PROB_EPS);
        assert_eq!(det.unary[1], 1.0 - PROB_EPS);
        assert_eq!(det.unary[2], 0.3);
    }

    #[test]
    fn detection_set_validation_catches_bad_ids() {
        let class = PartClass {
            id: 0,
            name: "head".into(),
        };
        let det = Detection::new(
            3,
            0.0,
            0.0,
            1.0,
            BoundingBox::centered(0.0, 0.0, 1.0),
            vec![0.5],
        );
        let set = DetectionSet {
            classes: vec![class],
            detections: vec![det],
            image_size: ImageSize {
                width: 10.0,
                height: 10.0,
            },
        };
        assert!(set.validate().is_err());
    }

    #[test]
    fn beta_lookup_respects_detection_order() {
        let inst = ProblemInstance {
            alpha: vec![vec![0.0; 2]; 2],
            beta: vec![vec![1.0, 2.0, 3.0, 4.0]],
            mode: Mode::MultiPerson,
        };
        // beta[(0,1)][c=0,c'=1] = 2.0; asking with swapped detections swaps classes.
        assert_eq!(inst.beta_for(0, 1, 0, 1), 2.0);
        assert_eq!(inst.beta_for(1, 0, 1, 0), 2.0);
        assert_eq!(inst.beta_for(0, 1, 1, 0), 3.0);
    }
}
