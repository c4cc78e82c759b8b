//! Pairwise probability models: geometric features for same-class
//! clustering, a 2D distance/angle histogram posterior for cross-class
//! kinematics, and one L2-regularized logistic regression per class pair.
//!
//! Inference never round-trips through probabilities: the cost of a
//! feature vector is the negative inner product with the trained
//! parameters, which equals `ln((1-p)/p)` of the logistic probability
//! identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clamp_probability, Detection, DetectionSet, Mode, ProblemInstance};
use crate::objective;
use crate::par;

/// Same-class feature length: 6 base + 6 squared + 6 exponential + bias.
pub const SAME_CLASS_DIM: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    SameClass,
    CrossClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

/// How detection appearance (unary vectors) enters cross-class features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppearanceMode {
    /// Posterior and bias only.
    None,
    /// Append both full unary vectors.
    Full,
    /// Append only the two unary entries of the classes in question.
    Scalar,
}

impl AppearanceMode {
    /// Cross-class feature length for `k` classes.
    pub fn cross_dim(&self, k: usize) -> usize {
        match self {
            AppearanceMode::None => 2,
            AppearanceMode::Full => 2 + 2 * k,
            AppearanceMode::Scalar => 4,
        }
    }
}

fn mean_scale(d: &Detection, d2: &Detection) -> f64 {
    (d.h + d2.h) / 2.0
}

/// Intersection-over-{union, min, max} of two boxes; degenerate boxes give 0.
fn overlap_terms(d: &Detection, d2: &Detection) -> (f64, f64, f64) {
    let inter = d.bbox.intersection_area(&d2.bbox);
    let (a1, a2) = (d.bbox.area(), d2.bbox.area());
    let union = a1 + a2 - inter;
    let io_union = if union > 0.0 { inter / union } else { 0.0 };
    let io_min = if a1.min(a2) > 0.0 {
        inter / a1.min(a2)
    } else {
        0.0
    };
    let io_max = if a1.max(a2) > 0.0 {
        inter / a1.max(a2)
    } else {
        0.0
    };
    (io_union, io_min, io_max)
}

/// Scale-normalized offsets and box overlaps, augmented with squares and
/// exponentials: (base, base^2, exp(-base), 1). Symmetric in its arguments.
pub fn same_class_features(d: &Detection, d2: &Detection) -> FeatureVector {
    let h = mean_scale(d, d2);
    let dx = (d.x - d2.x).abs() / h;
    let dy = (d.y - d2.y).abs() / h;
    let dh = (d.h - d2.h).abs() / h;
    let (io_union, io_min, io_max) = overlap_terms(d, d2);
    let base = [dx, dy, dh, io_union, io_min, io_max];
    let mut values = Vec::with_capacity(SAME_CLASS_DIM);
    values.extend_from_slice(&base);
    values.extend(base.iter().map(|v| v * v));
    values.extend(base.iter().map(|v| (-v).exp()));
    values.push(1.0);
    FeatureVector {
        values,
        kind: FeatureKind::SameClass,
    }
}

/// Euclidean distance (in units of the mean scale) and the angle of the
/// vector from the lower-id to the higher-id detection, in [-pi, pi).
pub fn pair_geometry(lo: &Detection, hi: &Detection) -> (f64, f64) {
    debug_assert!(lo.id < hi.id);
    let h = mean_scale(lo, hi);
    let dx = hi.x - lo.x;
    let dy = hi.y - lo.y;
    let s = (dx * dx + dy * dy).sqrt() / h;
    let mut r = dy.atan2(dx);
    if r >= std::f64::consts::PI {
        r = -std::f64::consts::PI;
    }
    (s, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    /// Distance bins over `[0, s_max)` in mean-scale units.
    pub s_bins: usize,
    pub s_max: f64,
    /// Angle bins over `[-pi, pi)`.
    pub r_bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            s_bins: 16,
            s_max: 16.0,
            r_bins: 16,
        }
    }
}

impl HistogramConfig {
    fn bin_index(&self, s: f64, r: f64) -> usize {
        let sb = ((s / self.s_max * self.s_bins as f64) as usize).min(self.s_bins - 1);
        let rf = (r + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        let rb = ((rf * self.r_bins as f64) as usize).min(self.r_bins - 1);
        sb * self.r_bins + rb
    }

    fn num_bins(&self) -> usize {
        self.s_bins * self.r_bins
    }
}

/// Normalized positive/negative 2D histograms for one ordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTable {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Histogram posterior over ordered class pairs (c, c'), c != c'.
///
/// Both orders are kept as separate tables: the angle convention is fixed
/// from the lower-id detection to the higher-id one, and the two orders of
/// a class pair see mirrored geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPosterior {
    pub config: HistogramConfig,
    pub num_classes: usize,
    /// Entry at `c * num_classes + c2` for c != c2.
    pub tables: Vec<Option<HistogramTable>>,
}

/// One geometric training sample for the histograms: ordered classes of
/// the (lower-id, higher-id) detections and whether they belong to the
/// same person.
#[derive(Debug, Clone, Copy)]
pub struct GeomSample {
    pub c: usize,
    pub c_prime: usize,
    pub s: f64,
    pub r: f64,
    pub positive: bool,
}

impl HistogramPosterior {
    /// Fits normalized, Laplace-smoothed tables per ordered class pair.
    /// Every cross-class pair present in the data needs at least one
    /// positive and one negative sample; pairs absent from the data get no
    /// table and fail at lookup time.
    pub fn fit(samples: &[GeomSample], num_classes: usize, config: HistogramConfig) -> Result<Self> {
        let bins = config.num_bins();
        let mut counts: Vec<Option<(Vec<f64>, Vec<f64>, usize, usize)>> =
            vec![None; num_classes * num_classes];
        for s in samples {
            if s.c == s.c_prime {
                continue;
            }
            let slot = counts[s.c * num_classes + s.c_prime].get_or_insert_with(|| {
                (vec![0.0; bins], vec![0.0; bins], 0, 0)
            });
            let bin = config.bin_index(s.s, s.r);
            if s.positive {
                slot.0[bin] += 1.0;
                slot.2 += 1;
            } else {
                slot.1[bin] += 1.0;
                slot.3 += 1;
            }
        }
        let mut tables = Vec::with_capacity(counts.len());
        for (idx, slot) in counts.into_iter().enumerate() {
            match slot {
                None => tables.push(None),
                Some((mut pos, mut neg, n_pos, n_neg)) => {
                    let (c, c_prime) = (idx / num_classes, idx % num_classes);
                    if n_pos == 0 {
                        return Err(Error::EmptyTrainingSet {
                            label: "positive",
                            c,
                            c_prime,
                        });
                    }
                    if n_neg == 0 {
                        return Err(Error::EmptyTrainingSet {
                            label: "negative",
                            c,
                            c_prime,
                        });
                    }
                    // Laplace smoothing: one pseudo-count per bin.
                    let pos_total = n_pos as f64 + bins as f64;
                    let neg_total = n_neg as f64 + bins as f64;
                    for v in pos.iter_mut() {
                        *v = (*v + 1.0) / pos_total;
                    }
                    for v in neg.iter_mut() {
                        *v = (*v + 1.0) / neg_total;
                    }
                    tables.push(Some(HistogramTable { pos, neg }));
                }
            }
        }
        Ok(Self {
            config,
            num_classes,
            tables,
        })
    }

    fn table(&self, c: usize, c_prime: usize) -> Result<&HistogramTable> {
        self.tables
            .get(c * self.num_classes + c_prime)
            .and_then(|t| t.as_ref())
            .ok_or(Error::MissingClassPair { c, c_prime })
    }

    /// `p(same person | S, R)` with equal class priors:
    /// `pos / (pos + neg)` at the bin the geometry falls into.
    pub fn posterior(&self, c: usize, c_prime: usize, s: f64, r: f64) -> Result<f64> {
        let table = self.table(c, c_prime)?;
        let bin = self.config.bin_index(s, r);
        let p = table.pos[bin];
        let n = table.neg[bin];
        Ok(p / (p + n))
    }
}

/// Cross-class feature: histogram posterior of the pair geometry, optional
/// appearance block, bias. `lo.id < hi.id` and `c` is the class of `lo`.
pub fn cross_class_features(
    lo: &Detection,
    hi: &Detection,
    c: usize,
    c_prime: usize,
    hist: &HistogramPosterior,
    appearance: AppearanceMode,
) -> Result<FeatureVector> {
    debug_assert!(c != c_prime);
    let (s, r) = pair_geometry(lo, hi);
    let posterior = hist.posterior(c, c_prime, s, r)?;
    let mut values = Vec::with_capacity(appearance.cross_dim(hist.num_classes));
    values.push(posterior);
    match appearance {
        AppearanceMode::None => {}
        AppearanceMode::Full => {
            values.extend_from_slice(&lo.unary);
            values.extend_from_slice(&hi.unary);
        }
        AppearanceMode::Scalar => {
            values.push(lo.unary[c]);
            values.push(hi.unary[c_prime]);
        }
    }
    values.push(1.0);
    Ok(FeatureVector {
        values,
        kind: FeatureKind::CrossClass,
    })
}

/// Log-likelihood of the logistic model plus the Gaussian prior on the
/// weights. The bias (last component) is not penalized so the base rate
/// stays unbiased.
pub fn penalized_log_likelihood(
    features: &[Vec<f64>],
    labels: &[bool],
    theta: &[f64],
    sigma: f64,
) -> f64 {
    let mut ll = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let t: f64 = f.iter().zip(theta).map(|(a, b)| a * b).sum();
        // y ln p + (1-y) ln (1-p) in the saturation-safe form.
        ll += if y { -softplus(-t) } else { -softplus(t) };
    }
    let penalty: f64 = theta[..theta.len() - 1].iter().map(|v| v * v).sum();
    ll - penalty / (2.0 * sigma * sigma)
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Gradient of [`penalized_log_likelihood`].
pub fn logistic_gradient(
    features: &[Vec<f64>],
    labels: &[bool],
    theta: &[f64],
    sigma: f64,
) -> Vec<f64> {
    let dim = theta.len();
    let mut g = vec![0.0; dim];
    for (f, &y) in features.iter().zip(labels) {
        let t: f64 = f.iter().zip(theta).map(|(a, b)| a * b).sum();
        let resid = (y as u8 as f64) - objective::sigmoid(t);
        for (gi, fi) in g.iter_mut().zip(f) {
            *gi += resid * fi;
        }
    }
    for (gi, ti) in g.iter_mut().zip(theta).take(dim - 1) {
        *gi -= ti / (sigma * sigma);
    }
    g
}

/// Maximizes the penalized log-likelihood by damped Newton steps with an
/// Armijo backtracking line search; the objective never decreases across
/// iterations. Converges to gradient max-norm <= 1e-8.
pub fn train_logistic(features: &[Vec<f64>], labels: &[bool], sigma: f64) -> Result<Vec<f64>> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::InvalidInput(
            "logistic training requires matching, non-empty features and labels".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("prior sigma must be positive".into()));
    }
    let dim = features[0].len();
    for f in features {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "feature vector length",
                expected: dim,
                got: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::InvalidInput(
            "logistic training requires both labels present".into(),
        ));
    }

    let inv_sigma2 = 1.0 / (sigma * sigma);
    let mut theta = vec![0.0; dim];
    let mut ll = penalized_log_likelihood(features, labels, &theta, sigma);
    for _ in 0..200 {
        let g = logistic_gradient(features, labels, &theta, sigma);
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= 1e-8 {
            break;
        }

        // Negative Hessian: X^T W X + prior, W = p (1 - p).
        let mut h = vec![0.0; dim * dim];
        for f in features.iter() {
            let t: f64 = f.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = objective::sigmoid(t);
            let w = (p * (1.0 - p)).max(1e-12);
            for i in 0..dim {
                let wf = w * f[i];
                for j in i..dim {
                    h[i * dim + j] += wf * f[j];
                }
            }
        }
        for i in 0..dim - 1 {
            h[i * dim + i] += inv_sigma2;
        }
        h[dim * dim - 1] += 1e-10; // keep the unpenalized bias row invertible
        for i in 0..dim {
            for j in 0..i {
                h[i * dim + j] = h[j * dim + i];
            }
        }

        let step = cholesky_solve(&mut h, dim, &g)?;
        // Backtracking on the ascent direction.
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&step)
                .map(|(th, st)| th + t * st)
                .collect();
            let cand_ll = penalized_log_likelihood(features, labels, &cand, sigma);
            if cand_ll >= ll + 1e-4 * t * slope {
                theta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break; // no ascent possible beyond numerical resolution
        }
    }
    Ok(theta)
}

/// Solves `H x = b` for symmetric positive definite `H` (destroyed in
/// place) by Cholesky factorization.
fn cholesky_solve(h: &mut [f64], dim: usize, b: &[f64]) -> Result<Vec<f64>> {
    // Factor H = L L^T, L stored in the lower triangle.
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = h[i * dim + j];
            for l in 0..j {
                sum -= h[i * dim + l] * h[j * dim + l];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InvalidInput(
                        "Hessian not positive definite".into(),
                    ));
                }
                h[i * dim + j] = sum.sqrt();
            } else {
                h[i * dim + j] = sum / h[j * dim + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..dim {
        for j in 0..i {
            x[i] -= h[i * dim + j] * x[j];
        }
        x[i] /= h[i * dim + i];
    }
    for i in (0..dim).rev() {
        for j in i + 1..dim {
            x[i] -= h[j * dim + i] * x[j];
        }
        x[i] /= h[i * dim + i];
    }
    Ok(x)
}

/// Cost of a feature vector under trained parameters: `-<f, theta>`,
/// never via the probability round-trip.
pub fn predict_cost(f: &FeatureVector, theta: &[f64]) -> Result<f64> {
    if f.values.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            context: "feature vector vs parameters",
            expected: theta.len(),
            got: f.values.len(),
        });
    }
    Ok(-f.values.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>())
}

/// Trained parameters for one unordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub c: usize,
    pub c_prime: usize,
    pub values: Vec<f64>,
}

/// The full pairwise model: per-class-pair logistic parameters plus the
/// histogram posterior. Persisted as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseModel {
    pub sigma: f64,
    pub appearance: AppearanceMode,
    pub num_classes: usize,
    pub histograms: HistogramPosterior,
    /// Sorted by (c, c_prime) with c <= c_prime; exactly one entry per
    /// unordered pair that was trainable.
    pub theta: Vec<ThetaEntry>,
}

impl PairwiseModel {
    pub fn theta_for(&self, c: usize, c_prime: usize) -> Result<&[f64]> {
        let key = (c.min(c_prime), c.max(c_prime));
        self.theta
            .binary_search_by_key(&key, |e| (e.c, e.c_prime))
            .map(|i| self.theta[i].values.as_slice())
            .map_err(|_| Error::MissingClassPair {
                c: key.0,
                c_prime: key.1,
            })
    }

    /// Pairwise cost for detections `lo.id < hi.id` labeled `c_lo`, `c_hi`.
    pub fn beta(&self, lo: &Detection, hi: &Detection, c_lo: usize, c_hi: usize) -> Result<f64> {
        let theta = self.theta_for(c_lo, c_hi)?;
        let f = if c_lo == c_hi {
            same_class_features(lo, hi)
        } else {
            cross_class_features(lo, hi, c_lo, c_hi, &self.histograms, self.appearance)?
        };
        predict_cost(&f, theta)
    }
}

/// Assembles the cost instance: `alpha` from the unary probabilities,
/// `beta` from the pairwise model for every pair and ordered class
/// combination.
pub fn build_instance(
    dets: &DetectionSet,
    model: &PairwiseModel,
    mode: Mode,
) -> Result<ProblemInstance> {
    dets.validate()?;
    let k = dets.num_classes();
    if model.num_classes != k {
        return Err(Error::DimensionMismatch {
            context: "model classes vs detection set",
            expected: k,
            got: model.num_classes,
        });
    }
    let alpha: Vec<Vec<f64>> = dets
        .detections
        .iter()
        .map(|d| {
            d.unary
                .iter()
                .map(|&p| objective::unary_cost(clamp_probability(p)).expect("clamped"))
                .collect()
        })
        .collect();

    let pairs = dets.pair_indexer();
    let beta_results: Vec<Result<Vec<f64>>> = par::map_range(pairs.len(), |p| {
        let (lo, hi) = pairs.pair(p);
        let (lo, hi) = (&dets.detections[lo], &dets.detections[hi]);
        let mut row = Vec::with_capacity(k * k);
        for c in 0..k {
            for c2 in 0..k {
                row.push(model.beta(lo, hi, c, c2)?);
            }
        }
        Ok(row)
    });
    let mut beta = Vec::with_capacity(pairs.len());
    for row in beta_results {
        beta.push(row?);
    }
    Ok(ProblemInstance { alpha, beta, mode })
}
