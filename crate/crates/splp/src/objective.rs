//! Cost construction and objective evaluation.
//!
//! Costs are negative log-odds in natural log: `cost(p) = ln((1-p)/p)`.
//! Probabilities produced by the logistic model travel as [`Prob`], which
//! carries the exact log-odds alongside the rounded probability value, so
//! converting model scores to costs never loses precision to the
//! `p -> 1` saturation of f64 (for |log-odds| beyond ~36 the probability
//! itself is no longer representable away from 0/1, but the cost still is).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_z, Mode, ProblemInstance, SolutionTriple};

/// A probability in the open interval (0, 1) stored together with its exact
/// log-odds `ln(p/(1-p))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prob {
    value: f64,
    log_odds: f64,
}

impl Prob {
    /// From a plain probability value. Fails outside (0, 1).
    pub fn from_value(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(Self {
            value: p,
            log_odds: log_odds(p),
        })
    }

    /// From a log-odds score `t`: the probability `1/(1 + exp(-t))`.
    pub fn from_log_odds(t: f64) -> Self {
        Self {
            value: sigmoid(t),
            log_odds: t,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn log_odds(&self) -> f64 {
        self.log_odds
    }

    /// The log-odds cost `ln((1-p)/p)` of this probability.
    pub fn cost(&self) -> f64 {
        -self.log_odds
    }
}

/// `ln(p/(1-p))`, computed as `ln(p) - ln_1p(-p)` for accuracy near 1.
pub fn log_odds(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `1/(1 + exp(-t))`, evaluated in the numerically stable branch.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Unary cost `alpha = ln((1-p)/p)`: strictly decreasing, zero at `p = 0.5`.
pub fn unary_cost(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(-log_odds(p))
}

/// Pairwise cost `beta = ln((1-p)/p)`; same contract as [`unary_cost`].
pub fn pairwise_cost(p: f64) -> Result<f64> {
    unary_cost(p)
}

/// Objective of a candidate solution, split into its two inner products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub unary_part: f64,
    pub pairwise_part: f64,
    pub total: f64,
}

/// Evaluates the objective `<alpha, x> + <beta, z>` with `z` derived from
/// the integral solution. Does not require feasibility.
pub fn evaluate(inst: &ProblemInstance, sol: &SolutionTriple) -> Result<ObjectiveValue> {
    let n = inst.num_detections();
    let k = inst.num_classes();
    if sol.num_detections() != n {
        return Err(Error::DimensionMismatch {
            context: "solution detections vs instance",
            expected: n,
            got: sol.num_detections(),
        });
    }
    if n > 0 && sol.num_classes() != k {
        return Err(Error::DimensionMismatch {
            context: "solution classes vs instance",
            expected: k,
            got: sol.num_classes(),
        });
    }
    let pairs = inst.pair_indexer();
    if sol.y.len() != pairs.len() {
        return Err(Error::DimensionMismatch {
            context: "solution pair count vs instance",
            expected: pairs.len(),
            got: sol.y.len(),
        });
    }

    let mut unary_part = 0.0;
    for d in 0..n {
        for c in 0..k {
            if sol.x[d][c] {
                unary_part += inst.alpha[d][c];
            }
        }
    }

    // Infeasible solutions may label a detection with several classes; the
    // cubic form sums every active combination, so collect all of them.
    let labels: Vec<Vec<usize>> = (0..n)
        .map(|d| (0..k).filter(|&c| sol.x[d][c]).collect())
        .collect();

    let mut pairwise_part = 0.0;
    for (p, (d, d2)) in pairs.iter().enumerate() {
        if !sol.y[p] {
            continue;
        }
        for &c in &labels[d] {
            for &c2 in &labels[d2] {
                debug_assert!(derive_z(sol, d, d2, c, c2).unwrap());
                pairwise_part += inst.beta[p][c * k + c2];
            }
        }
    }

    Ok(ObjectiveValue {
        unary_part,
        pairwise_part,
        total: unary_part + pairwise_part,
    })
}

/// Builds a [`ProblemInstance`] directly from cost matrices (used by tests
/// and the brute-force oracle entry points).
pub fn instance_from_costs(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>, mode: Mode) -> ProblemInstance {
    ProblemInstance { alpha, beta, mode }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairIndexer;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unary_cost_examples() {
        assert_eq!(unary_cost(0.5).unwrap(), 0.0);
        // ln(0.1/0.9), frozen from high-precision evaluation.
        assert_abs_diff_eq!(unary_cost(0.9).unwrap(), -2.1972245773362196, epsilon = 1e-12);
        // Antisymmetry oracle: cost(p) = -cost(1-p).
        assert_abs_diff_eq!(
            unary_cost(0.1).unwrap(),
            -unary_cost(0.9).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pairwise_cost_examples() {
        assert_eq!(pairwise_cost(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(
            pairwise_cost(0.75).unwrap(),
            -(3.0f64).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cost_rejects_boundary() {
        assert!(unary_cost(0.0).is_err());
        assert!(unary_cost(1.0).is_err());
        assert!(unary_cost(-0.1).is_err());
        assert!(unary_cost(f64::NAN).is_err());
    }

    #[test]
    fn prob_log_odds_roundtrip_is_exact() {
        for t in [-30.0, -12.5, -1.0, 0.0, 0.3, 17.0, 30.0] {
            let p = Prob::from_log_odds(t);
            assert_eq!(pairwise_cost_of(&p), -t);
        }
    }

    fn pairwise_cost_of(p: &Prob) -> f64 {
        p.cost()
    }

    #[test]
    fn evaluate_empty_selection_is_zero() {
        let inst = instance_from_costs(
            vec![vec![1.5, -0.5]; 3],
            vec![vec![1.0; 4]; 3],
            Mode::MultiPerson,
        );
        let sol = SolutionTriple::all_suppressed(3, 2, Mode::MultiPerson);
        let v = evaluate(&inst, &sol).unwrap();
        assert_eq!(v.total, 0.0);
        assert_eq!(v.unary_part, 0.0);
        assert_eq!(v.pairwise_part, 0.0);
    }

    #[test]
    fn evaluate_single_label() {
        let inst = instance_from_costs(vec![vec![-0.7, 0.2]], vec![], Mode::MultiPerson);
        let mut sol = SolutionTriple::all_suppressed(1, 2, Mode::MultiPerson);
        sol.x[0][0] = true;
        assert_eq!(evaluate(&inst, &sol).unwrap().total, -0.7);
    }

    /// Two joined labeled detections: alpha sum plus the one active beta
    /// term, checked against a hand evaluation of the 2-node objective.
    #[test]
    fn evaluate_two_joined() {
        let alpha = vec![vec![-1.0, 0.5], vec![0.25, -2.0]];
        // beta[(0,1)] as a 2x2 matrix (c, c').
        let beta = vec![vec![10.0, -3.0, 20.0, 30.0]];
        let inst = instance_from_costs(alpha, beta, Mode::MultiPerson);
        let mut sol = SolutionTriple::all_suppressed(2, 2, Mode::MultiPerson);
        sol.x[0][0] = true;
        sol.x[1][1] = true;
        sol.y[0] = true;
        let v = evaluate(&inst, &sol).unwrap();
        assert_eq!(v.unary_part, -3.0);
        assert_eq!(v.pairwise_part, -3.0);
        assert_eq!(v.total, -6.0);
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let inst = instance_from_costs(vec![vec![0.0]; 2], vec![vec![0.0]], Mode::MultiPerson);
        let sol = SolutionTriple::all_suppressed(3, 1, Mode::MultiPerson);
        assert!(evaluate(&inst, &sol).is_err());
    }

    /// Brute-force reimplementation of the cubic form in x and y; `evaluate`
    /// must agree on random integral solutions.
    fn cubic_form(inst: &ProblemInstance, sol: &SolutionTriple) -> f64 {
        let n = inst.num_detections();
        let k = inst.num_classes();
        let pairs = PairIndexer::new(n);
        let mut total = 0.0;
        for d in 0..n {
            for c in 0..k {
                if sol.x[d][c] {
                    total += inst.alpha[d][c];
                }
            }
        }
        for d in 0..n {
            for d2 in d + 1..n {
                for c in 0..k {
                    for c2 in 0..k {
                        let z = (sol.x[d][c] as i32)
                            * (sol.x[d2][c2] as i32)
                            * (sol.y[pairs.index(d, d2)] as i32);
                        total += inst.beta[pairs.index(d, d2)][c * k + c2] * z as f64;
                    }
                }
            }
        }
        total
    }

    proptest! {
        #[test]
        fn evaluate_matches_cubic_form(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..5usize);
            let k = rng.gen_range(1..4usize);
            let pairs = PairIndexer::new(n);
            let alpha: Vec<Vec<f64>> =
                (0..n).map(|_| (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let beta: Vec<Vec<f64>> = (0..pairs.len())
                .map(|_| (0..k * k).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let inst = instance_from_costs(alpha, beta, Mode::MultiPerson);
            let mut sol = SolutionTriple::all_suppressed(n, k, Mode::MultiPerson);
            for d in 0..n {
                // Occasionally multi-label a detection: evaluate must agree
                // with the cubic form on infeasible points too.
                for c in 0..k {
                    if rng.gen_bool(0.4) {
                        sol.x[d][c] = true;
                    }
                }
            }
            for p in 0..pairs.len() {
                sol.y[p] = rng.gen_bool(0.5);
            }
            let v = evaluate(&inst, &sol).unwrap();
            prop_assert!((v.total - cubic_form(&inst, &sol)).abs() < 1e-12);
            prop_assert!((v.total - (v.unary_part + v.pairwise_part)).abs() <= 1e-12 * v.total.abs().max(1.0));
        }

        #[test]
        fn unary_cost_antisymmetry_and_monotonicity(p1 in 0.001f64..0.999, p2 in 0.001f64..0.999) {
            let c1 = unary_cost(p1).unwrap();
            prop_assert!((c1 + unary_cost(1.0 - p1).unwrap()).abs() < 1e-12);
            if p1 < p2 {
                prop_assert!(c1 > unary_cost(p2).unwrap());
            }
        }
    }
}
