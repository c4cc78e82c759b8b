//! Branch-and-cut minimization over the feasible set, with a certified
//! optimality gap, plus the exhaustive oracle and pose extraction.
//!
//! The search solves a sequence of relaxations starting from the trivial
//! unconstrained problem. Constraint rows enter lazily: whenever the
//! relaxation produces an integral point, violated inequalities are found
//! (breadth-first search for transitivity, direct scans for the rest),
//! installed as cuts and the relaxation re-solved. Fractional points are
//! resolved by branching on the most fractional label variable first,
//! then the most fractional pairing variable, ties to the lowest index.
//!
//! Pairwise (`z`) variables are handled lazily as well: until a cut
//! references a combination, its best-case contribution `min(0, beta)` is
//! carried as a constant, which is exactly the optimum of the unconstrained
//! relaxation. Profitable combinations (`beta < 0`) enter with their three
//! upper-bounding rows; costly ones (`beta > 0`) with the single lower
//! bounding row. The reported lower bound is the Lagrangian bound of the
//! active relaxation, valid regardless of primal tolerances.

use std::collections::HashSet;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{self, Violation};
use crate::error::{Error, Result};
use crate::lp::{BasisSnapshot, Lp, LpStatus};
use crate::model::{
    DetectionSet, Mode, PairIndexer, PartPrediction, PersonPose, PoseResult, ProblemInstance,
    SolutionTriple,
};
use crate::objective::{self, ObjectiveValue};
use crate::par;

/// Integrality threshold for relaxation values.
const INT_TOL: f64 = 1e-6;
/// Incumbent must improve by this much to replace the previous one.
const IMPROVE_TOL: f64 = 1e-12;

/// Maximum detections accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_DETECTIONS: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Terminate once (UB - LB) / max(|LB|, eps) falls below this.
    pub gap_tolerance: f64,
    /// Node budget for the search tree.
    pub max_nodes: usize,
    /// Wall-clock budget in seconds.
    pub max_wall_time: f64,
    /// Also separate transitivity/linearization at fractional points.
    pub fractional_separation: bool,
    /// Install uniqueness and suppression rows up front instead of lazily.
    pub preinstall_structural: bool,
    /// Cap on violations converted to cuts per separation round.
    pub cut_batch: usize,
    /// Reserved tie-break seed; selection rules break every tie by index,
    /// so this only pins determinism if a randomized rule is ever chosen.
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gap_tolerance: 0.01,
            max_nodes: 5_000,
            max_wall_time: 900.0,
            fractional_separation: false,
            preinstall_structural: false,
            cut_batch: constraints::MAX_VIOLATIONS_PER_ROUND,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    GapReached,
    Limit,
}

/// One line of the solve log, recorded after each processed node.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LogRecord {
    pub node: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub cuts_added: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverReport {
    pub best_objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub cuts_added: usize,
    pub lp_iterations: u64,
    pub status: SolveStatus,
    pub wall_time_secs: f64,
    pub log: Vec<LogRecord>,
}

/// Relative gap with the |LB| denominator convention (the optimum is never
/// above 0, so |LB| >= |UB| and this is the smaller of the two readings).
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if !lower.is_finite() {
        return f64::INFINITY;
    }
    let diff = upper - lower;
    if diff <= 0.0 {
        0.0
    } else {
        diff / lower.abs().max(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CutKey {
    /// Clique form of uniqueness for one detection.
    Uniqueness(u32),
    /// Suppression row for (pair, endpoint).
    Suppression(u32, u32),
    /// Triangle y[a,mid] + y[mid,b] - y[a,b] <= 1.
    Transitivity(u32, u32, u32),
    /// Aggregated single-person row for a pair.
    SinglePerson(u32),
}

struct Node {
    lower_bound: f64,
    /// (lp var, lo, hi), cumulative from the root.
    fixings: Vec<(usize, f64, f64)>,
    basis: Option<Rc<BasisSnapshot>>,
}

struct Engine<'a> {
    inst: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    n: usize,
    k: usize,
    pairs: PairIndexer,
    lp: Lp,
    /// LP var of x[d][c] at `d * k + c`.
    x_vars: Vec<usize>,
    /// LP var of y[p] per pair index.
    y_vars: Vec<usize>,
    /// LP var of z[(p, c, c')] at `p * k * k + c * k + c'`; MAX = not yet
    /// instantiated.
    z_vars: Vec<u32>,
    /// Sum of min(0, beta) over combinations without a z variable.
    uninstantiated_bonus: f64,
    installed: HashSet<CutKey>,
    cuts_added: usize,
}

impl<'a> Engine<'a> {
    fn new(inst: &'a ProblemInstance, cfg: &'a SolverConfig) -> Self {
        let n = inst.num_detections();
        let k = inst.num_classes();
        let pairs = inst.pair_indexer();
        let mut lp = Lp::new();
        let mut x_vars = Vec::with_capacity(n * k);
        for d in 0..n {
            for c in 0..k {
                x_vars.push(lp.add_var(inst.alpha[d][c], 0.0, 1.0));
            }
        }
        let mut y_vars = Vec::with_capacity(pairs.len());
        for _ in 0..pairs.len() {
            y_vars.push(lp.add_var(0.0, 0.0, 1.0));
        }
        let uninstantiated_bonus: f64 = inst
            .beta
            .iter()
            .flat_map(|row| row.iter())
            .map(|&b| b.min(0.0))
            .sum();
        let mut engine = Self {
            inst,
            cfg,
            n,
            k,
            pairs,
            lp,
            x_vars,
            y_vars,
            z_vars: vec![u32::MAX; pairs.len() * k * k],
            uninstantiated_bonus,
            installed: HashSet::new(),
            cuts_added: 0,
        };
        if cfg.preinstall_structural {
            for d in 0..n {
                engine.install_uniqueness(d);
            }
            for (p, (d, d2)) in pairs.iter().enumerate() {
                engine.install_suppression(p, d);
                engine.install_suppression(p, d2);
            }
        }
        engine
    }

    fn x(&self, d: usize, c: usize) -> usize {
        self.x_vars[d * self.k + c]
    }

    fn z_slot(&self, p: usize, c: usize, c2: usize) -> usize {
        (p * self.k + c) * self.k + c2
    }

    /// Clique row `sum_c x[d][c] <= 1`: the strongest valid form of the
    /// pairwise uniqueness family.
    fn install_uniqueness(&mut self, d: usize) -> bool {
        if !self.installed.insert(CutKey::Uniqueness(d as u32)) {
            return false;
        }
        let terms: Vec<(usize, f64)> = (0..self.k).map(|c| (self.x(d, c), 1.0)).collect();
        self.lp.add_row(&terms, 1.0);
        self.cuts_added += 1;
        true
    }

    /// `y[p] - sum_c x[endpoint][c] <= 0`.
    fn install_suppression(&mut self, p: usize, endpoint: usize) -> bool {
        if !self
            .installed
            .insert(CutKey::Suppression(p as u32, endpoint as u32))
        {
            return false;
        }
        let mut terms = vec![(self.y_vars[p], 1.0)];
        terms.extend((0..self.k).map(|c| (self.x(endpoint, c), -1.0)));
        self.lp.add_row(&terms, 0.0);
        self.cuts_added += 1;
        true
    }

    /// `y[a,mid] + y[mid,b] - y[a,b] <= 1`.
    fn install_transitivity(&mut self, a: usize, mid: usize, b: usize) -> bool {
        if !self
            .installed
            .insert(CutKey::Transitivity(a as u32, mid as u32, b as u32))
        {
            return false;
        }
        let terms = [
            (self.y_vars[self.pairs.index(a, mid)], 1.0),
            (self.y_vars[self.pairs.index(mid, b)], 1.0),
            (self.y_vars[self.pairs.index(a, b)], -1.0),
        ];
        self.lp.add_row(&terms, 1.0);
        self.cuts_added += 1;
        true
    }

    /// Aggregated single-person row
    /// `sum_c x[d][c] + sum_c x[d'][c] - y[p] <= 1`.
    fn install_single_person(&mut self, p: usize) -> bool {
        if !self.installed.insert(CutKey::SinglePerson(p as u32)) {
            return false;
        }
        let (d, d2) = self.pairs.pair(p);
        let mut terms: Vec<(usize, f64)> = (0..self.k).map(|c| (self.x(d, c), 1.0)).collect();
        terms.extend((0..self.k).map(|c| (self.x(d2, c), 1.0)));
        terms.push((self.y_vars[p], -1.0));
        self.lp.add_row(&terms, 1.0);
        self.cuts_added += 1;
        true
    }

    /// Creates the z variable of one (pair, class combination) with its
    /// bounding rows and removes its contribution from the constant bonus.
    fn instantiate_z(&mut self, p: usize, c: usize, c2: usize) -> bool {
        let slot = self.z_slot(p, c, c2);
        if self.z_vars[slot] != u32::MAX {
            return false;
        }
        let beta = self.inst.beta[p][c * self.k + c2];
        let (d, d2) = self.pairs.pair(p);
        let z = self.lp.add_var(beta, 0.0, 1.0);
        self.z_vars[slot] = z as u32;
        if beta < 0.0 {
            self.uninstantiated_bonus -= beta;
            // Profitable z is pushed up by the objective; the three upper
            // bounds pin it to min(x, x', y).
            self.lp.add_row(&[(z, 1.0), (self.x(d, c), -1.0)], 0.0);
            self.lp.add_row(&[(z, 1.0), (self.x(d2, c2), -1.0)], 0.0);
            self.lp.add_row(&[(z, 1.0), (self.y_vars[p], -1.0)], 0.0);
            self.cuts_added += 3;
        } else {
            // Costly z is pushed down; only the lower bound can cut.
            self.lp.add_row(
                &[
                    (self.x(d, c), 1.0),
                    (self.x(d2, c2), 1.0),
                    (self.y_vars[p], 1.0),
                    (z, -1.0),
                ],
                2.0,
            );
            self.cuts_added += 1;
        }
        true
    }

    /// Applies structural violations as cuts; returns how many new rows
    /// were installed.
    fn install_violations(&mut self, violations: &[Violation]) -> usize {
        let mut new_rows = 0;
        for v in violations {
            let fresh = match *v {
                Violation::Uniqueness { d, .. } => self.install_uniqueness(d),
                Violation::Suppression {
                    d,
                    d_prime,
                    suppressed,
                } => {
                    let p = self.pairs.index(d, d_prime);
                    self.install_suppression(p, suppressed)
                }
                Violation::Transitivity { a, mid, b } => self.install_transitivity(a, mid, b),
                Violation::SinglePerson { d, d_prime, .. } => {
                    let p = self.pairs.index(d, d_prime);
                    self.install_single_person(p)
                }
                Violation::Linearization {
                    d,
                    d_prime,
                    c,
                    c_prime,
                    ..
                } => {
                    let p = self.pairs.index(d, d_prime);
                    self.instantiate_z(p, c, c_prime)
                }
            };
            if fresh {
                new_rows += 1;
            }
        }
        new_rows
    }

    /// Linearization separation at an integral point: combinations whose
    /// sign-fixed value disagrees with the product `x * x' * y`.
    /// Returns (pair, c, c'), strongest |beta| first, capped.
    fn separate_z_integral(&self, sol: &SolutionTriple) -> Vec<(usize, usize, usize)> {
        let k = self.k;
        let per_pair: Vec<Vec<(usize, usize, usize, f64)>> =
            par::map_range(self.pairs.len(), |p| {
                let (d, d2) = self.pairs.pair(p);
                let joined = sol.y[p];
                let mut found = Vec::new();
                for c in 0..k {
                    for c2 in 0..k {
                        if self.z_vars[self.z_slot(p, c, c2)] != u32::MAX {
                            continue;
                        }
                        let beta = self.inst.beta[p][c * k + c2];
                        let product = joined && sol.x[d][c] && sol.x[d2][c2];
                        if beta < 0.0 {
                            // Sign-fixed at 1; inconsistent unless all on.
                            if !product {
                                found.push((p, c, c2, beta.abs()));
                            }
                        } else if beta > 0.0 && product {
                            // Sign-fixed at 0; the lower bound is violated.
                            found.push((p, c, c2, beta));
                        }
                    }
                }
                found
            });
        let mut all: Vec<(usize, usize, usize, f64)> =
            per_pair.into_iter().flatten().collect();
        all.sort_by(|a, b| {
            b.3.partial_cmp(&a.3)
                .unwrap()
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        all.truncate(self.cfg.cut_batch);
        all.into_iter().map(|(p, c, c2, _)| (p, c, c2)).collect()
    }

    /// Separation at a fractional point (optional strengthening): scans the
    /// structural families plus the linearization of instantiated and
    /// sign-fixed combinations, installing rows violated by more than tol.
    fn separate_fractional(&mut self, xv: &[f64], yv: &[f64]) -> usize {
        let tol = 1e-6;
        let k = self.k;
        let mut installed = 0;

        for d in 0..self.n {
            let sum: f64 = (0..k).map(|c| xv[d * k + c]).sum();
            if sum > 1.0 + tol && self.install_uniqueness(d) {
                installed += 1;
            }
        }
        let pairs = self.pairs;
        for (p, (d, d2)) in pairs.iter().enumerate() {
            let sum_d: f64 = (0..k).map(|c| xv[d * k + c]).sum();
            let sum_d2: f64 = (0..k).map(|c| xv[d2 * k + c]).sum();
            if yv[p] > sum_d + tol && self.install_suppression(p, d) {
                installed += 1;
            }
            if yv[p] > sum_d2 + tol && self.install_suppression(p, d2) {
                installed += 1;
            }
            if self.inst.mode == Mode::SinglePerson
                && sum_d + sum_d2 - yv[p] > 1.0 + tol
                && self.install_single_person(p)
            {
                installed += 1;
            }
        }

        // Triangle scan on fractional y.
        let y = |a: usize, b: usize| yv[self.pairs.index(a, b)];
        let mut triangles = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                for l in j + 1..self.n {
                    let checks = [
                        (i, j, l, y(i, j) + y(j, l) - y(i, l)),
                        (j, i, l, y(i, j) + y(i, l) - y(j, l)),
                        (i, l, j, y(i, l) + y(j, l) - y(i, j)),
                    ];
                    for (a, mid, b, lhs) in checks {
                        if lhs > 1.0 + tol {
                            triangles.push((lhs, a, mid, b));
                        }
                    }
                }
            }
        }
        triangles.sort_by(|p, q| {
            q.0.partial_cmp(&p.0)
                .unwrap()
                .then((p.1, p.2, p.3).cmp(&(q.1, q.2, q.3)))
        });
        for (_, a, mid, b) in triangles.into_iter().take(self.cfg.cut_batch) {
            if self.install_transitivity(a, mid, b) {
                installed += 1;
            }
        }

        // Sign-fixed z against the fractional point: a fixed-at-1 entry is
        // violated when any of its three upper bounds is; fixed-at-0 when
        // the lower bound is.
        let mut marks = Vec::new();
        for (p, (d, d2)) in pairs.iter().enumerate() {
            for c in 0..k {
                for c2 in 0..k {
                    if self.z_vars[self.z_slot(p, c, c2)] != u32::MAX {
                        continue;
                    }
                    let beta = self.inst.beta[p][c * k + c2];
                    if beta < 0.0 {
                        let m = xv[d * k + c].min(xv[d2 * k + c2]).min(yv[p]);
                        if 1.0 - m > tol {
                            marks.push((beta.abs() * (1.0 - m), p, c, c2));
                        }
                    } else if beta > 0.0 {
                        let lower = xv[d * k + c] + xv[d2 * k + c2] + yv[p] - 2.0;
                        if lower > tol {
                            marks.push((beta * lower, p, c, c2));
                        }
                    }
                }
            }
        }
        marks.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)))
        });
        for (_, p, c, c2) in marks.into_iter().take(self.cfg.cut_batch) {
            if self.instantiate_z(p, c, c2) {
                installed += 1;
            }
        }
        installed
    }

    fn point_x(&self) -> Vec<f64> {
        self.x_vars.iter().map(|&v| self.lp.value(v)).collect()
    }

    fn point_y(&self) -> Vec<f64> {
        self.y_vars.iter().map(|&v| self.lp.value(v)).collect()
    }

    fn solution_from_point(&self, xv: &[f64], yv: &[f64]) -> SolutionTriple {
        SolutionTriple {
            x: (0..self.n)
                .map(|d| (0..self.k).map(|c| xv[d * self.k + c] > 0.5).collect())
                .collect(),
            y: yv.iter().map(|&v| v > 0.5).collect(),
            mode: self.inst.mode,
        }
    }

    fn is_integral(xv: &[f64], yv: &[f64]) -> bool {
        xv.iter()
            .chain(yv.iter())
            .all(|&v| (v - v.round()).abs() <= INT_TOL)
    }

    /// Valid lower bound of the active relaxation for the current subtree.
    fn node_bound(&self) -> f64 {
        self.lp.safe_lower_bound() + self.uninstantiated_bonus
    }
}

/// Connected components of the `y = 1` graph restricted to selected
/// detections; unselected detections are ignored.
fn selected_components(sol: &SolutionTriple) -> Vec<Vec<usize>> {
    let n = sol.num_detections();
    let pairs = PairIndexer::new(n);
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, a: usize) -> usize {
        let mut root = a;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = a;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (p, (a, b)) in pairs.iter().enumerate() {
        if sol.y[p] && sol.is_selected(a) && sol.is_selected(b) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for d in 0..n {
        if sol.is_selected(d) {
            let r = find(&mut parent, d);
            groups[r].push(d);
        }
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

/// Rounds a point with integral x and fractional y: edges with y > 0.5
/// among selected detections are closed transitively (single-person mode
/// joins every selected pair).
fn round_by_components(engine: &Engine, xv: &[f64], yv: &[f64]) -> SolutionTriple {
    let mut sol = engine.solution_from_point(xv, yv);
    if engine.inst.mode == Mode::SinglePerson {
        for (p, (a, b)) in engine.pairs.iter().enumerate() {
            sol.y[p] = sol.is_selected(a) && sol.is_selected(b);
        }
        return sol;
    }
    let comps = selected_components(&sol);
    let mut comp_of = vec![usize::MAX; engine.n];
    for (ci, comp) in comps.iter().enumerate() {
        for &d in comp {
            comp_of[d] = ci;
        }
    }
    for (p, (a, b)) in engine.pairs.iter().enumerate() {
        sol.y[p] = comp_of[a] != usize::MAX && comp_of[a] == comp_of[b];
    }
    sol
}

/// Branch-and-cut solve. Returns a feasible solution (all-suppressed in
/// the worst case) together with the certification report.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<(SolutionTriple, SolverReport)> {
    inst.validate()?;
    let start = Instant::now();
    let mut engine = Engine::new(inst, cfg);

    let mut incumbent = SolutionTriple::all_suppressed(engine.n, engine.k, inst.mode);
    let mut upper = 0.0f64;

    let mut nodes: Vec<Node> = vec![Node {
        lower_bound: f64::NEG_INFINITY,
        fixings: Vec::new(),
        basis: None,
    }];
    // Min-heap over (lower bound, node id).
    let mut open = std::collections::BinaryHeap::new();
    open.push(HeapEntry {
        bound: f64::NEG_INFINITY,
        id: 0,
    });

    let mut log: Vec<LogRecord> = Vec::new();
    let mut global_lower = f64::NEG_INFINITY;
    let mut nodes_explored = 0usize;
    let mut active_fixings: Vec<usize> = Vec::new();

    let status = loop {
        let Some(entry) = open.pop() else {
            // Tree exhausted: the incumbent is optimal.
            global_lower = upper;
            break SolveStatus::Optimal;
        };
        let node_id = entry.id;
        let stale_bound = nodes[node_id].lower_bound;
        global_lower = global_lower.max(stale_bound.min(upper));
        if relative_gap(upper, stale_bound) <= cfg.gap_tolerance {
            // The weakest open bound is already within tolerance.
            break if stale_bound >= upper - 1e-12 {
                SolveStatus::Optimal
            } else {
                SolveStatus::GapReached
            };
        }
        if nodes_explored >= cfg.max_nodes || start.elapsed().as_secs_f64() > cfg.max_wall_time {
            break SolveStatus::Limit;
        }
        nodes_explored += 1;

        // Switch the LP to this node: root bounds, then the node's fixings,
        // then its recorded basis.
        for &v in &active_fixings {
            engine.lp.set_bounds(v, 0.0, 1.0);
        }
        active_fixings.clear();
        for &(v, lo, hi) in &nodes[node_id].fixings {
            engine.lp.set_bounds(v, lo, hi);
            active_fixings.push(v);
        }
        if let Some(basis) = nodes[node_id].basis.clone() {
            engine.lp.restore(&basis);
        }

        // Cutting loop at this node.
        let node_outcome = loop {
            if start.elapsed().as_secs_f64() > cfg.max_wall_time {
                break NodeOutcome::Abort;
            }
            if engine.lp.solve()? == LpStatus::Infeasible {
                break NodeOutcome::Fathomed;
            }
            let bound = engine.node_bound();
            nodes[node_id].lower_bound = bound;
            if bound >= upper - IMPROVE_TOL {
                break NodeOutcome::Fathomed;
            }
            let xv = engine.point_x();
            let yv = engine.point_y();
            if Engine::is_integral(&xv, &yv) {
                let sol = engine.solution_from_point(&xv, &yv);
                let structural = constraints::separate_capped(&sol, cfg.cut_batch);
                let z_marks = engine.separate_z_integral(&sol);
                if structural.is_empty() && z_marks.is_empty() {
                    // Feasible integral point: the relaxation optimum of
                    // this subtree. Take it and fathom.
                    let obj = objective::evaluate(inst, &sol)?.total;
                    if obj < upper - IMPROVE_TOL {
                        upper = obj;
                        incumbent = sol;
                    }
                    break NodeOutcome::Fathomed;
                }
                engine.install_violations(&structural);
                for (p, c, c2) in z_marks {
                    engine.instantiate_z(p, c, c2);
                }
                continue;
            }
            if cfg.fractional_separation && engine.separate_fractional(&xv, &yv) > 0 {
                continue;
            }
            // Heuristic incumbent: integral labels with fractional pairing
            // round by component closure, repaired through separation.
            let x_integral = xv.iter().all(|&v| (v - v.round()).abs() <= INT_TOL);
            if x_integral {
                let rounded = round_by_components(&engine, &xv, &yv);
                if constraints::separate(&rounded).is_empty()
                    && engine.separate_z_integral(&rounded).is_empty()
                {
                    let obj = objective::evaluate(inst, &rounded)?.total;
                    if obj < upper - IMPROVE_TOL {
                        upper = obj;
                        incumbent = rounded;
                    }
                }
            }
            break NodeOutcome::Branch(branch_variable(&engine, &xv, &yv));
        };

        match node_outcome {
            NodeOutcome::Abort => break SolveStatus::Limit,
            NodeOutcome::Fathomed => {}
            NodeOutcome::Branch(var) => {
                let bound = nodes[node_id].lower_bound;
                let basis = Rc::new(engine.lp.snapshot());
                let fixings = nodes[node_id].fixings.clone();
                let frac = engine.lp.value(var);
                // The child agreeing with the rounding gets the lower id so
                // equal bounds explore it first.
                let sides: [f64; 2] = if frac >= 0.5 { [1.0, 0.0] } else { [0.0, 1.0] };
                for side in sides {
                    let mut child_fixings = fixings.clone();
                    child_fixings.push((var, side, side));
                    let id = nodes.len();
                    nodes.push(Node {
                        lower_bound: bound,
                        fixings: child_fixings,
                        basis: Some(basis.clone()),
                    });
                    open.push(HeapEntry { bound, id });
                }
            }
        }

        let open_min = open
            .peek()
            .map(|e| nodes[e.id].lower_bound)
            .unwrap_or(upper);
        global_lower = global_lower.max(open_min.min(upper));
        log.push(LogRecord {
            node: node_id,
            lower_bound: global_lower,
            upper_bound: upper,
            gap: relative_gap(upper, global_lower),
            cuts_added: engine.cuts_added,
        });
    };

    if status == SolveStatus::Optimal {
        global_lower = upper;
    }
    let report = SolverReport {
        best_objective: upper,
        lower_bound: global_lower,
        gap: relative_gap(upper, global_lower),
        nodes_explored,
        cuts_added: engine.cuts_added,
        lp_iterations: engine.lp.stats.pivots,
        status,
        wall_time_secs: start.elapsed().as_secs_f64(),
        log,
    };
    Ok((incumbent, report))
}

enum NodeOutcome {
    Fathomed,
    Branch(usize),
    Abort,
}

/// Most fractional x variable first, then most fractional y; ties by
/// lowest index. (A seeded RNG is reserved for any remaining tie, but the
/// index rule is already total.)
fn branch_variable(engine: &Engine, xv: &[f64], yv: &[f64]) -> usize {
    let score = |v: f64| (v - 0.5).abs();
    let mut best: Option<(f64, usize)> = None;
    for (i, &v) in xv.iter().enumerate() {
        if (v - v.round()).abs() > INT_TOL {
            let s = score(v);
            if best.map_or(true, |(bs, _)| s < bs - 1e-12) {
                best = Some((s, engine.x_vars[i]));
            }
        }
    }
    if let Some((_, var)) = best {
        return var;
    }
    let mut best: Option<(f64, usize)> = None;
    for (p, &v) in yv.iter().enumerate() {
        if (v - v.round()).abs() > INT_TOL {
            let s = score(v);
            if best.map_or(true, |(bs, _)| s < bs - 1e-12) {
                best = Some((s, engine.y_vars[p]));
            }
        }
    }
    best.expect("branch called on an integral point").1
}

struct HeapEntry {
    bound: f64,
    id: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for best-first on (bound, id).
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

/// Exact optimum by enumerating every labeling crossed with every
/// partition of the labeled subset (single-person mode enumerates only the
/// one-block partition). Refuses more than
/// [`BRUTE_FORCE_MAX_DETECTIONS`] detections.
pub fn brute_force(inst: &ProblemInstance) -> Result<(SolutionTriple, f64)> {
    inst.validate()?;
    let n = inst.num_detections();
    let k = inst.num_classes();
    if n > BRUTE_FORCE_MAX_DETECTIONS {
        return Err(Error::TooManyDetections {
            n,
            max: BRUTE_FORCE_MAX_DETECTIONS,
        });
    }
    let labelings = (k + 1).pow(n as u32) as usize;
    // (objective, labeling code, partition code) with lexicographic
    // tie-breaking makes the reduction deterministic under any work split.
    let best = par::min_by_range(
        labelings.max(1),
        |code| {
            let mut labels = vec![usize::MAX; n]; // MAX = suppressed
            let mut rest = code;
            for slot in labels.iter_mut() {
                let digit = rest % (k + 1);
                rest /= k + 1;
                *slot = if digit == 0 { usize::MAX } else { digit - 1 };
            }
            let selected: Vec<usize> = (0..n).filter(|&d| labels[d] != usize::MAX).collect();
            let mut alpha_sum = 0.0;
            for &d in &selected {
                alpha_sum += inst.alpha[d][labels[d]];
            }
            let (part, obj) = best_partition(inst, &labels, &selected, alpha_sum);
            (obj, code, part)
        },
        |a, b| a.0 < b.0 || (a.0 == b.0 && (a.1, &a.2) < (b.1, &b.2)),
    )
    .unwrap_or((0.0, 0, vec![]));

    let (obj, code, partition) = best;
    // Rebuild the winning solution.
    let mut labels = vec![usize::MAX; n];
    let mut rest = code;
    for slot in labels.iter_mut() {
        let digit = rest % (k + 1);
        rest /= k + 1;
        *slot = if digit == 0 { usize::MAX } else { digit - 1 };
    }
    let selected: Vec<usize> = (0..n).filter(|&d| labels[d] != usize::MAX).collect();
    let mut sol = SolutionTriple::all_suppressed(n, k, inst.mode);
    for &d in &selected {
        sol.x[d][labels[d]] = true;
    }
    let pairs = inst.pair_indexer();
    for (i, &d) in selected.iter().enumerate() {
        for (j, &d2) in selected.iter().enumerate().skip(i + 1) {
            if partition[i] == partition[j] {
                sol.y[pairs.index(d, d2)] = true;
            }
        }
    }
    debug_assert!((objective::evaluate(inst, &sol)?.total - obj).abs() < 1e-9);
    Ok((sol, obj))
}

/// Best partition of `selected` under fixed labels: enumerates restricted
/// growth strings (or the single block in single-person mode) and returns
/// (block assignment per selected detection, total objective).
fn best_partition(
    inst: &ProblemInstance,
    labels: &[usize],
    selected: &[usize],
    alpha_sum: f64,
) -> (Vec<u8>, f64) {
    let m = selected.len();
    let k = inst.num_classes();
    let pairs = inst.pair_indexer();
    if m == 0 {
        return (Vec::new(), alpha_sum);
    }
    // Pairwise cost between selected detections under their labels.
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let (d, d2) = (selected[i], selected[j]);
            let (lo, hi, cl, ch) = if d < d2 {
                (d, d2, labels[selected[i]], labels[selected[j]])
            } else {
                (d2, d, labels[selected[j]], labels[selected[i]])
            };
            let cost = inst.beta[pairs.index(lo, hi)][cl * k + ch];
            w[i * m + j] = cost;
        }
    }
    let block_cost = |assign: &[u8]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                if assign[i] == assign[j] {
                    s += w[i * m + j];
                }
            }
        }
        s
    };

    if inst.mode == Mode::SinglePerson {
        let assign = vec![0u8; m];
        let obj = alpha_sum + block_cost(&assign);
        return (assign, obj);
    }

    // Restricted growth strings: assign[0] = 0, assign[i] <= max(prefix)+1.
    let mut assign = vec![0u8; m];
    let mut best_assign = assign.clone();
    let mut best_obj = alpha_sum + block_cost(&assign);
    loop {
        // Advance to the next restricted growth string.
        let mut i = m;
        loop {
            if i <= 1 {
                return (best_assign, best_obj);
            }
            i -= 1;
            let prefix_max = assign[..i].iter().copied().max().unwrap();
            if assign[i] <= prefix_max {
                assign[i] += 1;
                for a in assign.iter_mut().skip(i + 1) {
                    *a = 0;
                }
                break;
            }
        }
        let obj = alpha_sum + block_cost(&assign);
        if obj < best_obj {
            best_obj = obj;
            best_assign = assign.clone();
        }
    }
}

/// Turns a feasible solution into per-person poses: connected components
/// of `y` become persons; detections of one class within a person merge to
/// the probability-weighted centroid; classes with no detection are marked
/// occluded. Person confidence is the mean unary probability of the
/// selected detections.
pub fn extract_poses(sol: &SolutionTriple, dets: &DetectionSet) -> Result<PoseResult> {
    if sol.num_detections() != dets.num_detections() {
        return Err(Error::DimensionMismatch {
            context: "solution detections vs detection set",
            expected: dets.num_detections(),
            got: sol.num_detections(),
        });
    }
    if !constraints::is_feasible(sol) {
        return Err(Error::Infeasible(
            "pose extraction requires a feasible solution".into(),
        ));
    }
    let k = dets.num_classes();
    let mut persons = Vec::new();
    for comp in selected_components(sol) {
        let mut conf = 0.0;
        for &d in &comp {
            let c = sol.label_of(d).expect("selected detections are labeled");
            conf += dets.detections[d].unary[c];
        }
        conf /= comp.len() as f64;

        let mut parts = Vec::with_capacity(k);
        for c in 0..k {
            let members: Vec<usize> = comp
                .iter()
                .copied()
                .filter(|&d| sol.label_of(d) == Some(c))
                .collect();
            if members.is_empty() {
                parts.push(PartPrediction::occluded(c));
            } else {
                let mut wx = 0.0;
                let mut wy = 0.0;
                let mut wsum = 0.0;
                for &d in &members {
                    let weight = dets.detections[d].unary[c];
                    wx += weight * dets.detections[d].x;
                    wy += weight * dets.detections[d].y;
                    wsum += weight;
                }
                parts.push(PartPrediction::at(c, wx / wsum, wy / wsum));
            }
        }
        persons.push(PersonPose {
            confidence: conf,
            parts,
        });
    }
    Ok(PoseResult { persons })
}

/// Objective value of a solution against an instance (re-exported next to
/// the solver entry points for convenience).
pub fn objective_of(inst: &ProblemInstance, sol: &SolutionTriple) -> Result<ObjectiveValue> {
    objective::evaluate(inst, sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;
    use crate::model::{Detection, ImageSize, PartClass};
    use crate::objective::instance_from_costs;
    use rand::{Rng, SeedableRng};

    fn instance(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>, mode: Mode) -> ProblemInstance {
        instance_from_costs(alpha, beta, mode)
    }

    #[test]
    fn single_profitable_detection_selected() {
        let inst = instance(vec![vec![-1.0]], vec![], Mode::MultiPerson);
        let (sol, report) = solve(&inst, &SolverConfig::default()).unwrap();
        assert!(sol.x[0][0]);
        assert_eq!(report.best_objective, -1.0);
        assert_eq!(report.status, SolveStatus::Optimal);
    }

    #[test]
    fn single_costly_detection_suppressed() {
        let inst = instance(vec![vec![1.0]], vec![], Mode::MultiPerson);
        let (sol, report) = solve(&inst, &SolverConfig::default()).unwrap();
        assert!(!sol.x[0][0]);
        assert_eq!(report.best_objective, 0.0);
    }

    #[test]
    fn brute_force_empty_instance() {
        let inst = instance(vec![], vec![], Mode::MultiPerson);
        let (_, obj) = brute_force(&inst).unwrap();
        assert_eq!(obj, 0.0);
    }

    /// Two detections, attractive pairwise term: generate jointly.
    #[test]
    fn brute_force_joins_attractive_pair() {
        let inst = instance(
            vec![vec![-1.0], vec![-1.0]],
            vec![vec![-1.0]],
            Mode::MultiPerson,
        );
        let (sol, obj) = brute_force(&inst).unwrap();
        assert_eq!(obj, -3.0);
        assert!(sol.y[0]);
    }

    /// Same selection but a repulsive term: separate persons.
    #[test]
    fn brute_force_separates_repulsive_pair() {
        let inst = instance(
            vec![vec![-1.0], vec![-1.0]],
            vec![vec![5.0]],
            Mode::MultiPerson,
        );
        let (sol, obj) = brute_force(&inst).unwrap();
        assert_eq!(obj, -2.0);
        assert!(!sol.y[0]);
        assert!(sol.x[0][0] && sol.x[1][0]);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let n = 9;
        let pairs = PairIndexer::new(n).len();
        let inst = instance(
            vec![vec![0.0]; n],
            vec![vec![0.0]; pairs],
            Mode::MultiPerson,
        );
        assert!(matches!(
            brute_force(&inst),
            Err(Error::TooManyDetections { .. })
        ));
    }

    fn random_instance(rng: &mut impl Rng, n: usize, k: usize, mode: Mode) -> ProblemInstance {
        let alpha = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let beta = (0..PairIndexer::new(n).len())
            .map(|_| (0..k * k).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        instance(alpha, beta, mode)
    }

    /// The solver must match the exhaustive oracle exactly on small random
    /// instances, and its solutions must pass every checker.
    #[test]
    fn solve_matches_brute_force_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = SolverConfig {
            gap_tolerance: 1e-9,
            ..SolverConfig::default()
        };
        for trial in 0..40 {
            let n = rng.gen_range(2..=5);
            let k = rng.gen_range(1..=3);
            let mode = if trial % 2 == 0 {
                Mode::MultiPerson
            } else {
                Mode::SinglePerson
            };
            let inst = random_instance(&mut rng, n, k, mode);
            let (sol, report) = solve(&inst, &cfg).unwrap();
            let (_, expected) = brute_force(&inst).unwrap();
            assert!(
                (report.best_objective - expected).abs() < 1e-9,
                "trial {trial}: solver {} vs oracle {}",
                report.best_objective,
                expected
            );
            assert!(constraints::is_feasible(&sol));
            assert!(report.lower_bound <= report.best_objective + 1e-9);
            assert!(report.lower_bound <= expected + 1e-9);
            assert!(report.best_objective <= 1e-12, "never worse than all-suppressed");
            let evaluated = objective::evaluate(&inst, &sol).unwrap().total;
            assert!((evaluated - report.best_objective).abs() < 1e-9);
        }
    }

    /// The gap log is monotone: upper bounds never rise, lower bounds and
    /// gaps never move the wrong way.
    #[test]
    fn solve_log_is_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 6, 2, Mode::MultiPerson);
        let (_, report) = solve(&inst, &SolverConfig::default()).unwrap();
        for pair in report.log.windows(2) {
            assert!(pair[1].upper_bound <= pair[0].upper_bound + 1e-12);
            assert!(pair[1].lower_bound >= pair[0].lower_bound - 1e-12);
            assert!(pair[1].gap <= pair[0].gap + 1e-12);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let inst = random_instance(&mut rng, 6, 3, Mode::MultiPerson);
        let cfg = SolverConfig::default();
        let (sol1, rep1) = solve(&inst, &cfg).unwrap();
        let (sol2, rep2) = solve(&inst, &cfg).unwrap();
        assert_eq!(sol1, sol2);
        assert_eq!(rep1.best_objective, rep2.best_objective);
        assert_eq!(rep1.nodes_explored, rep2.nodes_explored);
        assert_eq!(rep1.cuts_added, rep2.cuts_added);
    }

    #[test]
    fn preinstall_matches_lazy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 4, 2, Mode::MultiPerson);
            let lazy = solve(&inst, &SolverConfig::default()).unwrap().1;
            let eager = solve(
                &inst,
                &SolverConfig {
                    preinstall_structural: true,
                    ..SolverConfig::default()
                },
            )
            .unwrap()
            .1;
            assert!((lazy.best_objective - eager.best_objective).abs() < 1e-9);
        }
    }

    #[test]
    fn fractional_separation_matches_default() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 5, 2, Mode::MultiPerson);
            let a = solve(&inst, &SolverConfig::default()).unwrap().1;
            let b = solve(
                &inst,
                &SolverConfig {
                    fractional_separation: true,
                    ..SolverConfig::default()
                },
            )
            .unwrap()
            .1;
            assert!((a.best_objective - b.best_objective).abs() < 1e-9);
        }
    }

    fn toy_detections(n: usize, k: usize) -> DetectionSet {
        DetectionSet {
            classes: (0..k)
                .map(|id| PartClass {
                    id,
                    name: format!("c{id}"),
                })
                .collect(),
            detections: (0..n)
                .map(|id| {
                    Detection::new(
                        id,
                        10.0 * id as f64,
                        0.0,
                        10.0,
                        BoundingBox::centered(10.0 * id as f64, 0.0, 10.0),
                        vec![0.8; k],
                    )
                })
                .collect(),
            image_size: ImageSize {
                width: 100.0,
                height: 100.0,
            },
        }
    }

    #[test]
    fn extract_poses_passthrough_and_occlusion() {
        let dets = toy_detections(2, 2);
        let mut sol = SolutionTriple::all_suppressed(2, 2, Mode::MultiPerson);
        sol.x[0][0] = true;
        sol.x[1][1] = true;
        sol.y[0] = true;
        let poses = extract_poses(&sol, &dets).unwrap();
        assert_eq!(poses.persons.len(), 1);
        let person = &poses.persons[0];
        assert_eq!(person.part(0).unwrap().location(), Some((0.0, 0.0)));
        assert_eq!(person.part(1).unwrap().location(), Some((10.0, 0.0)));
        assert!((person.confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn extract_poses_merges_same_class_by_weight() {
        let dets = toy_detections(2, 1);
        let mut sol = SolutionTriple::all_suppressed(2, 1, Mode::MultiPerson);
        sol.x[0][0] = true;
        sol.x[1][0] = true;
        sol.y[0] = true;
        let poses = extract_poses(&sol, &dets).unwrap();
        assert_eq!(poses.persons.len(), 1);
        // Equal probabilities: midpoint of x = 0 and x = 10.
        assert_eq!(poses.persons[0].part(0).unwrap().location(), Some((5.0, 0.0)));
    }

    #[test]
    fn extract_poses_marks_missing_class_occluded() {
        let dets = toy_detections(1, 2);
        let mut sol = SolutionTriple::all_suppressed(1, 2, Mode::MultiPerson);
        sol.x[0][0] = true;
        let poses = extract_poses(&sol, &dets).unwrap();
        assert!(poses.persons[0].part(1).unwrap().occluded);
    }

    #[test]
    fn extract_poses_rejects_infeasible() {
        let dets = toy_detections(2, 1);
        let mut sol = SolutionTriple::all_suppressed(2, 1, Mode::MultiPerson);
        sol.y[0] = true; // joined but suppressed endpoints
        assert!(extract_poses(&sol, &dets).is_err());
    }
}
