//! Bounded-variable dual simplex over rows of the form `a . v <= b`.
//!
//! The relaxations solved here always start from a point where every
//! structural variable sits at a bound chosen by the sign of its cost and
//! every row slack is basic. That point is dual feasible by construction,
//! and stays dual feasible under the operations branch-and-cut performs
//! (appending cut rows, tightening variable bounds), so a single dual
//! simplex loop covers cold starts, warm starts and re-solves alike.
//! Primal infeasibility (from branching fixings) surfaces as dual
//! unboundedness and is reported as [`LpStatus::Infeasible`].
//!
//! The basis inverse is kept as an explicit dense matrix; at the target
//! scale (a few thousand rows, rows with 2-15 nonzeros) this is simpler
//! and fast enough. Ties in both the leaving and entering choices break by
//! lowest index, which makes every solve deterministic.

use crate::error::{Error, Result};

/// Bound-violation threshold for primal feasibility.
const PRIMAL_TOL: f64 = 1e-7;
/// Reduced costs within this band count as zero.
const DUAL_TOL: f64 = 1e-9;
/// Pivot elements smaller than this are rejected.
const PIVOT_TOL: f64 = 1e-9;
/// Refactorize the basis inverse after this many pivots.
const REFACTOR_EVERY: usize = 200;
/// Switch to lowest-index (Bland) selection after this many consecutive
/// degenerate pivots.
const DEGENERATE_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(u32),
    AtLower,
    AtUpper,
}

/// Compact basis snapshot for warm starts: per variable, where it sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSnapshot {
    /// 0 = at lower, 1 = at upper, 2 = basic.
    states: Vec<u8>,
    num_rows: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LpStats {
    pub pivots: u64,
    pub solves: u64,
}

struct Row {
    cols: Vec<u32>,
    vals: Vec<f64>,
    rhs: f64,
    slack: u32,
}

pub struct Lp {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Column view: for each variable, (row, coefficient) pairs. Slack
    /// columns are implicit.
    cols: Vec<Vec<(u32, f64)>>,
    /// Which variables are row slacks (slack of row i has `slack_row = i`).
    slack_row: Vec<Option<u32>>,
    rows: Vec<Row>,

    state: Vec<VarState>,
    /// Basis variable per row position.
    basis: Vec<u32>,
    /// Dense basis inverse, one Vec per row.
    binv: Vec<Vec<f64>>,
    /// Values of basic variables, aligned with `basis`.
    xb: Vec<f64>,
    /// Reduced costs per variable (zero for basic).
    dj: Vec<f64>,

    dirty: bool,
    pivots_since_refactor: usize,
    pub stats: LpStats,
}

impl Lp {
    pub fn new() -> Self {
        Self {
            cost: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            cols: Vec::new(),
            slack_row: Vec::new(),
            rows: Vec::new(),
            state: Vec::new(),
            basis: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            dj: Vec::new(),
            dirty: true,
            pivots_since_refactor: 0,
            stats: LpStats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds a structural variable at its sign-favorable bound.
    ///
    /// New variables must only be referenced by rows added afterwards;
    /// that keeps their reduced cost equal to their objective cost, which
    /// the initial bound choice makes dual feasible.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        debug_assert!(lower <= upper);
        let id = self.cost.len();
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cols.push(Vec::new());
        self.slack_row.push(None);
        self.state.push(if cost < 0.0 && upper.is_finite() {
            VarState::AtUpper
        } else {
            VarState::AtLower
        });
        self.dj.push(cost);
        id
    }

    /// Adds the row `sum coef * var <= rhs`; its slack enters the basis.
    pub fn add_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row_id = self.rows.len() as u32;
        let slack = self.cost.len();
        self.cost.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        self.cols.push(Vec::new());
        self.slack_row.push(Some(row_id));
        self.dj.push(0.0);
        self.state.push(VarState::Basic(row_id));

        let mut cols = Vec::with_capacity(terms.len());
        let mut vals = Vec::with_capacity(terms.len());
        for &(var, coef) in terms {
            debug_assert!(var < slack, "rows may only reference existing vars");
            if coef != 0.0 {
                cols.push(var as u32);
                vals.push(coef);
                self.cols[var].push((row_id, coef));
            }
        }
        self.rows.push(Row {
            cols,
            vals,
            rhs,
            slack: slack as u32,
        });
        self.basis.push(slack as u32);

        // Extend the inverse: with the new slack basic, the new basis is
        // [[B, 0], [a_B, 1]] and its inverse [[B^-1, 0], [-a_B B^-1, 1]].
        let m = self.binv.len();
        let row = &self.rows[row_id as usize];
        let mut ext = vec![0.0; m + 1];
        if m > 0 {
            // a_B: the new row's coefficients on currently basic variables.
            let mut a_b = vec![0.0; m];
            let mut any = false;
            for (&c, &v) in row.cols.iter().zip(&row.vals) {
                if let VarState::Basic(pos) = self.state[c as usize] {
                    a_b[pos as usize] = v;
                    any = true;
                }
            }
            if any {
                for (q, &coef) in a_b.iter().enumerate() {
                    if coef != 0.0 {
                        let br = &self.binv[q];
                        for (e, &b) in ext[..m].iter_mut().zip(br) {
                            *e -= coef * b;
                        }
                    }
                }
            }
        }
        ext[m] = 1.0;
        for r in &mut self.binv {
            r.push(0.0);
        }
        self.binv.push(ext);
        self.xb.push(0.0);
        self.dirty = true;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        debug_assert!(lower <= upper);
        self.lower[var] = lower;
        self.upper[var] = upper;
        // A nonbasic variable parked at a bound that is no longer the
        // favorable one keeps dual feasibility only if we re-park it when
        // its reduced cost allows; with fixed bounds (branching) any side
        // is fine. Re-park at the nearer finite bound when the current one
        // became infinite.
        if let VarState::AtUpper = self.state[var] {
            if !upper.is_finite() {
                self.state[var] = VarState::AtLower;
            }
        }
        self.dirty = true;
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn cost_of(&self, var: usize) -> f64 {
        self.cost[var]
    }

    fn is_fixed(&self, var: usize) -> bool {
        self.upper[var] - self.lower[var] <= 0.0
    }

    fn nonbasic_value(&self, var: usize) -> f64 {
        match self.state[var] {
            VarState::AtLower => self.lower[var],
            VarState::AtUpper => self.upper[var],
            VarState::Basic(_) => unreachable!("basic variable has no bound value"),
        }
    }

    /// Current value of a variable.
    pub fn value(&self, var: usize) -> f64 {
        match self.state[var] {
            VarState::Basic(pos) => self.xb[pos as usize],
            _ => self.nonbasic_value(var),
        }
    }

    pub fn objective(&self) -> f64 {
        (0..self.num_vars())
            .filter(|&j| self.slack_row[j].is_none())
            .map(|j| self.cost[j] * self.value(j))
            .sum()
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            states: self
                .state
                .iter()
                .map(|s| match s {
                    VarState::AtLower => 0,
                    VarState::AtUpper => 1,
                    VarState::Basic(_) => 2,
                })
                .collect(),
            num_rows: self.rows.len(),
        }
    }

    /// Restores a basis taken earlier on this LP. Rows added after the
    /// snapshot keep their slacks basic; everything else follows the
    /// snapshot. Falls back to the all-slack basis if the recorded basis
    /// is numerically singular.
    pub fn restore(&mut self, snap: &BasisSnapshot) {
        debug_assert!(snap.states.len() <= self.num_vars());
        debug_assert!(snap.num_rows <= self.rows.len());
        let mut basic_vars: Vec<u32> = Vec::with_capacity(self.rows.len());
        for (j, &s) in snap.states.iter().enumerate() {
            self.state[j] = match s {
                0 => VarState::AtLower,
                1 => {
                    if self.upper[j].is_finite() {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    }
                }
                _ => {
                    basic_vars.push(j as u32);
                    VarState::Basic(u32::MAX) // position assigned below
                }
            };
        }
        for j in snap.states.len()..self.num_vars() {
            // Variables created after the snapshot: slacks of new rows go
            // basic, new structurals to their favorable bound.
            self.state[j] = match self.slack_row[j] {
                Some(_) => {
                    basic_vars.push(j as u32);
                    VarState::Basic(u32::MAX)
                }
                None => {
                    if self.cost[j] < 0.0 && self.upper[j].is_finite() {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    }
                }
            };
        }
        if basic_vars.len() != self.rows.len() || !self.factorize(&basic_vars) {
            self.reset_to_slack_basis();
        }
        self.dirty = true;
    }

    /// All slacks basic, structurals at their sign-favorable bounds.
    /// Always dual feasible.
    pub fn reset_to_slack_basis(&mut self) {
        let m = self.rows.len();
        self.basis = (0..m).map(|i| self.rows[i].slack).collect();
        for j in 0..self.num_vars() {
            self.state[j] = match self.slack_row[j] {
                Some(i) => VarState::Basic(i),
                None => {
                    if self.cost[j] < 0.0 && self.upper[j].is_finite() {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    }
                }
            };
        }
        self.binv = (0..m)
            .map(|i| {
                let mut r = vec![0.0; m];
                r[i] = 1.0;
                r
            })
            .collect();
        self.xb = vec![0.0; m];
        self.pivots_since_refactor = 0;
        self.dirty = true;
    }

    /// Builds the basis inverse for the given basic set. Slacks claim their
    /// natural row positions; each structural column is pivoted in at the
    /// still-free position where it has the largest magnitude. Returns
    /// false when the set is singular.
    fn factorize(&mut self, basic_vars: &[u32]) -> bool {
        let m = self.rows.len();
        debug_assert_eq!(basic_vars.len(), m);
        let mut basis = vec![u32::MAX; m];
        let mut free = vec![true; m];
        let mut structurals = Vec::new();
        for &v in basic_vars {
            match self.slack_row[v as usize] {
                Some(r) => {
                    let r = r as usize;
                    if !free[r] {
                        return false;
                    }
                    basis[r] = v;
                    free[r] = false;
                }
                None => structurals.push(v),
            }
        }
        if structurals.len() != free.iter().filter(|&&f| f).count() {
            return false;
        }

        self.binv = (0..m)
            .map(|i| {
                let mut r = vec![0.0; m];
                r[i] = 1.0;
                r
            })
            .collect();
        for var in structurals {
            let w = self.ftran(var as usize);
            let mut best: Option<(usize, f64)> = None;
            for (pos, &wv) in w.iter().enumerate() {
                if free[pos] && wv.abs() > PIVOT_TOL {
                    if best.map_or(true, |(_, b)| wv.abs() > b) {
                        best = Some((pos, wv.abs()));
                    }
                }
            }
            let Some((pos, _)) = best else {
                return false;
            };
            self.apply_pivot_update(pos, &w);
            basis[pos] = var;
            free[pos] = false;
        }

        for (i, &v) in basis.iter().enumerate() {
            self.state[v as usize] = VarState::Basic(i as u32);
        }
        self.basis = basis;
        self.xb = vec![0.0; m];
        self.pivots_since_refactor = 0;
        self.dirty = true;
        true
    }

    /// `B^-1 * A_var` for a structural or slack column.
    fn ftran(&self, var: usize) -> Vec<f64> {
        let m = self.rows.len();
        let mut w = vec![0.0; m];
        match self.slack_row[var] {
            Some(r) => {
                for (q, row) in self.binv.iter().enumerate() {
                    w[q] = row[r as usize];
                }
            }
            None => {
                for &(r, coef) in &self.cols[var] {
                    let r = r as usize;
                    for (q, row) in self.binv.iter().enumerate() {
                        let b = row[r];
                        if b != 0.0 {
                            w[q] += coef * b;
                        }
                    }
                }
            }
        }
        w
    }

    /// Rank-one update of the inverse for a pivot at `pos` with incoming
    /// column `w = B^-1 A_enter`.
    fn apply_pivot_update(&mut self, pos: usize, w: &[f64]) {
        let m = self.binv.len();
        let piv = w[pos];
        let inv = 1.0 / piv;
        {
            let row = &mut self.binv[pos];
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        let pivot_row = std::mem::take(&mut self.binv[pos]);
        for q in 0..m {
            if q == pos {
                continue;
            }
            let f = w[q];
            if f != 0.0 {
                let row = &mut self.binv[q];
                for (rv, &pv) in row.iter_mut().zip(&pivot_row) {
                    *rv -= f * pv;
                }
            }
        }
        self.binv[pos] = pivot_row;
    }

    /// `beta = B^-1 (b - N x_N)` with nonbasic variables at their bounds.
    fn recompute_xb(&mut self) {
        let m = self.rows.len();
        let mut adj = vec![0.0; m];
        for (i, row) in self.rows.iter().enumerate() {
            let mut v = row.rhs;
            for (&c, &coef) in row.cols.iter().zip(&row.vals) {
                let c = c as usize;
                if !matches!(self.state[c], VarState::Basic(_)) {
                    v -= coef * self.nonbasic_value(c);
                }
            }
            // Slack columns are identity; a nonbasic slack sits at 0 and
            // contributes nothing.
            adj[i] = v;
        }
        for q in 0..m {
            let row = &self.binv[q];
            let mut acc = 0.0;
            for (b, &a) in row.iter().zip(&adj) {
                acc += b * a;
            }
            self.xb[q] = acc;
        }
    }

    /// Recomputes basic values and reduced costs from the current basis.
    fn refresh(&mut self) {
        let m = self.rows.len();
        self.recompute_xb();

        // y = c_B B^-1, then d_j = c_j - y . A_j.
        let mut y = vec![0.0; m];
        for (q, &bv) in self.basis.iter().enumerate() {
            let cb = self.cost[bv as usize];
            if cb != 0.0 {
                let row = &self.binv[q];
                for (yi, &b) in y.iter_mut().zip(row) {
                    *yi += cb * b;
                }
            }
        }
        for j in 0..self.num_vars() {
            self.dj[j] = match self.state[j] {
                VarState::Basic(_) => 0.0,
                _ => {
                    let mut d = self.cost[j];
                    match self.slack_row[j] {
                        Some(r) => d -= y[r as usize],
                        None => {
                            for &(r, coef) in &self.cols[j] {
                                d -= y[r as usize] * coef;
                            }
                        }
                    }
                    d
                }
            };
        }

        // Dual feasibility repair for structurals whose favorable bound
        // moved (branching can do this): park them on the consistent side.
        let mut flipped = false;
        for j in 0..self.num_vars() {
            if self.is_fixed(j) || matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            match self.state[j] {
                VarState::AtLower if self.dj[j] < -DUAL_TOL => {
                    if self.upper[j].is_finite() {
                        self.state[j] = VarState::AtUpper;
                        flipped = true;
                    }
                }
                VarState::AtUpper if self.dj[j] > DUAL_TOL => {
                    self.state[j] = VarState::AtLower;
                    flipped = true;
                }
                _ => {}
            }
        }
        if flipped {
            // Bound flips move the nonbasic point; recompute basic values.
            self.recompute_xb();
        }
        self.dirty = false;
    }

    /// Runs dual simplex to primal feasibility.
    pub fn solve(&mut self) -> Result<LpStatus> {
        self.stats.solves += 1;
        if self.basis.len() != self.rows.len() {
            self.reset_to_slack_basis();
        }
        self.refresh();
        let mut degenerate_streak = 0usize;
        let iteration_cap = 20_000 + 60 * self.rows.len().max(self.num_vars());
        for _ in 0..iteration_cap {
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                let basics = self.basis.clone();
                if !self.factorize(&basics) {
                    self.reset_to_slack_basis();
                }
                self.refresh();
            }

            // Leaving choice: most violated basic bound; ties by variable id.
            let bland = degenerate_streak >= DEGENERATE_LIMIT;
            let mut leave: Option<(usize, f64, bool)> = None; // (row pos, violation, too_high)
            for (pos, &bv) in self.basis.iter().enumerate() {
                let v = self.xb[pos];
                let (l, u) = (self.lower[bv as usize], self.upper[bv as usize]);
                let (viol, too_high) = if v > u + PRIMAL_TOL {
                    (v - u, true)
                } else if v < l - PRIMAL_TOL {
                    (l - v, false)
                } else {
                    continue;
                };
                let better = match &leave {
                    None => true,
                    Some((best_pos, best_viol, _)) => {
                        if bland {
                            self.basis[pos] < self.basis[*best_pos]
                        } else {
                            viol > *best_viol + 1e-12
                                || (viol > *best_viol - 1e-12
                                    && self.basis[pos] < self.basis[*best_pos])
                        }
                    }
                };
                if better {
                    leave = Some((pos, viol, too_high));
                }
            }
            let Some((r, _, too_high)) = leave else {
                return Ok(LpStatus::Optimal);
            };

            // Row r of B^-1, then alpha_j = rho . A_j over nonbasic vars.
            let rho = self.binv[r].clone();
            let leaving = self.basis[r] as usize;

            // Entering choice: minimal |d_j| / |alpha_j| among sign-valid
            // candidates; Bland mode takes the lowest-index candidate.
            let mut enter: Option<(usize, f64, f64)> = None; // (var, alpha, ratio)
            for j in 0..self.num_vars() {
                if matches!(self.state[j], VarState::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let alpha = match self.slack_row[j] {
                    Some(rr) => rho[rr as usize],
                    None => {
                        let mut a = 0.0;
                        for &(rr, coef) in &self.cols[j] {
                            a += rho[rr as usize] * coef;
                        }
                        a
                    }
                };
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let valid = match (self.state[j], too_high) {
                    (VarState::AtLower, true) => alpha > 0.0,
                    (VarState::AtLower, false) => alpha < 0.0,
                    (VarState::AtUpper, true) => alpha < 0.0,
                    (VarState::AtUpper, false) => alpha > 0.0,
                    (VarState::Basic(_), _) => unreachable!(),
                };
                if !valid {
                    continue;
                }
                let ratio = self.dj[j].abs() / alpha.abs();
                let better = match &enter {
                    None => true,
                    Some((best_j, _, best_ratio)) => {
                        if bland {
                            j < *best_j
                        } else {
                            ratio < *best_ratio - 1e-12
                                || (ratio < *best_ratio + 1e-12 && j < *best_j)
                        }
                    }
                };
                if better {
                    enter = Some((j, alpha, ratio));
                }
            }
            let Some((j, _alpha, _)) = enter else {
                // The violated row cannot be repaired: primal infeasible.
                return Ok(LpStatus::Infeasible);
            };

            let w = self.ftran(j);
            let alpha = w[r];
            if alpha.abs() <= PIVOT_TOL {
                // Numerical disagreement between rho and the fresh column;
                // refactorize and retry.
                let basics = self.basis.clone();
                if !self.factorize(&basics) {
                    self.reset_to_slack_basis();
                }
                self.refresh();
                continue;
            }

            let target = if too_high {
                self.upper[leaving]
            } else {
                self.lower[leaving]
            };
            let t = (self.xb[r] - target) / alpha;
            if t.abs() <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }

            // Update basic values, reduced costs, basis and inverse.
            let entering_old = self.nonbasic_value(j);
            for (q, xv) in self.xb.iter_mut().enumerate() {
                if q != r {
                    *xv -= t * w[q];
                }
            }
            self.xb[r] = entering_old + t;

            let gamma = self.dj[j] / alpha;
            if gamma != 0.0 {
                for k in 0..self.num_vars() {
                    if matches!(self.state[k], VarState::Basic(_)) || k == j {
                        continue;
                    }
                    let alpha_k = match self.slack_row[k] {
                        Some(rr) => rho[rr as usize],
                        None => {
                            let mut a = 0.0;
                            for &(rr, coef) in &self.cols[k] {
                                a += rho[rr as usize] * coef;
                            }
                            a
                        }
                    };
                    if alpha_k != 0.0 {
                        self.dj[k] -= gamma * alpha_k;
                    }
                }
            }
            self.dj[leaving] = -gamma;
            self.dj[j] = 0.0;

            self.state[j] = VarState::Basic(r as u32);
            self.state[leaving] = if too_high {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            self.basis[r] = j as u32;
            self.apply_pivot_update(r, &w);

            self.pivots_since_refactor += 1;
            self.stats.pivots += 1;
        }
        Err(Error::Lp("dual simplex iteration cap exceeded".into()))
    }

    /// Unconditionally valid lower bound on the LP optimum via weak
    /// duality: with multipliers `lambda_i = max(0, -y_i) >= 0` from the
    /// current basis, minimize the Lagrangian over the variable box.
    /// Structural bounds here are finite, so the bound is finite; it equals
    /// the LP objective at an exactly-optimal basis and degrades gracefully
    /// with primal tolerance.
    pub fn safe_lower_bound(&self) -> f64 {
        let m = self.rows.len();
        let mut y = vec![0.0; m];
        for (q, &bv) in self.basis.iter().enumerate() {
            let cb = self.cost[bv as usize];
            if cb != 0.0 {
                for (yi, &b) in y.iter_mut().zip(&self.binv[q]) {
                    *yi += cb * b;
                }
            }
        }
        let lambda: Vec<f64> = y.iter().map(|&yi| (-yi).max(0.0)).collect();
        let mut bound = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            bound -= lambda[i] * row.rhs;
        }
        for j in 0..self.num_vars() {
            if self.slack_row[j].is_some() {
                continue;
            }
            let mut r = self.cost[j];
            for &(row, coef) in &self.cols[j] {
                r += lambda[row as usize] * coef;
            }
            bound += if r > 0.0 {
                r * self.lower[j]
            } else {
                r * self.upper[j]
            };
        }
        bound
    }

    /// Largest bound violation over basic variables (0 when feasible).
    pub fn primal_infeasibility(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (pos, &bv) in self.basis.iter().enumerate() {
            let v = self.xb[pos];
            let (l, u) = (self.lower[bv as usize], self.upper[bv as usize]);
            worst = worst.max(v - u).max(l - v);
        }
        worst
    }

    /// Row activity `a . v` of row `i` at the current point.
    pub fn row_activity(&self, i: usize) -> f64 {
        let row = &self.rows[i];
        row.cols
            .iter()
            .zip(&row.vals)
            .map(|(&c, &coef)| coef * self.value(c as usize))
            .sum()
    }

    pub fn row_rhs(&self, i: usize) -> f64 {
        self.rows[i].rhs
    }

    /// Reduced cost of a variable (for optimality checks in tests).
    pub fn reduced_cost(&self, var: usize) -> f64 {
        self.dj[var]
    }

    pub fn is_basic(&self, var: usize) -> bool {
        matches!(self.state[var], VarState::Basic(_))
    }

    pub fn is_slack(&self, var: usize) -> bool {
        self.slack_row[var].is_some()
    }
}

impl Default for Lp {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn kkt_holds(lp: &Lp) -> bool {
        // Primal: rows and bounds.
        for i in 0..lp.num_rows() {
            if lp.row_activity(i) > lp.row_rhs(i) + 1e-6 {
                return false;
            }
        }
        for j in 0..lp.num_vars() {
            let v = lp.value(j);
            let (l, u) = lp.bounds(j);
            if v < l - 1e-6 || v > u + 1e-6 {
                return false;
            }
        }
        // Dual: reduced cost signs at the bounds.
        for j in 0..lp.num_vars() {
            if lp.is_basic(j) {
                continue;
            }
            let (l, u) = lp.bounds(j);
            if u - l <= 0.0 {
                continue; // fixed vars carry no sign requirement
            }
            let d = lp.reduced_cost(j);
            let v = lp.value(j);
            if (v - l).abs() < 1e-9 && d < -1e-6 {
                return false;
            }
            if u.is_finite() && (v - u).abs() < 1e-9 && d > 1e-6 {
                return false;
            }
        }
        true
    }

    #[test]
    fn unconstrained_negative_costs_go_to_upper() {
        let mut lp = Lp::new();
        let a = lp.add_var(-1.0, 0.0, 1.0);
        let b = lp.add_var(-2.5, 0.0, 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert_eq!(lp.value(a), 1.0);
        assert_eq!(lp.value(b), 1.0);
        assert_eq!(lp.objective(), -3.5);
    }

    #[test]
    fn unconstrained_positive_costs_stay_at_zero() {
        let mut lp = Lp::new();
        lp.add_var(1.0, 0.0, 1.0);
        lp.add_var(0.5, 0.0, 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert_eq!(lp.objective(), 0.0);
    }

    /// Two profitable variables under a packing row: value -1, with the
    /// lowest-index tie-break determining which variable moves off its bound.
    #[test]
    fn packing_tie_resolved_by_lowest_index() {
        let mut lp = Lp::new();
        let a = lp.add_var(-1.0, 0.0, 1.0);
        let b = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_row(&[(a, 1.0), (b, 1.0)], 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 1.0).abs() < 1e-9);
        assert_eq!(lp.value(a), 0.0);
        assert_eq!(lp.value(b), 1.0);
        assert!(kkt_holds(&lp));
    }

    #[test]
    fn infeasible_row_detected() {
        let mut lp = Lp::new();
        let a = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(&[(a, 1.0)], -0.5);
        assert_eq!(lp.solve().unwrap(), LpStatus::Infeasible);
    }

    #[test]
    fn bound_fixing_resolves_like_branching() {
        let mut lp = Lp::new();
        let a = lp.add_var(-1.0, 0.0, 1.0);
        let b = lp.add_var(-1.0, 0.0, 1.0);
        lp.add_row(&[(a, 1.0), (b, 1.0)], 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        let snap = lp.snapshot();

        lp.set_bounds(a, 1.0, 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert_eq!(lp.value(a), 1.0);
        assert!((lp.value(b)).abs() < 1e-9);
        assert!((lp.objective() + 1.0).abs() < 1e-9);

        // Restore the earlier basis and bounds: same optimum as before.
        lp.set_bounds(a, 0.0, 1.0);
        lp.restore(&snap);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn added_rows_cut_off_current_point() {
        let mut lp = Lp::new();
        let vars: Vec<usize> = (0..4).map(|_| lp.add_var(-1.0, 0.0, 1.0)).collect();
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert_eq!(lp.objective(), -4.0);

        lp.add_row(&[(vars[0], 1.0), (vars[1], 1.0)], 1.0);
        lp.add_row(&[(vars[2], 1.0), (vars[3], 1.0)], 1.0);
        assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
        assert!((lp.objective() + 2.0).abs() < 1e-9);
        assert!(kkt_holds(&lp));
    }

    /// Random feasible-by-construction LPs must terminate with a point
    /// satisfying the KKT conditions.
    #[test]
    fn random_lps_satisfy_kkt() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..400 {
            let nv = rng.gen_range(1..9);
            let nr = rng.gen_range(0..7);
            let mut lp = Lp::new();
            let vars: Vec<usize> = (0..nv)
                .map(|_| lp.add_var(rng.gen_range(-2.0..2.0), 0.0, 1.0))
                .collect();
            // Interior point that every generated row keeps feasible.
            let point: Vec<f64> = (0..nv).map(|_| rng.gen_range(0.0..1.0)).collect();
            for _ in 0..nr {
                let nnz = rng.gen_range(1..=nv.min(4));
                let mut terms = Vec::new();
                let mut act = 0.0;
                for _ in 0..nnz {
                    let v = vars[rng.gen_range(0..nv)];
                    let coef = rng.gen_range(-2.0..2.0f64);
                    act += coef * point[v];
                    terms.push((v, coef));
                }
                lp.add_row(&terms, act + rng.gen_range(0.0..1.0));
            }
            assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
            assert!(kkt_holds(&lp), "kkt failed");
            assert!(lp.primal_infeasibility() <= 1e-6);
        }
    }

    /// Interleaves row additions, bound changes and re-solves, checking
    /// KKT at every stage (mirrors the branch-and-cut access pattern).
    #[test]
    fn incremental_resolves_stay_consistent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let nv = rng.gen_range(2..7);
            let mut lp = Lp::new();
            let vars: Vec<usize> = (0..nv)
                .map(|_| lp.add_var(rng.gen_range(-2.0..2.0), 0.0, 1.0))
                .collect();
            assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
            let mut prev_obj = lp.objective();
            for _ in 0..6 {
                // Packing rows keep the all-zero point feasible.
                let a = vars[rng.gen_range(0..nv)];
                let b = vars[rng.gen_range(0..nv)];
                if a == b {
                    continue;
                }
                lp.add_row(&[(a, 1.0), (b, 1.0)], 1.0);
                assert_eq!(lp.solve().unwrap(), LpStatus::Optimal);
                let obj = lp.objective();
                // Adding constraints can only worsen a minimum.
                assert!(obj >= prev_obj - 1e-9);
                prev_obj = obj;
                assert!(kkt_holds(&lp));
            }
        }
    }
}
