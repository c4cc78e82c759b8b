//! Feasibility checking and violated-inequality separation.
//!
//! Five inequality families define the feasible set:
//! uniqueness (a detection carries at most one label), suppression (joined
//! detections must both be labeled), transitivity (the same-person relation
//! is an equivalence over selected detections), linearization (`z` equals
//! the product `x * x' * y`) and, in single-person mode, the requirement
//! that any two labeled detections are clustered together.
//!
//! Checkers enumerate exhaustively. [`separate`] finds violations of the
//! first three families (plus single-person) by breadth-first search over
//! the `y`-graph instead of scanning all triples.

use crate::model::{Mode, PairIndexer, SolutionTriple};
use crate::par;

/// Which side of the four-inequality linearization block is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinDirection {
    /// `x + x' + y - 2 <= z`
    Lower,
    /// `z <= x`
    UpperX,
    /// `z <= x'`
    UpperXPrime,
    /// `z <= y`
    UpperY,
}

/// One violated inequality, with the index tuple that identifies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    /// `x[d][c] + x[d][c_prime] <= 1` violated (`c < c_prime`).
    Uniqueness { d: usize, c: usize, c_prime: usize },
    /// `y[dd'] <= sum_c x[suppressed][c]` violated; `suppressed` is `d` or
    /// `d_prime` (`d < d_prime`).
    Suppression {
        d: usize,
        d_prime: usize,
        suppressed: usize,
    },
    /// `y[a,mid] + y[mid,b] - 1 <= y[a,b]` violated (`a < b`).
    Transitivity { a: usize, mid: usize, b: usize },
    /// One direction of the `z = x * x' * y` linearization violated
    /// (`d < d_prime`; `c` labels `d`, `c_prime` labels `d_prime`).
    Linearization {
        d: usize,
        d_prime: usize,
        c: usize,
        c_prime: usize,
        direction: LinDirection,
    },
    /// Single-person mode: `x[d][c] + x[d'][c'] - 1 <= y[dd']` violated.
    SinglePerson {
        d: usize,
        d_prime: usize,
        c: usize,
        c_prime: usize,
    },
}

/// Default cap on the number of violations returned per separation round.
pub const MAX_VIOLATIONS_PER_ROUND: usize = 10_000;

/// Every detection carries at most one label.
pub fn check_uniqueness(sol: &SolutionTriple) -> Vec<Violation> {
    let mut out = Vec::new();
    for (d, row) in sol.x.iter().enumerate() {
        let labels: Vec<usize> = (0..row.len()).filter(|&c| row[c]).collect();
        for i in 0..labels.len() {
            for j in i + 1..labels.len() {
                out.push(Violation::Uniqueness {
                    d,
                    c: labels[i],
                    c_prime: labels[j],
                });
            }
        }
    }
    out
}

/// No joined pair has a suppressed endpoint.
pub fn check_suppression(sol: &SolutionTriple) -> Vec<Violation> {
    let pairs = PairIndexer::new(sol.num_detections());
    let mut out = Vec::new();
    for (p, (d, d_prime)) in pairs.iter().enumerate() {
        if !sol.y[p] {
            continue;
        }
        if !sol.is_selected(d) {
            out.push(Violation::Suppression {
                d,
                d_prime,
                suppressed: d,
            });
        }
        if !sol.is_selected(d_prime) {
            out.push(Violation::Suppression {
                d,
                d_prime,
                suppressed: d_prime,
            });
        }
    }
    out
}

/// Exhaustive triangle scan of the transitivity inequalities.
pub fn check_transitivity(sol: &SolutionTriple) -> Vec<Violation> {
    let n = sol.num_detections();
    let pairs = PairIndexer::new(n);
    let y = |a: usize, b: usize| sol.y[pairs.index(a, b)];
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                // Three orientations per vertex triple; (a, b) is the pair
                // that must be joined, mid the shared endpoint.
                if y(i, j) && y(j, k) && !y(i, k) {
                    out.push(Violation::Transitivity { a: i, mid: j, b: k });
                }
                if y(i, j) && y(i, k) && !y(j, k) {
                    out.push(Violation::Transitivity { a: j, mid: i, b: k });
                }
                if y(i, k) && y(j, k) && !y(i, j) {
                    out.push(Violation::Transitivity { a: i, mid: k, b: j });
                }
            }
        }
    }
    out
}

/// Single-person mode: every pair of labeled detections must be joined.
pub fn check_single_person(sol: &SolutionTriple) -> Vec<Violation> {
    let pairs = PairIndexer::new(sol.num_detections());
    let mut out = Vec::new();
    for (p, (d, d_prime)) in pairs.iter().enumerate() {
        if sol.y[p] {
            continue;
        }
        for (c, &set) in sol.x[d].iter().enumerate() {
            if !set {
                continue;
            }
            for (c_prime, &set2) in sol.x[d_prime].iter().enumerate() {
                if set2 {
                    out.push(Violation::SinglePerson {
                        d,
                        d_prime,
                        c,
                        c_prime,
                    });
                }
            }
        }
    }
    out
}

/// A fractional point of the relaxation: `x`, `y` in `[0,1]` plus the
/// materialized `z` entries, keyed by `(d, d_prime, c, c_prime)`, `d < d_prime`.
#[derive(Debug, Clone, Default)]
pub struct FractionalPoint {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<((usize, usize, usize, usize), f64)>,
}

/// Checks all four directions of the linearization block on a (possibly
/// fractional) point, reporting entries violated by more than `tol`.
pub fn check_linearization(point: &FractionalPoint, tol: f64) -> Vec<Violation> {
    let n = point.x.len();
    let pairs = PairIndexer::new(n);
    let mut out = Vec::new();
    for &((d, d_prime, c, c_prime), z) in &point.z {
        let x = point.x[d][c];
        let x2 = point.x[d_prime][c_prime];
        let y = point.y[pairs.index(d, d_prime)];
        let mut push = |direction| {
            out.push(Violation::Linearization {
                d,
                d_prime,
                c,
                c_prime,
                direction,
            })
        };
        if x + x2 + y - 2.0 > z + tol {
            push(LinDirection::Lower);
        }
        if z > x + tol {
            push(LinDirection::UpperX);
        }
        if z > x2 + tol {
            push(LinDirection::UpperXPrime);
        }
        if z > y + tol {
            push(LinDirection::UpperY);
        }
    }
    out.sort_unstable();
    out
}

/// Separation at an integral point: violated uniqueness, suppression and
/// single-person inequalities by direct scan, violated transitivity
/// triangles by breadth-first search over the components of the `y = 1`
/// graph. Output is deduplicated, sorted by index tuple and capped at
/// [`MAX_VIOLATIONS_PER_ROUND`] entries.
pub fn separate(sol: &SolutionTriple) -> Vec<Violation> {
    separate_capped(sol, MAX_VIOLATIONS_PER_ROUND)
}

pub fn separate_capped(sol: &SolutionTriple, cap: usize) -> Vec<Violation> {
    let mut out = check_uniqueness(sol);
    out.extend(check_suppression(sol));
    out.extend(separate_transitivity_bfs(sol));
    if sol.mode == Mode::SinglePerson {
        out.extend(check_single_person(sol));
    }
    out.sort_unstable();
    out.dedup();
    out.truncate(cap);
    out
}

/// Transitivity separation by BFS.
///
/// For every pair `(u, v)` in one component of the `y`-graph with
/// `y[uv] = 0`, walk the BFS-tree path `u = v0, v1, ..., vk = v` and take
/// the largest `j` with `y[u][vj] = 1`; then `(u, vj, v_{j+1})` is a
/// triangle violated by exactly one, because `y[u][vj] = 1`,
/// `y[vj][v_{j+1}] = 1` (a tree edge) and `y[u][v_{j+1}] = 0` by
/// maximality of `j`. Emitted triangles are deduplicated.
fn separate_transitivity_bfs(sol: &SolutionTriple) -> Vec<Violation> {
    let n = sol.num_detections();
    if n < 3 {
        return Vec::new();
    }
    let pairs = PairIndexer::new(n);
    let adj: Vec<Vec<usize>> = {
        let mut adj = vec![Vec::new(); n];
        for (p, (a, b)) in pairs.iter().enumerate() {
            if sol.y[p] {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj
    };

    // One BFS per source; sources scan independently, results merged in
    // index order.
    let per_source: Vec<Vec<Violation>> = par::map_range(n, |u| {
        let mut parent = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[u] = true;
        queue.push_back(u);
        while let Some(w) = queue.pop_front() {
            for &t in &adj[w] {
                if !seen[t] {
                    seen[t] = true;
                    parent[t] = w;
                    queue.push_back(t);
                }
            }
        }
        let mut found = Vec::new();
        for v in u + 1..n {
            if !seen[v] || sol.y[pairs.index(u, v)] {
                continue;
            }
            // Reconstruct the tree path u -> v, then find the break point.
            let mut path = vec![v];
            let mut w = v;
            while w != u {
                w = parent[w];
                path.push(w);
            }
            path.reverse();
            let mut j = 1;
            for (pos, &node) in path.iter().enumerate().skip(1) {
                if sol.y[pairs.index(u, node)] {
                    j = pos;
                }
            }
            debug_assert!(j + 1 < path.len());
            let mid = path[j];
            let far = path[j + 1];
            let (a, b) = if u < far { (u, far) } else { (far, u) };
            found.push(Violation::Transitivity { a, mid, b });
        }
        found
    });

    let mut out: Vec<Violation> = per_source.into_iter().flatten().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// True iff the solution satisfies every family (including single-person
/// when the mode asks for it).
pub fn is_feasible(sol: &SolutionTriple) -> bool {
    check_uniqueness(sol).is_empty()
        && check_suppression(sol).is_empty()
        && check_transitivity(sol).is_empty()
        && (sol.mode != Mode::SinglePerson || check_single_person(sol).is_empty())
}

/// Exhaustive counterpart of [`separate`]: scans every inequality of the
/// four integral families. Used as the independent oracle in tests.
pub fn enumerate_all_violations(sol: &SolutionTriple) -> Vec<Violation> {
    let mut out = check_uniqueness(sol);
    out.extend(check_suppression(sol));
    out.extend(check_transitivity(sol));
    if sol.mode == Mode::SinglePerson {
        out.extend(check_single_person(sol));
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use rand::{Rng, SeedableRng};

    fn solution(n: usize, k: usize, mode: Mode) -> SolutionTriple {
        SolutionTriple::all_suppressed(n, k, mode)
    }

    fn set_y(sol: &mut SolutionTriple, a: usize, b: usize) {
        let p = PairIndexer::new(sol.num_detections()).index(a, b);
        sol.y[p] = true;
    }

    #[test]
    fn uniqueness_examples() {
        let mut sol = solution(1, 3, Mode::MultiPerson);
        sol.x[0][0] = true;
        assert!(check_uniqueness(&sol).is_empty());

        sol.x[0][1] = true;
        assert_eq!(
            check_uniqueness(&sol),
            vec![Violation::Uniqueness {
                d: 0,
                c: 0,
                c_prime: 1
            }]
        );

        let empty = solution(2, 3, Mode::MultiPerson);
        assert!(check_uniqueness(&empty).is_empty());
    }

    #[test]
    fn suppression_examples() {
        let mut sol = solution(2, 1, Mode::MultiPerson);
        set_y(&mut sol, 0, 1);
        assert_eq!(check_suppression(&sol).len(), 2);

        sol.x[0][0] = true;
        assert_eq!(
            check_suppression(&sol),
            vec![Violation::Suppression {
                d: 0,
                d_prime: 1,
                suppressed: 1
            }]
        );

        sol.x[1][0] = true;
        assert!(check_suppression(&sol).is_empty());

        let idle = solution(2, 1, Mode::MultiPerson);
        assert!(check_suppression(&idle).is_empty());
    }

    #[test]
    fn transitivity_examples() {
        let mut sol = solution(3, 1, Mode::MultiPerson);
        set_y(&mut sol, 0, 1);
        set_y(&mut sol, 1, 2);
        assert_eq!(
            check_transitivity(&sol),
            vec![Violation::Transitivity { a: 0, mid: 1, b: 2 }]
        );

        let mut open = solution(3, 1, Mode::MultiPerson);
        set_y(&mut open, 0, 1);
        assert!(check_transitivity(&open).is_empty());

        let mut complete = solution(3, 1, Mode::MultiPerson);
        set_y(&mut complete, 0, 1);
        set_y(&mut complete, 1, 2);
        set_y(&mut complete, 0, 2);
        assert!(check_transitivity(&complete).is_empty());
    }

    #[test]
    fn single_person_examples() {
        let mut sol = solution(2, 2, Mode::SinglePerson);
        sol.x[0][0] = true;
        sol.x[1][1] = true;
        assert_eq!(
            check_single_person(&sol),
            vec![Violation::SinglePerson {
                d: 0,
                d_prime: 1,
                c: 0,
                c_prime: 1
            }]
        );

        set_y(&mut sol, 0, 1);
        assert!(check_single_person(&sol).is_empty());

        let mut half = solution(2, 2, Mode::SinglePerson);
        half.x[0][0] = true;
        assert!(check_single_person(&half).is_empty());
    }

    #[test]
    fn linearization_examples() {
        // x = 1, x' = 1, y = 1, z = 0: lower bound violated.
        let point = FractionalPoint {
            x: vec![vec![1.0], vec![1.0]],
            y: vec![1.0],
            z: vec![((0, 1, 0, 0), 0.0)],
        };
        assert_eq!(
            check_linearization(&point, 1e-9),
            vec![Violation::Linearization {
                d: 0,
                d_prime: 1,
                c: 0,
                c_prime: 0,
                direction: LinDirection::Lower
            }]
        );

        // x = 0 with z = 0.3 violates z <= x (and z <= y with y = 0).
        let point = FractionalPoint {
            x: vec![vec![0.0], vec![1.0]],
            y: vec![0.0],
            z: vec![((0, 1, 0, 0), 0.3)],
        };
        let got = check_linearization(&point, 1e-9);
        assert!(got.contains(&Violation::Linearization {
            d: 0,
            d_prime: 1,
            c: 0,
            c_prime: 0,
            direction: LinDirection::UpperX
        }));

        // Consistent assignment: nothing to report.
        let point = FractionalPoint {
            x: vec![vec![1.0], vec![1.0]],
            y: vec![1.0],
            z: vec![((0, 1, 0, 0), 1.0)],
        };
        assert!(check_linearization(&point, 1e-9).is_empty());
    }

    #[test]
    fn separate_path_of_three() {
        let mut sol = solution(3, 1, Mode::MultiPerson);
        sol.x = vec![vec![true], vec![true], vec![true]];
        set_y(&mut sol, 0, 1);
        set_y(&mut sol, 1, 2);
        assert_eq!(
            separate(&sol),
            vec![Violation::Transitivity { a: 0, mid: 1, b: 2 }]
        );
    }

    #[test]
    fn separate_feasible_is_empty() {
        let mut sol = solution(4, 2, Mode::MultiPerson);
        sol.x[0][0] = true;
        sol.x[1][1] = true;
        set_y(&mut sol, 0, 1);
        assert!(separate(&sol).is_empty());
        assert!(is_feasible(&sol));
    }

    /// Chain 0-1, 1-2, 2-3: the BFS witnesses must coincide with the
    /// exhaustive enumeration of violated triangles.
    #[test]
    fn separate_chain_matches_bruteforce() {
        let mut sol = solution(4, 1, Mode::MultiPerson);
        sol.x = vec![vec![true]; 4];
        set_y(&mut sol, 0, 1);
        set_y(&mut sol, 1, 2);
        set_y(&mut sol, 2, 3);
        let bfs = separate(&sol);
        let brute = enumerate_all_violations(&sol);
        assert_eq!(bfs, brute);
        assert_eq!(
            bfs,
            vec![
                Violation::Transitivity { a: 0, mid: 1, b: 2 },
                Violation::Transitivity { a: 1, mid: 2, b: 3 },
            ]
        );
    }

    /// Every violation reported by separation is genuinely violated, and
    /// separation is empty exactly when exhaustive enumeration is.
    #[test]
    fn separate_equivalent_to_enumeration_on_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let n = rng.gen_range(2..9);
            let k = rng.gen_range(1..4);
            let mode = if rng.gen_bool(0.5) {
                Mode::SinglePerson
            } else {
                Mode::MultiPerson
            };
            let mut sol = solution(n, k, mode);
            for d in 0..n {
                for c in 0..k {
                    sol.x[d][c] = rng.gen_bool(0.3);
                }
            }
            for p in 0..sol.y.len() {
                sol.y[p] = rng.gen_bool(0.4);
            }
            let fast = separate(&sol);
            let slow = enumerate_all_violations(&sol);
            assert_eq!(fast.is_empty(), slow.is_empty());
            // Violations found by BFS are a subset of the exhaustive set.
            for v in &fast {
                assert!(slow.binary_search(v).is_ok(), "{v:?} not violated");
            }
        }
    }
}
