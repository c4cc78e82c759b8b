//! Thin dispatch layer between rayon and plain iteration.
//!
//! Built with the `parallel` feature (default) the helpers fan work out with
//! rayon; without it they run sequentially with identical results. Callers
//! must pass pure functions: outputs are collected in input order, so the
//! result never depends on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Minimizes `f` over `0..n` under a strict total order supplied by `better`.
/// `better(a, b)` must return true iff `a` strictly precedes `b`; because the
/// order is total, the reduction is associative and the result is
/// deterministic regardless of work splitting.
pub fn min_by_range<T, F, B>(n: usize, f: F, better: B) -> Option<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
    B: Fn(&T, &T) -> bool + Sync + Send,
{
    let pick = |a: T, b: T| if better(&b, &a) { b } else { a };
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .map(f)
            .reduce_with(pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).reduce(pick)
    }
}
