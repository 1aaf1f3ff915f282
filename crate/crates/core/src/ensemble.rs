//! Deterministic parallel ensemble evaluation.

use rayon::prelude::*;

/// Paths per work unit for chunked folds.
pub const CHUNK: usize = 64;

/// Maps `f` over `0..n` in parallel, preserving index order.
pub fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Folds `0..n` in fixed-size chunks and merges the chunk results in index
/// order, so the floating-point result is independent of the thread count.
pub fn par_fold<A: Send>(
    n: usize,
    init: impl Fn() -> A + Sync + Send,
    fold: impl Fn(&mut A, usize) + Sync + Send,
    merge: impl Fn(&mut A, A),
) -> A {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}
