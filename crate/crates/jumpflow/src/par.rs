//! Deterministic data-parallel helpers.
//!
//! Work is cut into fixed-size chunks of consecutive indices. Each chunk is
//! folded sequentially and the chunk results are merged in index order, so the
//! floating-point result is the same for any number of worker threads and for
//! the sequential build without the `parallel` feature.

/// Paths per chunk. Small enough to balance load, large enough to amortize
/// scheduling.
pub const CHUNK: usize = 256;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f(0), …, f(n-1)` in index order.
pub fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Fold `n` items chunk by chunk and merge the chunk accumulators in order.
pub fn fold<A, I, F, M>(n: usize, init: I, fold_one: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts = map(chunks, |c| {
        let mut acc = init();
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        for i in lo..hi {
            fold_one(&mut acc, i);
        }
        acc
    });
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Fallible variant of [`fold`]; the error of the lowest failing index wins.
pub fn try_fold<A, E, I, F, M>(n: usize, init: I, fold_one: F, merge: M) -> Result<A, E>
where
    A: Send,
    E: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) -> Result<(), E> + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts = map(chunks, |c| {
        let mut acc = init();
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        for i in lo..hi {
            fold_one(&mut acc, i)?;
        }
        Ok(acc)
    });
    let mut total = init();
    for p in parts {
        merge(&mut total, p?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_order_stable() {
        let n = 10_000;
        let s = fold(n, || 0.0f64, |a, i| *a += (i as f64).sqrt().sin(), |a, b| *a += b);
        let mut seq = 0.0;
        for c in 0..n.div_ceil(CHUNK) {
            let mut part = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                part += (i as f64).sqrt().sin();
            }
            seq += part;
        }
        assert_eq!(s.to_bits(), seq.to_bits());
    }
}
