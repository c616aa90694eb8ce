//! Fixed-order reductions over the sample axis.
//!
//! Samples are split into chunks of [`CHUNK`] consecutive indices. Each chunk
//! is reduced sequentially and chunk partials are summed in chunk order, so
//! the result does not depend on how many threads evaluated the chunks.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) const CHUNK: usize = 2048;

/// Sums `n_out` accumulators over `0..n`, `f(r, acc)` adding sample `r`'s
/// contributions into `acc`.
pub(crate) fn chunked_sums<F>(n: usize, n_out: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let mut acc = vec![0.0; n_out];
        let end = ((c + 1) * CHUNK).min(n);
        for r in c * CHUNK..end {
            f(r, &mut acc);
        }
        acc
    };
    let partials: Vec<Vec<f64>> = map_indexed(n_chunks, partial);
    let mut total = vec![0.0; n_out];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Sample mean of `f(r)` over `0..n`.
pub(crate) fn mean_of<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    chunked_sums(n, 1, |r, acc| acc[0] += f(r))[0] / n as f64
}

/// `(0..n).map(f).collect()`, evaluated in parallel with the `std` feature.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_plain_sum_for_integers() {
        let n = 3 * CHUNK + 17;
        let s = chunked_sums(n, 2, |r, acc| {
            acc[0] += r as f64;
            acc[1] += 1.0;
        });
        assert_eq!(s[0], (n * (n - 1) / 2) as f64);
        assert_eq!(s[1], n as f64);
    }

    #[test]
    fn mean_of_empty_is_zero() {
        assert_eq!(mean_of(0, |_| 1.0), 0.0);
    }
}
