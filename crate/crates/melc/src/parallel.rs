//! Chunked map helpers. Work is split into fixed-size chunks whose partial
//! results are collected in chunk order and combined sequentially, so the
//! combined result is bit-identical whether chunks run on one thread or
//! many.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per chunk in the pairwise kernels.
pub(crate) const CHUNK_ROWS: usize = 64;

/// Maps `f` over per-chunk ranges of `0..n`, returning results in chunk order.
pub(crate) fn map_chunks<U, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(std::ops::Range<usize>) -> U + Sync + Send,
{
    let ranges: Vec<std::ops::Range<usize>> = chunk_ranges(n, chunk);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Single-threaded twin of [`map_chunks`], identical chunk decomposition.
pub(crate) fn map_chunks_seq<U, F>(n: usize, chunk: usize, f: F) -> Vec<U>
where
    F: Fn(std::ops::Range<usize>) -> U,
{
    chunk_ranges(n, chunk).into_iter().map(f).collect()
}

/// Maps `f` over items, order-preserving.
pub(crate) fn map_items<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// Compensated accumulator. The correction term recovers what plain
/// addition drops when magnitudes differ.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}
