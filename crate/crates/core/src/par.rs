//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon whenever the
//! current pool has more than one thread; otherwise they run the plain
//! sequential loop. Every helper returns results in input order, so callers
//! observe identical output regardless of the thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when work will actually be split across threads.
pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads() > 1
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// Number of worker threads available to the helpers.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `f` inside a dedicated pool of `threads` workers (0 = hardware
/// parallelism). Without the `parallel` feature this just calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if threads > 0 {
            builder = builder.num_threads(threads);
        }
        match builder.build() {
            Ok(pool) => pool.install(f),
            Err(err) => {
                log::warn!("could not build thread pool ({err}); running on the global pool");
                f()
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(range: Range<usize>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return range.into_par_iter().map(f).collect();
    }
    range.map(f).collect()
}

/// Maps `f` over consecutive chunks of `len` indices and concatenates the
/// per-chunk outputs in order.
pub fn flat_map_chunks<R, F>(len: usize, chunk: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> Vec<R> + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    let parts = map_range(0..n_chunks, |c| f(c * chunk..((c + 1) * chunk).min(len)));
    let mut out = Vec::with_capacity(parts.iter().map(Vec::len).sum());
    for p in parts {
        out.extend(p);
    }
    out
}

/// Applies `f(offset, chunk)` to disjoint mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * chunk, c));
        return;
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i * chunk, c);
    }
}

/// Folds chunks of `0..len` into partial values with `fold` and combines them
/// with the associative `reduce`.
pub fn reduce_chunks<A, F, G>(len: usize, chunk: usize, identity: A, fold: F, reduce: G) -> A
where
    A: Send + Sync + Clone,
    F: Fn(Range<usize>) -> A + Sync + Send,
    G: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = len.div_ceil(chunk);
    let parts = map_range(0..n_chunks, |c| fold(c * chunk..((c + 1) * chunk).min(len)));
    parts.into_iter().fold(identity, reduce)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_helpers_preserve_order() {
        let out = flat_map_chunks(10, 3, |r| r.collect::<Vec<_>>());
        assert_eq!(out, (0..10).collect::<Vec<_>>());
        let sum = reduce_chunks(100, 7, 0usize, |r| r.sum(), |a, b| a + b);
        assert_eq!(sum, 4950);
    }

    #[test]
    fn chunked_mutation_covers_every_element() {
        let mut v = vec![0usize; 50];
        for_each_chunk_mut(&mut v, 8, |off, c| {
            for (i, x) in c.iter_mut().enumerate() {
                *x = off + i;
            }
        });
        assert_eq!(v, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn pool_sizes_agree() {
        let a = with_threads(1, || map_range(0..64, |i| i * i));
        let b = with_threads(4, || map_range(0..64, |i| i * i));
        assert_eq!(a, b);
    }
}
