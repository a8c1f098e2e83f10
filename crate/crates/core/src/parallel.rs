//! Thin layer over rayon with a sequential fallback.
//!
//! With the `parallel` feature (default) enabled, `map_indexed` fans out over
//! the rayon thread pool; without it, the same call compiles to a plain loop.
//! Both paths produce identical results: every work item writes its own slot,
//! so no reduction order is involved.

/// Parallelism policy for entry points that expose a runtime choice
/// (benchmark trial loops). `Parallel` degrades to sequential execution
/// when the `parallel` feature is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Parallel,
    Sequential,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runtime-selected variant used by the benchmark harness.
pub fn map_indexed_mode<T, F>(mode: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        Parallelism::Parallel => map_indexed(n, f),
        Parallelism::Sequential => map_indexed_seq(n, f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as u64).wrapping_mul(0x9e3779b97f4a7c15);
        let a = map_indexed(257, f);
        let b = map_indexed_seq(257, f);
        assert_eq!(a, b);
        let c = map_indexed_mode(Parallelism::Parallel, 257, f);
        assert_eq!(a, c);
    }
}
