//! Sequential / data-parallel dispatch.
//!
//! Every parallel code path in the crate splits work into a fixed set of
//! independent units (replications, fixed-size chunks) and gathers the results
//! in unit order, so the output is bit-identical whichever mode runs it.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a data-parallel loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    /// Plain iterator loop on the calling thread.
    Sequential,
    /// Rayon work-stealing on the current pool. Without the `parallel`
    /// feature this behaves like [`Exec::Sequential`].
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `0..n` and returns the results in index order.
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Maps `f` over consecutive chunks of `data` of length `chunk` (the last
    /// one may be shorter). `f` receives the chunk index and the slice.
    pub fn map_chunks<'a, E, T, F>(self, data: &'a [E], chunk: usize, f: F) -> Vec<T>
    where
        E: Sync,
        T: Send,
        F: Fn(usize, &'a [E]) -> T + Sync + Send,
    {
        assert!(chunk > 0, "chunk length must be positive");
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect(),
            _ => data
                .chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect(),
        }
    }
}
