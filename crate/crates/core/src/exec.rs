//! Data-parallel helpers with a sequential fallback.
//!
//! All helpers return results in input order, and every reduction in the
//! crate is performed sequentially over the collected results, so output is
//! identical whichever execution mode is selected. Without the `parallel`
//! feature every mode runs sequentially.

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Run on the calling thread.
    Sequential,
    /// Run on the global rayon pool.
    #[default]
    Auto,
    /// Run on a dedicated pool with this many threads.
    Threads(usize),
}

impl Parallelism {
    /// Maps a `--workers N` style count: 1 is sequential, 0 is the global pool.
    pub fn from_workers(workers: usize) -> Self {
        match workers {
            0 => Parallelism::Auto,
            1 => Parallelism::Sequential,
            n => Parallelism::Threads(n),
        }
    }

    pub fn is_sequential(self) -> bool {
        !cfg!(feature = "parallel") || self == Parallelism::Sequential
    }
}

/// Maps `f` over `items`, preserving order.
pub fn par_map<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    par_map_indexed(items, mode, |_, item| f(item))
}

/// Like [`par_map`] but also passes the item index.
pub fn par_map_indexed<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match mode {
            Parallelism::Sequential => {}
            Parallelism::Auto => {
                return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
            }
            Parallelism::Threads(n) => {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    return pool
                        .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
                }
            }
        }
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Maps over `0..n`.
pub fn par_range<R, F>(n: usize, mode: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    par_map(&idx, mode, |&i| f(i))
}
