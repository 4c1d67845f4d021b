//! Sequential / data-parallel execution of indexed work.
//!
//! Results are always written to the slot of their index, so the output of
//! [`Execution::map_indexed`] does not depend on scheduling or thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's current pool; identical to `Sequential` without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..len).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Execution::Parallel => (0..len).map(f).collect(),
        }
    }

    /// Like [`map_indexed`](Self::map_indexed) for fallible work; the error of
    /// the lowest failing index wins.
    pub fn try_map_indexed<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map_indexed(len, f).into_iter().collect()
    }
}

/// Run `work` on a dedicated pool of `threads` workers (or inline when the
/// `parallel` feature is off).
pub fn with_threads<R: Send>(threads: Option<usize>, work: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            return pool.install(work);
        }
        work()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        work()
    }
}
