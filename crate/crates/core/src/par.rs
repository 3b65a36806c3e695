//! Bounded data-parallel execution with a sequential fallback.
//!
//! The `parallel` feature wires [`Executor`] to a rayon thread pool; without
//! it every mode degrades to sequential execution. Results always come back
//! in input order, so pipeline output is identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    /// Bounded fan-out over a dedicated pool of this many threads.
    Threads(usize),
}

impl Default for Parallelism {
    fn default() -> Self {
        Parallelism::Threads(4)
    }
}

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    #[cfg(not(feature = "parallel"))]
    _sequential: (),
}

impl Executor {
    pub fn new(mode: Parallelism) -> Self {
        #[cfg(feature = "parallel")]
        {
            let pool = match mode {
                Parallelism::Threads(n) if n > 1 => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .ok(),
                _ => None,
            };
            Executor { pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = mode;
            Executor { _sequential: () }
        }
    }

    pub fn sequential() -> Self {
        Executor::new(Parallelism::Sequential)
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Applies `f` to every item, returning results in input order.
    pub fn map_ordered<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}
