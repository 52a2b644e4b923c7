//! Worker pool for data-parallel batch work.
//!
//! Results are always returned in index order, so output never depends on the
//! number of workers or on scheduling.

use rayon::prelude::*;

use crate::error::{QdError, Result};

pub struct Executor {
    pool: Option<rayon::ThreadPool>,
    workers: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("workers", &self.workers).finish()
    }
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(QdError::InvalidArgument("workers must be at least 1".into()));
        }
        let pool = if workers == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| QdError::Config(format!("cannot build worker pool: {e}")))?,
            )
        };
        Ok(Self { pool, workers })
    }

    pub fn sequential() -> Self {
        Self { pool: None, workers: 1 }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => {
                let min_len = (n / (self.workers * 4)).max(1);
                pool.install(|| (0..n).into_par_iter().with_min_len(min_len).map(f).collect())
            }
        }
    }

    /// Like [`Executor::map`], but reports the lowest-index error.
    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}
