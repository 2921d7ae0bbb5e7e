//! Thread-pool executor.

use hiergrade_core::pipeline::Executor;
use rayon::prelude::*;

use crate::{Error, Result};

pub const THREADS_ENV: &str = "HIERGRADE_THREADS";

/// Runs jobs on a rayon pool. Results come back in index order, so reductions
/// over them do not depend on the thread count.
pub struct ThreadPool {
    pool: rayon::ThreadPool,
}

impl ThreadPool {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {}", e)))?;
        Ok(ThreadPool { pool })
    }

    /// Sized by `HIERGRADE_THREADS`, or the available parallelism when unset.
    pub fn from_env() -> Result<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::Config(format!("{} must be a positive integer, got `{}`", THREADS_ENV, v)))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for ThreadPool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
