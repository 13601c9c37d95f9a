//! Rayon-backed executor. Results come back in input order, so output does
//! not depend on the thread count.

use mtsx_core::exec::Executor;
use rayon::prelude::*;

use crate::error::{MtsxError, Result};

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(jobs: usize) -> Result<Self> {
        if jobs == 0 {
            return Err(MtsxError::Usage("--jobs must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| MtsxError::Usage(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
