//! Thread-pool execution of the per-cell work.

use msstefan_core::engine::Executor;
use rayon::prelude::*;

/// Runs cell updates on a rayon pool. Each cell is touched by exactly one
/// task and results come back in node order, so the outcome matches the
/// serial executor bit for bit.
pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    /// `threads == 0` lets rayon pick.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Rayon { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect())
    }
}
