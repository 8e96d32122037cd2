use rayon::prelude::*;
use rayon::ThreadPool;
use tcf_core::exec::Executor;

use crate::error::{CliError, Result};

/// Executor backed by a dedicated rayon pool. Results come back in index
/// order, so output does not depend on the thread count.
pub struct Pool(ThreadPool);

impl Pool {
    /// `None` uses one thread per available core.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map(Pool)
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))
    }

    pub fn threads(&self) -> usize {
        self.0.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.0.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
