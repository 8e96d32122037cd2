//! Index-parallel execution hook.
//!
//! Randomized work in this crate is split into independent units whose
//! randomness comes from labelled streams, so any executor that returns the
//! results in index order yields bit-identical output. The std companion
//! crate provides a thread-pool implementation.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0), f(1), ..., f(n - 1)` and returns the results in index
    /// order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
