//! Work-mapping abstraction.
//!
//! Heavy stages (augmentation, featurization, per-sample backprop) map a
//! pure function over an index range. The core crate only ships the
//! sequential executor; the `oad` crate provides a threaded one. The
//! contract for any implementation: `map(n, f)` returns exactly
//! `(0..n).map(f).collect()`, same values in the same order, so thread count
//! never changes results.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs every work item on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExec;

impl Executor for SerialExec {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}
