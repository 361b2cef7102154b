//! Pluggable execution of independent tasks.
//!
//! Core code only needs "map this function over these inputs"; the std
//! companion crate supplies a thread-pool implementation.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Applies `f` to every item and returns results in input order.
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}
