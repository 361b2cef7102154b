//! Thread-pool executor for the core crate's [`Executor`] trait.

use exgraph_core::exec::Executor;
use rayon::prelude::*;

/// Runs independent tasks on a dedicated rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// A pool with `jobs` threads, or one per available core.
    pub fn new(jobs: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            builder = builder.num_threads(n.max(1));
        }
        Ok(RayonExecutor {
            pool: builder.build()?,
        })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for RayonExecutor {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_input_order() {
        let exec = RayonExecutor::new(Some(3)).unwrap();
        assert_eq!(exec.threads(), 3);
        let out = exec.map((0..1000).collect(), |x: u64| x * x);
        assert!(out.iter().enumerate().all(|(i, &v)| v == (i * i) as u64));
    }
}
