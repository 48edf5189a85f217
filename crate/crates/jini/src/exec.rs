//! Thread-pool executor backing the core crate's parallel maps.

use anyhow::Result;
use jini_core::bias_correct::Executor;
use rayon::prelude::*;

/// Executes jobs on a dedicated rayon pool. Results come back indexed by
/// job, and all reductions downstream run in job order, so output is
/// identical for any worker count.
pub struct ThreadPoolExecutor {
    pool: rayon::ThreadPool,
}

impl ThreadPoolExecutor {
    pub fn new(workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for ThreadPoolExecutor {
    fn run<T, F>(&self, jobs: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let job = &job;
        self.pool
            .install(move || (0..jobs).into_par_iter().map(move |i| job(i)).collect())
    }
}

/// Resolves the worker count: explicit flag, then the `JINI_WORKERS`
/// environment variable, then every available core.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("JINI_WORKERS").ok().and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    })
    .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_job_order() {
        let exec = ThreadPoolExecutor::new(4).unwrap();
        let out = exec.run(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
