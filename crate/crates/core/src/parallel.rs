//! Fan-out of independent per-path work.
//!
//! Results are gathered in path order and any reduction happens afterwards on
//! a single thread, so reports do not depend on the number of workers.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// Environment variable naming the worker count (default: all cores).
pub const WORKERS_ENV: &str = "CURVPATH_WORKERS";

fn default_pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let workers = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
        ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
    })
}

fn collect_in_order<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Evaluate `f(0..n)` on the default pool; the first error by index wins.
pub fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = default_pool().install(|| (0..n).into_par_iter().map(&f).collect());
    collect_in_order(results)
}

/// As [`map_paths`] on a dedicated pool of `workers` threads.
pub fn map_paths_with<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    collect_in_order(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let a = map_paths_with(1, 100, |i| Ok(i * i)).unwrap();
        let b = map_paths_with(3, 100, |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_by_index() {
        let r: Result<Vec<usize>> = map_paths(50, |i| if i % 10 == 9 { Err(Error::InvalidArgument(format!("{i}"))) } else { Ok(i) });
        assert_eq!(r.unwrap_err(), Error::InvalidArgument("9".into()));
    }
}
