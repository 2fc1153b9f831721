//! Execution policy: data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers dispatch through rayon;
//! without it they run sequentially with identical results. Reductions use a
//! fixed pairwise algorithm regardless of thread count so that outputs are
//! bitwise reproducible.

use crate::error::Result;

/// Reports whether the parallel execution path is compiled in.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Caps the global worker-thread count; no-op without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::error::EpiError::InvalidParameter(format!("thread pool: {e}")))
}

/// Caps the global worker-thread count; no-op without the `parallel` feature.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<()> {
    Ok(())
}

/// Applies `f` to each index in `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Applies `f` to each index in `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs independent closures, returning their results in input order.
#[cfg(feature = "parallel")]
pub fn run_tasks<T, F>(tasks: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    use rayon::prelude::*;
    tasks.into_par_iter().map(|task| task()).collect()
}

/// Runs independent closures, returning their results in input order.
#[cfg(not(feature = "parallel"))]
pub fn run_tasks<T, F>(tasks: Vec<F>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    tasks.into_iter().map(|task| task()).collect()
}

/// Pairwise summation with a fixed recursion pattern (thread-count independent).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
