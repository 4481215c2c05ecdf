//! Replica engine. Replicas run in parallel when the `parallel` feature is
//! on and sequentially otherwise; results always come back in replica
//! order, so every downstream reduction is bit-identical across thread
//! counts.

/// `f(0), f(1), ..., f(count - 1)`, evaluated in parallel when available.
pub fn map_replicas<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replicas_sequential(count, f)
    }
}

/// Single-threaded reference path.
pub fn map_replicas_sequential<T, F>(count: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..count).map(f).collect()
}

/// Fallible variant; the first error in replica order wins.
pub fn try_map_replicas<T, E, F>(count: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    map_replicas(count, f).into_iter().collect()
}

/// Worker threads the engine will use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
