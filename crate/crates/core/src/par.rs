//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run on the calling thread. Work items are indexed so callers derive
//! per-item seeds from the index, which keeps results identical across both
//! paths and any thread count.

/// True when the rayon backend is compiled in.
#[inline]
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Sequential map over `0..count`. Always available, used by benches as the
/// baseline.
pub fn map_indexed_seq<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map_indexed_seq(count, f)
}

/// Run `f` on a pool of `workers` threads. Falls back to a direct call when
/// rayon is disabled or `workers` is 1.
#[cfg(feature = "parallel")]
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if workers <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, F>(_workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    f()
}

/// Order-preserving map over a slice.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let a = map_indexed(1000, |i| (i as f64).sqrt());
        let b = map_indexed_seq(1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }

    #[test]
    fn worker_pool_runs_closure() {
        let out = with_workers(2, || map_slice(&[1, 2, 3], |x| x * 10));
        assert_eq!(out, vec![10, 20, 30]);
    }
}
