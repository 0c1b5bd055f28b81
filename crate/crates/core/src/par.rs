//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it the same closures run sequentially. Results
//! are collected in index order either way, so output never depends on the
//! schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(i, &mut items[i])` for every item.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
    #[cfg(not(feature = "parallel"))]
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// `f(i, &items[i])` for every item, in order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    #[cfg(not(feature = "parallel"))]
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Worker threads available to [`for_each_mut`] and [`map`].
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    1
}

/// Runs `f` on a dedicated pool of `threads` workers. Sequential builds
/// ignore the count.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
