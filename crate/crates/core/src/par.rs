//! Data-parallel map with per-worker state. Runs on rayon with the
//! `parallel` feature and sequentially otherwise; results keep input order
//! either way.

#[cfg(feature = "parallel")]
pub fn map_init<T, S, R, I, F>(items: Vec<T>, init: I, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map_init(init, f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_init<T, S, R, I, F>(items: Vec<T>, init: I, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, T) -> R + Sync + Send,
{
    let mut state = init();
    items.into_iter().map(|t| f(&mut state, t)).collect()
}

/// Whether the parallel backend is compiled in.
pub const PARALLEL: bool = cfg!(feature = "parallel");
