//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) per-item work is spread over
//! the rayon thread pool; without it every call runs sequentially. Results are
//! always collected in input order, so output is identical either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// True when work will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `items.iter().enumerate().map(f).collect()`, possibly in parallel.
pub fn map_indexed<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = mode;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Runs two closures, concurrently when allowed.
pub fn join<A, B, RA, RB>(mode: Parallelism, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return rayon::join(a, b);
    }
    let _ = mode;
    (a(), b())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(&xs, Parallelism::Sequential, |i, x| x * x + i as u64);
        let par = map_indexed(&xs, Parallelism::Parallel, |i, x| x * x + i as u64);
        assert_eq!(seq, par);
        assert_eq!(join(Parallelism::Parallel, || 1, || 2), (1, 2));
    }
}
