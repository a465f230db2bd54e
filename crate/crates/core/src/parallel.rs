//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, [`Execution::Parallel`] runs on the rayon
//! pool; results always come back in input order, so anything reduced from
//! them sequentially is bitwise identical to a fully sequential run.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon support.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map_indexed<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}

/// Tree reduction on the rayon pool; association order depends on work splitting.
#[cfg(feature = "parallel")]
pub fn reduce_unordered<T, F>(items: Vec<T>, f: F) -> Option<T>
where
    T: Send,
    F: Fn(T, T) -> T + Sync + Send,
{
    items.into_par_iter().reduce_with(f)
}

#[cfg(not(feature = "parallel"))]
pub fn reduce_unordered<T, F>(items: Vec<T>, f: F) -> Option<T>
where
    T: Send,
    F: Fn(T, T) -> T + Sync + Send,
{
    items.into_iter().reduce(f)
}

/// Seed for stream `index` derived from `base` (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(&items, Execution::Sequential, |i, x| x * 3 + i as u64);
        let par = map_indexed(&items, Execution::Parallel, |i, x| x * 3 + i as u64);
        assert_eq!(seq, par);
    }
}
