//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers fan out over the rayon global
//! pool; without it they run as plain iterators. Every reduction happens
//! after collection, in index order, so results do not depend on the number
//! of workers.
//!
//! [`sequential`] forces the calling thread to stay serial for the duration
//! of a closure, which the benches use to compare both paths in one build.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module degraded to a serial loop.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let previous = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let _restore = Restore(previous);
    f()
}

/// True when helpers called from this thread will use the thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(&v, |x| x * x);
        assert_eq!(out, v.iter().map(|x| x * x).collect::<Vec<_>>());
        assert_eq!(map_range(5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn sequential_scope_restores_flag() {
        let before = is_parallel();
        sequential(|| {
            assert!(!is_parallel());
            sequential(|| assert!(!is_parallel()));
            assert!(!is_parallel());
        });
        assert_eq!(is_parallel(), before);
    }
}
