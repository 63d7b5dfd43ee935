//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature the helpers fan out over rayon's pool; without
//! it they degrade to plain iterators. Result order always matches input order,
//! so outputs are identical either way.

/// Execution policy for kernels that offer both paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` only when the feature is compiled in.
    pub fn effective(self) -> Exec {
        if cfg!(feature = "parallel") {
            self
        } else {
            Exec::Sequential
        }
    }
}

/// Map `f` over `items`, in parallel when available.
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Caps the global worker pool. Reads `INHERIT_THREADS` when `threads` is `None`.
///
/// Returns the number of threads configured, or `None` if the pool was already
/// built or no cap was requested.
pub fn init_thread_pool(threads: Option<usize>) -> Option<usize> {
    let n = threads.or_else(|| {
        std::env::var("INHERIT_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
    })?;
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok()
            .map(|_| n)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let out = par_map((0..100u64).collect(), |x| x * x);
        assert_eq!(out, (0..100u64).map(|x| x * x).collect::<Vec<_>>());
    }
}
