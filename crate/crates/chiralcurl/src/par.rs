//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it every call runs on the current thread and
//! returns identical results.

/// How independent work items are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Parallelism handed to dense kernels.
pub fn dense_par() -> faer::Par {
    #[cfg(feature = "parallel")]
    {
        faer::Par::rayon(0)
    }
    #[cfg(not(feature = "parallel"))]
    {
        faer::Par::Seq
    }
}

/// Configure the worker count used by both rayon and the dense kernels.
/// `threads = 0` keeps the defaults. Returns an error message when the global
/// pool was already initialised with a different size.
pub fn configure_threads(threads: usize) -> Result<(), String> {
    if threads == 0 {
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
        faer::set_global_parallelism(if threads == 1 {
            faer::Par::Seq
        } else {
            faer::Par::rayon(threads)
        });
    }
    Ok(())
}
