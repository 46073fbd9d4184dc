//! Index-ordered parallel map with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`]. Output is
//! collected in index order, so aggregation downstream is independent of
//! scheduling and of the worker count.

/// Number of workers to use when the caller passes `0`.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Evaluates `f(0), f(1), .., f(len - 1)` and returns the results in index order.
///
/// `workers == 1` always runs on the calling thread. `workers == 0` uses every
/// available core. Without the `parallel` feature the loop is sequential
/// regardless of `workers`.
pub fn map_indexed<T, F>(len: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers == 1 || len < 2 {
        return (0..len).map(f).collect();
    }
    parallel_map(len, workers, f)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(len: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;

    let threads = if workers == 0 { default_workers() } else { workers };
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..len).into_par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("could not start a {threads}-thread pool ({e}); running sequentially");
            (0..len).map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(len: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let seq = map_indexed(1000, 1, |i| i * i);
        for w in [0, 2, 3, 8] {
            assert_eq!(map_indexed(1000, w, |i| i * i), seq);
        }
    }

    #[test]
    fn empty_and_single() {
        assert!(map_indexed(0, 4, |i| i).is_empty());
        assert_eq!(map_indexed(1, 4, |i| i + 7), vec![7]);
    }
}
