//! Order-preserving parallel map used by the labeling, split-search and
//! verification loops. With the `parallel` feature disabled, or with a
//! single worker, everything runs on the calling thread.

/// `0` means one worker per available core.
pub fn resolve_workers(workers: usize) -> usize {
    if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    }
}

/// Maps `f` over `items`, returning results in input order. The first error
/// in input order is returned.
pub fn try_map<T, R, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    let workers = resolve_workers(workers);
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    parallel_try_map(items, workers, f)
}

pub fn map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match try_map(items, workers, |t| Ok::<_, std::convert::Infallible>(f(t))) {
        Ok(v) => v,
        Err(never) => match never {},
    }
}

#[cfg(feature = "parallel")]
fn parallel_try_map<T, R, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => {
            let results: Vec<Result<R, E>> = pool.install(|| items.par_iter().map(&f).collect());
            results.into_iter().collect()
        }
        Err(err) => {
            log::warn!("cannot start {workers} workers ({err}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_try_map<T, R, E, F>(items: &[T], _workers: usize, f: F) -> Result<Vec<R>, E>
where
    F: Fn(&T) -> Result<R, E>,
{
    items.iter().map(f).collect()
}
