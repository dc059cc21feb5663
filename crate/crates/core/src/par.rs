//! Order-preserving parallel map with an explicit worker count.

use rayon::prelude::*;

/// Maps `f` over `items` on `workers` threads and returns results in input
/// order. `workers <= 1` runs inline on the calling thread.
pub fn par_map<T, R, E, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_order_and_first_error() {
        let items: Vec<u32> = (0..100).collect();
        let out: Result<Vec<u32>, ()> = par_map(&items, 4, |&i| Ok(i * 2));
        assert_eq!(out.unwrap(), (0..100).map(|i| i * 2).collect::<Vec<_>>());
        let err: Result<Vec<u32>, u32> = par_map(&items, 3, |&i| if i == 57 { Err(i) } else { Ok(i) });
        assert_eq!(err, Err(57));
    }
}
