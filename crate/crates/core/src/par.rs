//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon global pool;
//! without it they fall back to plain sequential iteration. Output order always
//! matches input order, so results never depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, collecting results in input order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, collecting results in input order.
#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Fallible map; returns the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map(&idx, |&i| f(i))
}

/// Whether this build runs the parallel code paths.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(&v, |x| x * x);
        assert!(out.iter().enumerate().all(|(i, &y)| y == (i * i) as u64));
    }

    #[test]
    fn try_map_reports_first_error() {
        let v: Vec<i32> = (0..100).collect();
        let out: Result<Vec<i32>, i32> = try_map(&v, |&x| if x % 30 == 29 { Err(x) } else { Ok(x) });
        assert_eq!(out, Err(29));
    }
}
