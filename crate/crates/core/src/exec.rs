//! Execution backend for data-parallel loops.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] dispatches to
//! rayon; without it every loop runs sequentially and `Parallel` silently
//! degrades to `Sequential`. Results never depend on the backend: work items
//! carry their own random streams and reductions happen afterwards in index
//! order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// True when this backend really runs on a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output is in index order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive chunks of `data`.
pub fn for_each_chunk<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Walks three slices in lock-step chunks. Chunk `k` of `a` has
/// `chunk * a_stride` elements, of `b` `chunk * b_stride`, of `c` `chunk`.
#[allow(clippy::too_many_arguments)]
pub fn zip3_chunks<A, B, C, F>(
    exec: Exec,
    a: &mut [A],
    a_stride: usize,
    b: &mut [B],
    b_stride: usize,
    c: &mut [C],
    chunk: usize,
    f: F,
) where
    A: Send,
    B: Send,
    C: Send,
    F: Fn(usize, &mut [A], &mut [B], &mut [C]) + Sync + Send,
{
    let chunk = chunk.max(1);
    debug_assert_eq!(a.len(), c.len() * a_stride);
    debug_assert_eq!(b.len(), c.len() * b_stride);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(chunk * a_stride.max(1))
            .zip(b.par_chunks_mut(chunk * b_stride.max(1)))
            .zip(c.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(i, ((x, y), z))| f(i, x, y, z));
        return;
    }
    let _ = exec;
    a.chunks_mut(chunk * a_stride.max(1))
        .zip(b.chunks_mut(chunk * b_stride.max(1)))
        .zip(c.chunks_mut(chunk))
        .enumerate()
        .for_each(|(i, ((x, y), z))| f(i, x, y, z));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(map_range(Exec::Parallel, 1000, f), map_range(Exec::Sequential, 1000, f));

        let mut a = vec![0.0; 30];
        let mut b = vec![0u32; 10];
        let mut c = vec![0u8; 10];
        zip3_chunks(Exec::Parallel, &mut a, 3, &mut b, 1, &mut c, 4, |k, x, y, z| {
            for v in x.iter_mut() {
                *v = k as f64;
            }
            for v in y.iter_mut() {
                *v = k as u32;
            }
            for v in z.iter_mut() {
                *v = 1;
            }
        });
        assert_eq!(a[29], 2.0);
        assert_eq!(b[9], 2);
        assert!(c.iter().all(|&v| v == 1));
    }
}
