//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is split across the rayon
//! pool; without it every `Exec` runs sequentially. Each work item is
//! computed identically on either path, so results never depend on the
//! thread count.

/// Execution strategy for the data-parallel kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// Rows smaller than this many scalar operations per chunk are not split.
#[cfg(feature = "parallel")]
const MIN_CHUNK_WORK: usize = 1 << 12;

/// Runs `f(row_index, row)` for every row of a row-major buffer.
pub fn for_each_row<F>(exec: Exec, data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if data.len() > MIN_CHUNK_WORK => {
            use rayon::prelude::*;
            let rows_per_chunk = (MIN_CHUNK_WORK / row_len).max(1);
            data.par_chunks_mut(rows_per_chunk * row_len)
                .enumerate()
                .for_each(|(c, chunk)| {
                    for (k, row) in chunk.chunks_mut(row_len).enumerate() {
                        f(c * rows_per_chunk + k, row);
                    }
                });
        }
        _ => {
            for (i, row) in data.chunks_mut(row_len).enumerate() {
                f(i, row);
            }
        }
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Whether `Exec::Parallel` actually fans out in this build.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
