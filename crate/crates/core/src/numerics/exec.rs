/// Execution strategy for the row-parallel kernels.
///
/// `Exec::default()` is `Parallel` when the `parallel` feature is enabled and
/// `Sequential` otherwise. Both strategies produce bit-identical results: work
/// is split by output rows and every entry is accumulated in the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Apply `f(first_row, chunk)` to consecutive chunks of `rows_per_chunk`
    /// rows of the row-major buffer `out`.
    pub(crate) fn for_each_row_chunk<F>(self, out: &mut [f64], row_len: usize, rows_per_chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let chunk_len = row_len * rows_per_chunk.max(1);
        if chunk_len == 0 {
            return;
        }
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk_len)
                    .enumerate()
                    .for_each(|(c, chunk)| f(c * rows_per_chunk, chunk));
            }
            _ => out
                .chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(c, chunk)| f(c * rows_per_chunk, chunk)),
        }
    }
}
