//! Row-partitioned execution of per-pixel kernels.
//!
//! With the `parallel` feature (default) rows are distributed across the
//! rayon pool; without it the same kernels run sequentially. Kernels must
//! be pure per row, so both paths produce identical output.

/// Runs `kernel(row_index, row_slice)` over every row of a `width`-wide
/// buffer.
pub fn for_each_row<F>(data: &mut [f64], width: usize, kernel: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(width).enumerate().for_each(|(v, row)| kernel(v, row));
    }
    #[cfg(not(feature = "parallel"))]
    for_each_row_seq(data, width, kernel);
}

/// Always-sequential variant, used as the baseline in benchmarks.
pub fn for_each_row_seq<F>(data: &mut [f64], width: usize, kernel: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    for (v, row) in data.chunks_mut(width).enumerate() {
        kernel(v, row);
    }
}

/// Generic variant of [`for_each_row`] for non-`f64` row buffers.
pub fn for_each_row_of<T, F>(data: &mut [T], width: usize, kernel: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(width).enumerate().for_each(|(v, row)| kernel(v, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (v, row) in data.chunks_mut(width).enumerate() {
        kernel(v, row);
    }
}

/// Runs `kernel(row_index, row_a, row_b)` over paired rows of two
/// equally-sized buffers.
pub fn for_each_row_pair<F>(a: &mut [f64], b: &mut [f64], width: usize, kernel: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        a.par_chunks_mut(width)
            .zip(b.par_chunks_mut(width))
            .enumerate()
            .for_each(|(v, (ra, rb))| kernel(v, ra, rb));
    }
    #[cfg(not(feature = "parallel"))]
    for (v, (ra, rb)) in a.chunks_mut(width).zip(b.chunks_mut(width)).enumerate() {
        kernel(v, ra, rb);
    }
}
