//! Data-parallel loops over disjoint output chunks.
//!
//! With the `parallel` feature (default) these run on the rayon pool;
//! without it they fall back to plain sequential iteration. Callers only
//! ever mutate disjoint chunks and derive any randomness from the chunk
//! index, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f(chunk_index, chunk)` to consecutive `chunk_len` chunks of `data`.
pub(crate) fn for_each_chunk<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));

    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

/// Pairwise variant: applies `f(chunk_index, out_chunk, in_chunk)` over
/// matching chunks of two equal-length buffers.
pub(crate) fn for_each_chunk_pair<F>(out: &mut [f64], input: &[f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64], &[f64]) + Sync + Send,
{
    debug_assert_eq!(out.len(), input.len());

    #[cfg(feature = "parallel")]
    out.par_chunks_mut(chunk_len)
        .zip(input.par_chunks(chunk_len))
        .enumerate()
        .for_each(|(i, (o, inp))| f(i, o, inp));

    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(chunk_len)
        .zip(input.chunks(chunk_len))
        .enumerate()
        .for_each(|(i, (o, inp))| f(i, o, inp));
}

/// Maps each index of `0..count` to a value, preserving order.
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
