//! Data-parallel helpers with a sequential fallback.
//!
//! Hot inner loops (batch inference, embedding, row generation, Gram
//! accumulation) go through these wrappers. With the `parallel` feature the
//! loops run on rayon; without it they run sequentially. Both paths produce
//! bit-identical output: element maps are index-wise, and float reductions
//! use fixed chunk boundaries combined in chunk order, so results never
//! depend on thread count or scheduling.

/// Fixed chunk length for deterministic reductions.
pub const CHUNK: usize = 1024;

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over indices `0..n`, preserving order.
pub fn map_indices<U: Send>(n: usize, f: impl Fn(usize) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Reduces fixed-size chunks of `items` with `per_chunk`, then folds the
/// per-chunk results sequentially in chunk order with `merge`.
///
/// Chunk boundaries are fixed at [`CHUNK`], so floating-point results are
/// identical across thread counts and with the sequential fallback.
pub fn chunked_reduce<T: Sync, A: Send>(
    items: &[T],
    per_chunk: impl Fn(&[T]) -> A + Sync + Send,
    mut merge: impl FnMut(A, A) -> A,
    empty: A,
) -> A {
    let partials: Vec<A>;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        partials = items.par_chunks(CHUNK).map(&per_chunk).collect();
    }
    #[cfg(not(feature = "parallel"))]
    {
        partials = items.chunks(CHUNK).map(&per_chunk).collect();
    }
    let mut acc = empty;
    for p in partials {
        acc = merge(acc, p);
    }
    acc
}
