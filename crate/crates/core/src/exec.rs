//! Execution helpers for data-parallel inner loops.
//!
//! Every hot loop in the crate maps independent elements (pixels, table
//! temperatures) through a pure function, so parallel and sequential
//! execution produce bit-identical output. `map_*` dispatches to rayon when
//! the `parallel` feature is on and falls back to the sequential twin
//! otherwise; the `map_*_seq` variants are always available so benchmarks can
//! compare both paths in one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map a function over a slice of values.
pub fn map_values<F>(values: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        values.par_iter().map(|&v| f(v)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_values_seq(values, f)
    }
}

/// Sequential twin of [`map_values`].
pub fn map_values_seq<F>(values: &[f64], f: F) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    values.iter().map(|&v| f(v)).collect()
}

/// Map a function over `0..len`, e.g. for per-pixel work that needs the index.
pub fn map_indexed<F>(len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(|i| f(i)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(len, f)
    }
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<F>(len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    (0..len).map(f).collect()
}

/// Configure the global thread pool size. No-op without the `parallel`
/// feature. Returns an error string if the pool was already initialized.
pub fn configure_threads(n: usize) -> std::result::Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}
