//! Data-parallel fan-out with deterministic commit order.
//!
//! Protocol fan-outs (answer agents within a round, artist sub-societies,
//! critic ballots) and batch evaluation (metric sweeps, Monte Carlo
//! baselines, seed sweeps) map over independent items. With the `parallel`
//! feature the map runs on rayon; without it, sequentially. Either way the
//! output preserves input order, so transcripts and reports are identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Order-preserving map; parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map; the fallback path and the benchmark baseline.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Fan out unless any participating backend declared itself serial.
pub fn map_maybe_parallel<T, U, F>(items: Vec<T>, any_serial: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    if any_serial {
        seq_map(items, f)
    } else {
        par_map(items, f)
    }
}
