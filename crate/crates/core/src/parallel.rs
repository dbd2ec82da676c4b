//! Order-preserving data parallelism. Results are always combined in chunk
//! order, so outputs do not depend on the worker count.

use rayon::prelude::*;

use crate::channel::LlrFrame;
use crate::decoder::{frame_error, Decoder, Workspace};

/// Frames per work item.
pub const CHUNK: usize = 16;

/// Applies `f` to consecutive chunks of `items` and returns the results in
/// chunk order.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    items.par_chunks(chunk.max(1)).map(f).collect()
}

/// Runs `f(k)` for `k in 0..count` in parallel, results in index order.
pub fn map_indices<R, F>(count: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Number of `frames` the decoder fails to correct (any wrong bit, or any
/// wrong information bit under `info_mask`).
pub fn count_failures(dec: &Decoder<'_>, params: &[f64], frames: &[LlrFrame], info_mask: Option<&[bool]>) -> usize {
    map_chunks(frames, CHUNK, |chunk| {
        let mut ws = Workspace::new(dec.graph());
        chunk
            .iter()
            .filter(|f| {
                dec.decode_unchecked(params, &f.llr, &mut ws);
                frame_error(&ws.hard, info_mask)
            })
            .count()
    })
    .into_iter()
    .sum()
}

/// Configures the global worker pool; `None` keeps the default (available
/// parallelism). Only the first call takes effect.
pub fn init_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
