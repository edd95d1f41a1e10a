//! Deterministic parallel accumulation of a channel's frame stream.
//!
//! Frames are grouped into chunks whose boundaries sit at multiples of
//! [`FRAME_CHUNK`]. Each chunk is folded sequentially into its own
//! accumulator (chunks run in parallel), and chunk accumulators are merged in
//! frame order. The summation order therefore depends only on the frame range,
//! never on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use crate::correlator::CorrelationAccumulator;
use crate::error::{Error, Result};
use crate::optics::{ChannelSimulator, SpectralChannel};

pub const FRAME_CHUNK: u64 = 1024;

struct ChunkResult {
    acc: CorrelationAccumulator,
    /// Prefix states at snapshot points strictly inside the chunk.
    partials: Vec<CorrelationAccumulator>,
}

fn chunk_bounds(range: &Range<u64>) -> Vec<Range<u64>> {
    let mut out = Vec::new();
    let mut lo = range.start;
    while lo < range.end {
        let hi = ((lo / FRAME_CHUNK + 1) * FRAME_CHUNK).min(range.end);
        out.push(lo..hi);
        lo = hi;
    }
    out
}

fn run_chunk(
    sim: &ChannelSimulator<'_>,
    channel: SpectralChannel,
    chunk: Range<u64>,
    snapshots: &[u64],
) -> Result<ChunkResult> {
    let (w, h) = sim.dims();
    let mut acc = CorrelationAccumulator::for_channel(w, h, channel);
    let mut partials = Vec::new();
    let mut marks = snapshots
        .iter()
        .copied()
        .filter(|&b| b > chunk.start && b < chunk.end)
        .peekable();
    for i in chunk.clone() {
        acc.accumulate(&sim.frame(i)?)?;
        if marks.peek() == Some(&(i + 1)) {
            partials.push(acc.clone());
            marks.next();
        }
    }
    Ok(ChunkResult { acc, partials })
}

/// Accumulates frames `range` and returns the running state after each frame
/// count listed in `snapshots`. Snapshot counts are absolute frame indices,
/// must be strictly increasing and lie in `range.start + 1 ..= range.end`.
///
/// The snapshot at `b` is bit-identical to `accumulate_range(sim, range.start..b)`.
pub fn accumulate_snapshots(
    sim: &ChannelSimulator<'_>,
    channel: SpectralChannel,
    range: Range<u64>,
    snapshots: &[u64],
) -> Result<Vec<CorrelationAccumulator>> {
    if snapshots.windows(2).any(|w| w[0] >= w[1])
        || snapshots.iter().any(|&b| b <= range.start || b > range.end)
    {
        return Err(Error::InvalidParam(format!(
            "snapshot points {snapshots:?} must be strictly increasing within ({}, {}]",
            range.start, range.end
        )));
    }
    let (w, h) = sim.dims();
    let mut total = CorrelationAccumulator::for_channel(w, h, channel);
    let mut out = Vec::with_capacity(snapshots.len());
    let chunks = chunk_bounds(&range);
    let wave = (2 * rayon::current_num_threads()).max(4);
    for group in chunks.chunks(wave) {
        let results: Vec<Result<ChunkResult>> = group
            .par_iter()
            .map(|c| run_chunk(sim, channel, c.clone(), snapshots))
            .collect();
        for (bounds, res) in group.iter().zip(results) {
            let res = res?;
            for partial in &res.partials {
                out.push(total.merge(partial)?);
            }
            total.merge_from(&res.acc)?;
            if snapshots.contains(&bounds.end) {
                out.push(total.clone());
            }
        }
    }
    Ok(out)
}

/// Accumulates frames `range` of one channel.
pub fn accumulate_range(
    sim: &ChannelSimulator<'_>,
    channel: SpectralChannel,
    range: Range<u64>,
) -> Result<CorrelationAccumulator> {
    if range.is_empty() {
        let (w, h) = sim.dims();
        return Ok(CorrelationAccumulator::for_channel(w, h, channel));
    }
    let end = range.end;
    Ok(accumulate_snapshots(sim, channel, range, &[end])?
        .pop()
        .expect("one snapshot requested"))
}

/// Splits `0..n` into `count` contiguous, nearly equal shards and returns
/// shard `index`.
pub fn shard_range(n: u64, index: u64, count: u64) -> Result<Range<u64>> {
    if count == 0 || index >= count {
        return Err(Error::InvalidParam(format!(
            "shard {index}/{count} is not valid (need 0 <= index < count)"
        )));
    }
    let lo = n * index / count;
    let hi = n * (index + 1) / count;
    Ok(lo..hi)
}
