//! Execution strategies: serial and pipelined compression, and decompression
//! with a pool of decoding workers.

mod decode;
mod engine;
mod partition;
mod pingpong;

pub use decode::{decompress, DecompressOptions};
pub use engine::{compress, CompressOptions, CompressStats, Encoded, Observer, StepRecord};
pub use partition::{effective_workers, StreamPartition};
pub use pingpong::{PingPong, SlotState, Transition};

use std::time::Duration;

use crate::error::{FadeError, Result};

/// Throughputs in KB/min, with 1 KB = 1024 bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Throughput {
    pub compress: f64,
    pub decompress: f64,
    pub total: f64,
}

/// Combined throughput of two phases over the same input: twice the size
/// divided by the summed time, i.e. the harmonic mean of the two rates.
pub fn total_throughput(compress: f64, decompress: f64) -> f64 {
    2.0 * compress * decompress / (compress + decompress)
}

pub fn throughput_report(bytes: u64, compress: Duration, decompress: Duration) -> Result<Throughput> {
    if bytes == 0 {
        return Err(FadeError::Usage("throughput of an empty input is undefined".into()));
    }
    let (tc, td) = (compress.as_secs_f64() / 60.0, decompress.as_secs_f64() / 60.0);
    if tc <= 0.0 || td <= 0.0 {
        return Err(FadeError::Usage("throughput needs positive phase times".into()));
    }
    let kb = bytes as f64 / 1024.0;
    Ok(Throughput {
        compress: kb / tc,
        decompress: kb / td,
        total: 2.0 * kb / (tc + td),
    })
}
