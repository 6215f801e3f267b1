//! Self-describing on-disk format and the byte-level compress/decompress API.

mod format;

pub use format::{build_fingerprint, header_len, Container, Header, FORMAT_VERSION, MAGIC};

use std::fs;
use std::path::Path;

use log::warn;

use crate::cspp::{self, CompressOptions, CompressStats, DecompressOptions};
use crate::error::{FadeError, Result};
use crate::predictor::{ModelConfig, Variant};

/// Result of compressing a buffer.
#[derive(Clone, Debug)]
pub struct Compressed {
    pub bytes: Vec<u8>,
    pub header: Header,
    pub stats: CompressStats,
}

pub fn compress_bytes(
    data: &[u8],
    cfg: &ModelConfig,
    variant: Variant,
    opts: CompressOptions<'_>,
) -> Result<Compressed> {
    let enc = cspp::compress(data, cfg, variant, opts)?;
    let container = Container::new(data.len() as u64, enc.config, variant, enc.streams);
    let bytes = container.to_bytes()?;
    Ok(Compressed {
        bytes,
        header: container.header,
        stats: enc.stats,
    })
}

pub fn decompress_bytes(bytes: &[u8], opts: DecompressOptions<'_>) -> Result<Vec<u8>> {
    let container = Container::from_bytes(bytes)?;
    let h = &container.header;
    if h.fingerprint != build_fingerprint() {
        warn!(
            "container written by a different build ({:016x}, this build {:016x}); decoding may fail",
            h.fingerprint,
            build_fingerprint()
        );
    }
    let part = h.partition()?;
    let streams: Vec<&[u8]> = container.streams.iter().map(Vec::as_slice).collect();
    let out = cspp::decompress(&part, &h.config, h.variant, &streams, opts)?;
    debug_assert_eq!(out.len() as u64, h.original_length);
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FadeError::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FadeError::io(path, e))
}

/// Parses only the header of a container file.
pub fn inspect(bytes: &[u8]) -> Result<Header> {
    Ok(Container::from_bytes(bytes)?.header)
}

/// Original size over compressed size.
pub fn compression_ratio(original_length: u64, container_length: u64) -> Result<f64> {
    if container_length == 0 {
        return Err(FadeError::Usage("compressed size must be positive".into()));
    }
    Ok(original_length as f64 / container_length as f64)
}

/// Ranges used to normalize ratio and throughput before weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBounds {
    pub cr_min: f64,
    pub cr_max: f64,
    pub tp_min: f64,
    pub tp_max: f64,
}

/// `ω·norm(CR) + (1−ω)·norm(TP)` with min-max normalization.
pub fn weighted_score(cr: f64, tp: f64, b: ScoreBounds, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(FadeError::Usage(format!("weight {omega} outside [0, 1]")));
    }
    if b.cr_max <= b.cr_min || b.tp_max <= b.tp_min {
        return Err(FadeError::Usage("score bounds must have max > min".into()));
    }
    let ncr = (cr - b.cr_min) / (b.cr_max - b.cr_min);
    let ntp = (tp - b.tp_min) / (b.tp_max - b.tp_min);
    Ok(omega * ncr + (1.0 - omega) * ntp)
}
