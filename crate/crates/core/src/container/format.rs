use std::fmt;

use serde::Serialize;

use crate::cspp::StreamPartition;
use crate::error::{FadeError, Result};
use crate::predictor::{ModelConfig, Variant};

pub const MAGIC: [u8; 4] = *b"FADE";
pub const FORMAT_VERSION: u16 = 1;

/// Bytes before the per-stream length table.
const FIXED_PREFIX: usize = 4 + 2 + 8 + 7 * 4 + 4 * 8 + 8 + 4 + 8;

/// Header size for `batch` streams, both checksums included.
pub fn header_len(batch: usize) -> usize {
    FIXED_PREFIX + 8 * batch + 4 + 4
}

/// Identifies the compiler target and crate version that wrote a file.
/// Bit-exact decoding is only promised between identical builds.
pub fn build_fingerprint() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let parts = [
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS,
        if cfg!(target_feature = "fma") { "fma" } else { "-" },
        if cfg!(target_feature = "avx2") { "avx2" } else { "-" },
        if cfg!(target_feature = "avx512f") { "avx512f" } else { "-" },
    ];
    for p in parts {
        for &b in p.as_bytes().iter().chain(b"/") {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Everything needed to rebuild the encoder's model and stream split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header {
    pub version: u16,
    pub original_length: u64,
    pub config: ModelConfig,
    pub variant: Variant,
    pub fingerprint: u64,
    pub stream_lengths: Vec<u64>,
}

impl Header {
    pub fn partition(&self) -> Result<StreamPartition> {
        StreamPartition::with_batch(self.original_length, self.config.batch)
    }

    pub fn payload_len(&self) -> u64 {
        self.stream_lengths.iter().sum()
    }
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "format_version: {}", self.version)?;
        writeln!(f, "original_length: {}", self.original_length)?;
        writeln!(f, "variant: {}", self.variant.name())?;
        writeln!(f, "streams: {}", c.batch)?;
        writeln!(f, "time_steps: {}", c.time_steps)?;
        writeln!(f, "embed_dim: {}", c.embed_dim)?;
        writeln!(f, "cache_dim: {}", c.cache_dim)?;
        writeln!(f, "hgr_dim: {}", c.hgr_dim)?;
        writeln!(f, "fnr_dim: {}", c.fnr_dim)?;
        writeln!(f, "conv_kernel: {}", c.conv_kernel)?;
        writeln!(f, "lr: {}", c.lr)?;
        writeln!(f, "beta1: {}", c.beta1)?;
        writeln!(f, "beta2: {}", c.beta2)?;
        writeln!(f, "eps: {}", c.eps)?;
        writeln!(f, "seed: {}", c.seed)?;
        writeln!(f, "build_fingerprint: {:016x}", self.fingerprint)?;
        writeln!(f, "payload_bytes: {}", self.payload_len())?;
        write!(f, "header_bytes: {}", header_len(c.batch))
    }
}

/// A parsed or about-to-be-written container.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: Header,
    pub streams: Vec<Vec<u8>>,
}

fn u32_field(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| FadeError::Config(format!("{name} {v} does not fit the header")))
}

impl Container {
    pub fn new(original_length: u64, config: ModelConfig, variant: Variant, streams: Vec<Vec<u8>>) -> Self {
        let stream_lengths = streams.iter().map(|s| s.len() as u64).collect();
        Container {
            header: Header {
                version: FORMAT_VERSION,
                original_length,
                config,
                variant,
                fingerprint: build_fingerprint(),
                stream_lengths,
            },
            streams,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let c = &h.config;
        if h.stream_lengths.len() != c.batch || self.streams.len() != c.batch {
            return Err(FadeError::Format(format!(
                "{} streams for a batch of {}",
                self.streams.len(),
                c.batch
            )));
        }
        let mut out = Vec::with_capacity(header_len(c.batch) + h.payload_len() as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.extend_from_slice(&h.original_length.to_le_bytes());
        for (name, v) in [
            ("batch", c.batch),
            ("time_steps", c.time_steps),
            ("embed_dim", c.embed_dim),
            ("cache_dim", c.cache_dim),
            ("hgr_dim", c.hgr_dim),
            ("fnr_dim", c.fnr_dim),
            ("conv_kernel", c.conv_kernel),
        ] {
            out.extend_from_slice(&u32_field(name, v)?.to_le_bytes());
        }
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&h.variant.code().to_le_bytes());
        out.extend_from_slice(&h.fingerprint.to_le_bytes());
        for (s, &len) in self.streams.iter().zip(&h.stream_lengths) {
            if s.len() as u64 != len {
                return Err(FadeError::Format("stream length table out of date".into()));
            }
            out.extend_from_slice(&len.to_le_bytes());
        }
        let header_crc = crc32fast::hash(&out);
        out.extend_from_slice(&header_crc.to_le_bytes());
        let mut payload = crc32fast::Hasher::new();
        for s in &self.streams {
            payload.update(s);
        }
        out.extend_from_slice(&payload.finalize().to_le_bytes());
        for s in &self.streams {
            out.extend_from_slice(s);
        }
        Ok(out)
    }

    /// Parses and verifies a container: magic, version, both checksums and
    /// the model configuration are all checked before anything is decoded.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(FadeError::Format("not a FADE container (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(FadeError::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let original_length = r.u64()?;
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [batch, time_steps, embed_dim, cache_dim, hgr_dim, fnr_dim, conv_kernel] = dims;
        let mut reals = [0f64; 4];
        for v in &mut reals {
            *v = f64::from_bits(r.u64()?);
        }
        let [lr, beta1, beta2, eps] = reals;
        let seed = r.u64()?;
        let variant_code = r.u32()?;
        let fingerprint = r.u64()?;
        if batch == 0 || batch > (bytes.len() - r.pos) / 8 {
            return Err(FadeError::Format(format!("implausible stream count {batch}")));
        }
        let mut stream_lengths = Vec::with_capacity(batch);
        for _ in 0..batch {
            stream_lengths.push(r.u64()?);
        }
        let computed = crc32fast::hash(&bytes[..r.pos]);
        let stored = r.u32()?;
        if stored != computed {
            return Err(FadeError::Checksum {
                what: "header",
                stored,
                computed,
            });
        }
        let payload_crc = r.u32()?;
        let payload = &bytes[r.pos..];
        let expected: u64 = stream_lengths.iter().sum();
        if payload.len() as u64 != expected {
            return Err(FadeError::Format(format!(
                "payload is {} bytes, header lists {expected}",
                payload.len()
            )));
        }
        let computed = crc32fast::hash(payload);
        if payload_crc != computed {
            return Err(FadeError::Checksum {
                what: "payload",
                stored: payload_crc,
                computed,
            });
        }

        let config = ModelConfig {
            time_steps,
            embed_dim,
            cache_dim,
            hgr_dim,
            fnr_dim,
            batch,
            conv_kernel,
            lr,
            beta1,
            beta2,
            eps,
            seed,
            workers: 1,
        };
        config.validate().map_err(|e| FadeError::Format(format!("header configuration: {e}")))?;
        let variant = Variant::from_code(variant_code)?;
        let header = Header {
            version,
            original_length,
            config,
            variant,
            fingerprint,
            stream_lengths,
        };
        let part = header.partition()?;
        if original_length > 0 && part.valid_len(0) == 0 {
            return Err(FadeError::Format("stream layout does not cover the input".into()));
        }
        let mut streams = Vec::with_capacity(batch);
        let mut at = 0usize;
        for &len in &header.stream_lengths {
            streams.push(payload[at..at + len as usize].to_vec());
            at += len as usize;
        }
        Ok(Container { header, streams })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| FadeError::Format(format!("truncated header at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
