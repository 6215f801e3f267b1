use crate::error::{FadeError, Result};

/// Split of a file into `batch` equal-length contiguous streams.
///
/// The tail of the last stream(s) is zero padding: padded positions feed the
/// model like any other symbol but are never coded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamPartition {
    original_length: u64,
    batch: usize,
    stream_len: usize,
}

impl StreamPartition {
    /// Chooses the stream count for `n` bytes: `requested` halved until every
    /// stream holds at least `time_steps` symbols, never below one.
    pub fn plan(n: u64, requested: usize, time_steps: usize) -> Result<Self> {
        if requested == 0 {
            return Err(FadeError::Config("batch must be at least 1".into()));
        }
        let mut batch = requested;
        while batch > 1 && (batch as u64) * (time_steps as u64) > n {
            batch /= 2;
        }
        Self::with_batch(n, batch)
    }

    /// Rebuilds the partition recorded in a container header.
    pub fn with_batch(n: u64, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(FadeError::Format("stream count of zero".into()));
        }
        let stream_len = usize::try_from(n.div_ceil(batch as u64))
            .map_err(|_| FadeError::Format(format!("input of {n} bytes is too large")))?;
        Ok(StreamPartition {
            original_length: n,
            batch,
            stream_len,
        })
    }

    pub fn original_length(&self) -> u64 {
        self.original_length
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Padded length shared by every stream.
    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    pub fn offset(&self, stream: usize) -> usize {
        stream * self.stream_len
    }

    /// Number of real (coded) symbols in `stream`.
    pub fn valid_len(&self, stream: usize) -> usize {
        (self.original_length as usize)
            .saturating_sub(self.offset(stream))
            .min(self.stream_len)
    }

    /// Total zero bytes appended across all streams.
    pub fn pad_len(&self) -> usize {
        self.batch * self.stream_len - self.original_length as usize
    }

    /// Symbol at position `t` of `stream`, zero inside the padding.
    pub fn symbol(&self, data: &[u8], stream: usize, t: usize) -> u8 {
        if t < self.valid_len(stream) {
            data[self.offset(stream) + t]
        } else {
            0
        }
    }
}

/// Largest divisor of `batch` that does not exceed `requested` workers.
pub fn effective_workers(batch: usize, requested: usize) -> usize {
    (1..=requested.clamp(1, batch.max(1)))
        .rev()
        .find(|w| batch.is_multiple_of(*w))
        .unwrap_or(1)
}
