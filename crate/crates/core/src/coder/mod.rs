//! Integer range coder driven by quantized model distributions.

mod freq;
mod range;

pub use freq::{quantize, FreqTable, PRECISION_BITS, TOTAL};
pub use range::{RangeDecoder, RangeEncoder, RENORM_THRESHOLD};

/// Codes `symbols` at the uniform table, as for a stream's first `T` bytes.
pub fn uniform_warmup_encode(enc: &mut RangeEncoder, symbols: &[u8]) {
    let ft = FreqTable::uniform();
    for &s in symbols {
        enc.encode(s, ft);
    }
}

pub fn uniform_warmup_decode(dec: &mut RangeDecoder<'_>, k: usize) -> crate::Result<Vec<u8>> {
    let ft = FreqTable::uniform();
    (0..k).map(|_| dec.decode(ft)).collect()
}
