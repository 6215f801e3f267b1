use super::freq::{FreqTable, PRECISION_BITS};
use crate::error::{FadeError, Result};

/// Range is brought back to at least this value after every symbol.
pub const RENORM_THRESHOLD: u32 = 1 << 24;

/// Byte-oriented range encoder with carry propagation.
///
/// `low` keeps 33 bits so a carry out of the low 32 can ripple into the byte
/// held in `cache` and any run of pending 0xFF bytes behind it. The first byte
/// such a coder would emit is always zero and is left out of the stream.
#[derive(Clone, Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    started: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            started: false,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, sym: u8, ft: &FreqTable) {
        let r = self.range >> PRECISION_BITS;
        self.low += r as u64 * ft.cum(sym) as u64;
        self.range = r * ft.freq(sym);
        while self.range < RENORM_THRESHOLD {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > u32::MAX as u64 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn emit(&mut self, byte: u8) {
        if self.started {
            self.out.push(byte);
        } else {
            debug_assert_eq!(byte, 0);
            self.started = true;
        }
    }

    /// Bytes emitted so far, not counting what `finish` will add.
    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    /// Flushes the remaining state and returns the bitstream.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

/// Decoder for bitstreams produced by [`RangeEncoder`].
#[derive(Clone, Debug)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<Self> {
        let mut dec = RangeDecoder {
            code: 0,
            range: u32::MAX,
            buf,
            pos: 0,
        };
        for _ in 0..4 {
            dec.code = (dec.code << 8) | dec.next_byte()? as u32;
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or(FadeError::Exhausted { consumed: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, ft: &FreqTable) -> Result<u8> {
        let r = self.range >> PRECISION_BITS;
        let target = self.code / r;
        if target >= super::TOTAL {
            return Err(FadeError::Corruption {
                stream: 0,
                step: 0,
                detail: format!("code point outside the coding interval at byte {}", self.pos),
            });
        }
        let sym = ft.lookup(target);
        self.code -= r * ft.cum(sym);
        self.range = r * ft.freq(sym);
        while self.range < RENORM_THRESHOLD {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(sym)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    /// Fails unless every byte of the stream has been read.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FadeError::Corruption {
                stream: 0,
                step: 0,
                detail: format!("{} trailing bytes after the last symbol", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}
