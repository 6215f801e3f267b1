use std::sync::OnceLock;

use crate::error::{FadeError, Result};
use crate::nncore::Scalar;
use crate::predictor::ALPHABET;

pub const PRECISION_BITS: u32 = 16;
/// Sum of every frequency table.
pub const TOTAL: u32 = 1 << PRECISION_BITS;

/// Integer distribution over bytes with a fixed total of 65536.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqTable {
    freq: [u32; ALPHABET],
    cum: [u32; ALPHABET + 1],
}

impl FreqTable {
    /// Validates counts and builds the prefix sums.
    pub fn from_freqs(freq: [u32; ALPHABET]) -> Result<Self> {
        if freq.contains(&0) {
            return Err(FadeError::Usage("frequency table has a zero entry".into()));
        }
        let mut cum = [0u32; ALPHABET + 1];
        for (i, &f) in freq.iter().enumerate() {
            cum[i + 1] = cum[i] + f;
        }
        if cum[ALPHABET] != TOTAL {
            return Err(FadeError::Usage(format!(
                "frequency table sums to {}, expected {TOTAL}",
                cum[ALPHABET]
            )));
        }
        Ok(FreqTable { freq, cum })
    }

    pub fn uniform() -> &'static FreqTable {
        static UNIFORM: OnceLock<FreqTable> = OnceLock::new();
        UNIFORM.get_or_init(|| FreqTable::from_freqs([TOTAL / ALPHABET as u32; ALPHABET]).unwrap())
    }

    pub fn freq(&self, sym: u8) -> u32 {
        self.freq[sym as usize]
    }

    pub fn cum(&self, sym: u8) -> u32 {
        self.cum[sym as usize]
    }

    pub fn freqs(&self) -> &[u32; ALPHABET] {
        &self.freq
    }

    pub fn cums(&self) -> &[u32; ALPHABET + 1] {
        &self.cum
    }

    /// Symbol whose interval contains `target` (< TOTAL).
    pub fn lookup(&self, target: u32) -> u8 {
        (self.cum.partition_point(|&c| c <= target) - 1) as u8
    }

    /// Ideal code length of `sym` in bits.
    pub fn cost_bits(&self, sym: u8) -> f64 {
        PRECISION_BITS as f64 - (self.freq(sym) as f64).log2()
    }
}

/// Deterministic integer quantization of a distribution.
///
/// Floors `p·65536` after normalizing in f64, hands the deficit to the largest
/// remainders (lower index first on ties), then lifts zeros to 1, charging all
/// of them to the largest count (lowest index on ties).
pub fn quantize<F: Scalar>(probs: &[F]) -> Result<FreqTable> {
    if probs.len() != ALPHABET {
        return Err(FadeError::Dimension(format!("{} probabilities, expected {ALPHABET}", probs.len())));
    }
    let mut p = [0f64; ALPHABET];
    let mut sum = 0.0;
    for (dst, &src) in p.iter_mut().zip(probs) {
        let v = src.as_f64();
        if !v.is_finite() || v < 0.0 {
            return Err(FadeError::NonFinite("quantize"));
        }
        *dst = v;
        sum += v;
    }
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(FadeError::NonFinite("quantize"));
    }

    let scale = TOTAL as f64 / sum;
    let mut freq = [0u32; ALPHABET];
    let mut rem = [(0f64, 0usize); ALPHABET];
    let mut assigned = 0u32;
    for i in 0..ALPHABET {
        let x = p[i] * scale;
        let f = (x.floor() as u32).min(TOTAL);
        freq[i] = f;
        assigned += f;
        rem[i] = (x - f as f64, i);
    }
    // Floors can only undershoot; the excess case guards rounding in `scale`.
    if assigned < TOTAL {
        let deficit = (TOTAL - assigned) as usize;
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if deficit < ALPHABET {
            rem.select_nth_unstable_by(deficit, order);
        }
        for &(_, i) in &rem[..deficit.min(ALPHABET)] {
            freq[i] += 1;
        }
        if deficit > ALPHABET {
            freq[argmax(&freq)] += (deficit - ALPHABET) as u32;
        }
    } else {
        let mut excess = assigned - TOTAL;
        while excess > 0 {
            let i = argmax(&freq);
            let take = excess.min(freq[i] - 1);
            freq[i] -= take;
            excess -= take;
        }
    }

    // The largest count is at least TOTAL / 256 > 255, so it can pay for every zero.
    let zeros = freq.iter().filter(|&&f| f == 0).count() as u32;
    if zeros > 0 {
        let m = argmax(&freq);
        freq[m] -= zeros;
        freq.iter_mut().filter(|f| **f == 0).for_each(|f| *f = 1);
    }
    FreqTable::from_freqs(freq)
}

fn argmax(freq: &[u32; ALPHABET]) -> usize {
    let mut best = 0;
    for i in 1..ALPHABET {
        if freq[i] > freq[best] {
            best = i;
        }
    }
    best
}
