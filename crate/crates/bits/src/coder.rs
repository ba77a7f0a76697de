//! Byte-oriented range coder with carry propagation handled by the classic
//! cache-and-run trick, plus a raw-bit bypass lane for escape payloads.
//!
//! Every frequency table shares one fixed total of 2^16, so narrowing the
//! interval costs a shift and a multiply, with at most a few bytes of
//! renormalization. The first output byte is always zero (the initial cache
//! flushes before any carry can reach it), and the decoder checks that as a
//! cheap format guard.

use crate::{BitsError, Result};

/// log2 of the shared frequency-table total.
pub const FREQ_BITS: u32 = 16;

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    /// Bytes (cache plus a run of 0xFF) still waiting for a carry decision.
    pending: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, pending: 1, out: Vec::new() }
    }

    /// Narrow the interval to the slice [cum, cum+freq) out of 2^16.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0);
        debug_assert!(cum.checked_add(freq).is_some_and(|end| end <= 1 << FREQ_BITS));
        let unit = self.range >> FREQ_BITS;
        self.low += unit as u64 * cum as u64;
        self.range = unit * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// One bit at probability 1/2, bypassing the table machinery.
    pub fn encode_raw_bit(&mut self, bit: bool) {
        self.range >>= 1;
        if bit {
            self.low += self.range as u64;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Unsigned value as an order-0 exponential Golomb code on the raw lane.
    pub fn encode_golomb(&mut self, v: u64) {
        debug_assert!(v < u64::MAX);
        let x = v + 1;
        let len = 64 - x.leading_zeros();
        for _ in 1..len {
            self.encode_raw_bit(false);
        }
        for i in (0..len).rev() {
            self.encode_raw_bit(x >> i & 1 == 1);
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            while self.pending > 0 {
                self.out.push(self.cache.wrapping_add(carry));
                self.cache = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low << 8) & 0xFFFF_FFFF;
    }

    /// Flush. The tail always carries five extra bytes so the decoder can
    /// renormalize freely while consuming the final symbols.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Result<Self> {
        if buf.len() < 5 {
            return Err(BitsError::Format(format!(
                "coded section is {} bytes; the coder never produces fewer than 5",
                buf.len()
            )));
        }
        if buf[0] != 0 {
            return Err(BitsError::Format(
                "coded section does not start with a zero byte".into(),
            ));
        }
        let code = u32::from_be_bytes([buf[1], buf[2], buf[3], buf[4]]);
        Ok(RangeDecoder { code, range: u32::MAX, buf, pos: 5 })
    }

    /// Where inside the 2^16-wide model the stream currently points. Look
    /// the symbol up in the table, then commit with [`decode_advance`].
    pub fn decode_target(&self) -> u32 {
        let unit = self.range >> FREQ_BITS;
        (self.code / unit).min((1 << FREQ_BITS) - 1)
    }

    pub fn decode_advance(&mut self, cum: u32, freq: u32) {
        let unit = self.range >> FREQ_BITS;
        self.code -= unit * cum;
        self.range = unit * freq;
        while self.range < TOP {
            self.code = self.code << 8 | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn decode_raw_bit(&mut self) -> bool {
        self.range >>= 1;
        let bit = self.code >= self.range;
        if bit {
            self.code -= self.range;
        }
        while self.range < TOP {
            self.code = self.code << 8 | self.next_byte() as u32;
            self.range <<= 8;
        }
        bit
    }

    pub fn decode_golomb(&mut self) -> Result<u64> {
        let mut extra = 0;
        while !self.decode_raw_bit() {
            extra += 1;
            if extra >= 64 {
                return Err(BitsError::Format("over-long varint in coded data".into()));
            }
        }
        let mut x = 1u64;
        for _ in 0..extra {
            x = x << 1 | self.decode_raw_bit() as u64;
        }
        Ok(x - 1)
    }

    fn next_byte(&mut self) -> u8 {
        // a well-formed stream ends in flush bytes; running past the end
        // only happens on garbage input, and zeros keep that path harmless
        let b = self.buf.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }
}
