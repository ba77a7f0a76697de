//! Integer frequency tables. The continuous densities the model predicts
//! are quantized onto a shared 2^16 grid by largest-remainder rounding with
//! a floor of one, so every symbol a table names stays codable. A table is
//! a pure function of its weights: both sides of a stream rebuild it
//! independently and agree exactly.

use rasc_codec::{gaussian_pmf, FzChannel, SIGMA_MIN};

use crate::coder::{RangeDecoder, RangeEncoder};
use crate::{BitsError, Result};

/// Shared denominator of every frequency table.
pub const TABLE_TOTAL: u32 = 1 << 16;

/// Weight handed to the escape slot when the window already covers
/// everything; keeps the slot codable without costing the rest anything.
const ESCAPE_FLOOR: f64 = 1e-9;

/// Cumulative frequencies over a finite alphabet, summing to exactly
/// [`TABLE_TOTAL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    /// cum[s] = total frequency before symbol s; cum[n_symbols] = 2^16.
    cum: Vec<u32>,
}

impl CdfTable {
    /// Largest-remainder quantization of nonnegative weights, deterministic
    /// ties broken toward the lower index, every slot floored at one.
    pub fn from_weights(weights: &[f64]) -> Result<CdfTable> {
        let n = weights.len();
        if n == 0 {
            return Err(BitsError::Format("frequency table needs at least one symbol".into()));
        }
        if n > TABLE_TOTAL as usize / 2 {
            return Err(BitsError::Format(format!(
                "alphabet of {n} symbols is too large for a 2^16 table"
            )));
        }
        let mut sum = 0.0;
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(BitsError::Format(format!("bad table weight {w}")));
            }
            sum += w;
        }
        if !(sum > 0.0) {
            return Err(BitsError::Format("table weights sum to zero".into()));
        }

        let mut freq: Vec<u32> = Vec::with_capacity(n);
        let mut frac: Vec<(usize, f64)> = Vec::with_capacity(n);
        let mut assigned: u64 = 0;
        for (i, &w) in weights.iter().enumerate() {
            let raw = w / sum * TABLE_TOTAL as f64;
            let base = raw.floor();
            freq.push(base as u32);
            assigned += base as u64;
            frac.push((i, raw - base));
        }
        let leftover = (TABLE_TOTAL as u64).saturating_sub(assigned) as usize;
        assert!(leftover <= n, "floors cannot under-assign by more than one each");
        frac.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(i, _) in frac.iter().take(leftover) {
            freq[i] += 1;
        }

        // no slot may starve; feed zeros from whichever slot is fattest
        for i in 0..n {
            if freq[i] == 0 {
                let donor = (0..n).max_by_key(|&j| freq[j]).unwrap();
                debug_assert!(freq[donor] >= 2);
                freq[donor] -= 1;
                freq[i] = 1;
            }
        }

        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in &freq {
            acc += f;
            cum.push(acc);
        }
        debug_assert_eq!(acc, TABLE_TOTAL);
        Ok(CdfTable { cum })
    }

    pub fn n_symbols(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn freq(&self, s: usize) -> u32 {
        self.cum[s + 1] - self.cum[s]
    }

    pub fn cum(&self, s: usize) -> u32 {
        self.cum[s]
    }

    /// Symbol whose frequency slice covers `target` (strictly increasing
    /// cumulative, so a plain binary search).
    pub fn lookup(&self, target: u32) -> usize {
        self.cum.partition_point(|&c| c <= target) - 1
    }

    /// Ideal code length of `s` under this table, in bits.
    pub fn cost_bits(&self, s: usize) -> f64 {
        FREQ_BITS_F - (self.freq(s) as f64).log2()
    }

    pub fn encode(&self, enc: &mut RangeEncoder, s: usize) {
        enc.encode(self.cum(s), self.freq(s));
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> usize {
        let s = self.lookup(dec.decode_target());
        dec.decode_advance(self.cum(s), self.freq(s));
        s
    }
}

const FREQ_BITS_F: f64 = 16.0;

/// Raw-bit length of the order-0 Golomb code for `v`.
pub fn golomb_bits(v: u64) -> u32 {
    2 * (64 - (v + 1).leading_zeros()) - 1
}

/// Table over the integers in [lo, hi] plus one escape slot covering
/// everything outside. Escaped values append a side bit (below/above) and
/// the excess distance as raw Golomb bits, so no integer is uncodable no
/// matter how badly the model mispredicts.
#[derive(Debug, Clone)]
pub struct WindowTable {
    lo: i64,
    hi: i64,
    cdf: CdfTable,
}

impl WindowTable {
    /// `inside` holds one weight per integer of [lo, hi]; the escape slot
    /// takes whatever probability mass those leave uncovered.
    pub fn new(lo: i64, hi: i64, inside: &[f64]) -> Result<WindowTable> {
        if lo > hi || inside.len() != (hi - lo + 1) as usize {
            return Err(BitsError::Format(format!(
                "window [{lo}, {hi}] with {} weights",
                inside.len()
            )));
        }
        let mut w = inside.to_vec();
        let mass: f64 = w.iter().sum();
        w.push((1.0 - mass).max(ESCAPE_FLOOR));
        Ok(WindowTable { lo, hi, cdf: CdfTable::from_weights(&w)? })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn escapes(&self, n: i64) -> bool {
        n < self.lo || n > self.hi
    }

    /// Exact price of coding `n`, in bits (escape payload included).
    pub fn cost_bits(&self, n: i64) -> f64 {
        if self.escapes(n) {
            let esc = self.cdf.n_symbols() - 1;
            self.cdf.cost_bits(esc) + 1.0 + golomb_bits(self.excess(n)) as f64
        } else {
            self.cdf.cost_bits((n - self.lo) as usize)
        }
    }

    pub fn encode(&self, enc: &mut RangeEncoder, n: i64) {
        if self.escapes(n) {
            let esc = self.cdf.n_symbols() - 1;
            self.cdf.encode(enc, esc);
            enc.encode_raw_bit(n < self.lo);
            enc.encode_golomb(self.excess(n));
        } else {
            self.cdf.encode(enc, (n - self.lo) as usize);
        }
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<i64> {
        let s = self.cdf.decode(dec);
        if s + 1 == self.cdf.n_symbols() {
            let below = dec.decode_raw_bit();
            let excess = dec.decode_golomb()? as i128;
            let v = if below {
                self.lo as i128 - 1 - excess
            } else {
                self.hi as i128 + 1 + excess
            };
            i64::try_from(v)
                .map_err(|_| BitsError::Format("escaped symbol outside the integer range".into()))
        } else {
            Ok(self.lo + s as i64)
        }
    }

    fn excess(&self, n: i64) -> u64 {
        let d = if n < self.lo {
            self.lo as i128 - 1 - n as i128
        } else {
            n as i128 - self.hi as i128 - 1
        };
        d as u64
    }
}

/// Coding window for a unit-grid gaussian residual: six sigmas out, capped
/// at ±64 — beyond that the per-symbol mass is far below table resolution.
pub fn gaussian_window(sigma: f64) -> Result<WindowTable> {
    let a = (6.0 * sigma).ceil().clamp(1.0, 64.0) as i64;
    let w: Vec<f64> = (-a..=a).map(|n| gaussian_pmf(n, 0.0, sigma)).collect();
    WindowTable::new(-a, a, &w)
}

/// Coding window for one side-info channel: grow outward from the density's
/// median until each open tail drops below the table resolution (or a hard
/// cap); the escape slot absorbs whatever is left out there.
pub fn z_window(ch: &FzChannel) -> Result<WindowTable> {
    const CAP: i64 = 4096;
    let tail = (TABLE_TOTAL as f64).recip();
    let center = ch.median().round().clamp(-1e6, 1e6) as i64;
    let mut lo = center;
    let mut hi = center;
    while center - lo < CAP && ch.cdf(lo as f64 - 0.5) > tail {
        lo -= 1;
    }
    while hi - center < CAP && 1.0 - ch.cdf(hi as f64 + 0.5) > tail {
        hi += 1;
    }
    let w: Vec<f64> = (lo..=hi).map(|n| ch.pmf(n)).collect();
    WindowTable::new(lo, hi, &w)
}

pub const SCALE_LEVELS: usize = 64;
pub const SCALE_SIGMA_MAX: f64 = 256.0;

/// Predicted scales snap *up* to a fixed log-spaced grid (neighbors ≈13%
/// apart) so both sides code against one of 64 precomputed tables instead
/// of building a fresh table per element. Rounding up is the safe side: a
/// slightly wide gaussian wastes a fraction of a bit, a slightly narrow one
/// would send real tails through the expensive escape path.
pub struct ScaleGrid {
    sigmas: Vec<f64>,
    windows: Vec<WindowTable>,
}

impl ScaleGrid {
    pub fn new() -> Result<ScaleGrid> {
        let step = (SCALE_SIGMA_MAX / SIGMA_MIN).ln() / (SCALE_LEVELS - 1) as f64;
        let sigmas: Vec<f64> =
            (0..SCALE_LEVELS).map(|j| SIGMA_MIN * (step * j as f64).exp()).collect();
        let windows = sigmas.iter().map(|&s| gaussian_window(s)).collect::<Result<_>>()?;
        Ok(ScaleGrid { sigmas, windows })
    }

    /// Smallest grid scale at least as wide as the prediction.
    pub fn level(&self, sigma: f64) -> usize {
        self.sigmas.iter().position(|&s| s >= sigma).unwrap_or(SCALE_LEVELS - 1)
    }

    pub fn sigma(&self, level: usize) -> f64 {
        self.sigmas[level]
    }

    pub fn window(&self, level: usize) -> &WindowTable {
        &self.windows[level]
    }
}
