//! Stream layout: a fixed 48-byte header, one length-prefixed coded section
//! for the side info, then one per latent slice. Integers are little-endian.
//!
//! The framing is what gets validated here — magic, section lengths, field
//! sanity. Whether the header agrees with the model it is being decoded
//! against is the transport driver's job, and bit flips *inside* a coded
//! section are beyond any range coder's power to detect; they decode to
//! different symbols, not to errors.

use crate::{BitsError, Result};

pub const STREAM_MAGIC: &[u8; 8] = b"RASC0001";

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    /// First 8 bytes of the SHA-256 of the checkpoint this was coded with.
    pub model_hash: [u8; 8],
    pub sample_rate: u32,
    pub n_samples: u64,
    /// Analysis frames; redundant with `n_samples` but cheap, and it lets a
    /// reader size buffers without re-deriving the framing.
    pub n_frames: u32,
    pub n_fft: u16,
    pub hop: u16,
    pub window_tag: u8,
    pub center: bool,
    /// Position on the training rate ladder; 0xFF means off-ladder.
    pub lambda_index: u8,
    pub lambda: f64,
    pub n_slices: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: StreamHeader,
    pub z_section: Vec<u8>,
    pub y_sections: Vec<Vec<u8>>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        debug_assert_eq!(self.y_sections.len(), h.n_slices as usize);
        let mut out = Vec::new();
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&h.model_hash);
        out.extend_from_slice(&h.sample_rate.to_le_bytes());
        out.extend_from_slice(&h.n_samples.to_le_bytes());
        out.extend_from_slice(&h.n_frames.to_le_bytes());
        out.extend_from_slice(&h.n_fft.to_le_bytes());
        out.extend_from_slice(&h.hop.to_le_bytes());
        out.push(h.window_tag);
        out.push(h.center as u8);
        out.push(h.lambda_index);
        out.extend_from_slice(&h.lambda.to_le_bytes());
        out.push(h.n_slices);
        for section in std::iter::once(&self.z_section).chain(&self.y_sections) {
            out.extend_from_slice(&(section.len() as u32).to_le_bytes());
            out.extend_from_slice(section);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(8)? != STREAM_MAGIC {
            return Err(BitsError::Format("not a coded speech stream (bad magic)".into()));
        }
        let mut model_hash = [0u8; 8];
        model_hash.copy_from_slice(cur.take(8)?);
        let sample_rate = cur.u32()?;
        let n_samples = cur.u64()?;
        let n_frames = cur.u32()?;
        let n_fft = cur.u16()?;
        let hop = cur.u16()?;
        let window_tag = cur.u8()?;
        let center = match cur.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(BitsError::Format(format!("center flag must be 0 or 1, got {other}")))
            }
        };
        let lambda_index = cur.u8()?;
        let lambda = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        if !lambda.is_finite() {
            return Err(BitsError::Format(format!("non-finite lambda {lambda} in header")));
        }
        let n_slices = cur.u8()?;
        if n_slices == 0 {
            return Err(BitsError::Format("header claims zero slices".into()));
        }
        let z_section = cur.section()?;
        let y_sections =
            (0..n_slices).map(|_| cur.section()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(BitsError::Format(format!(
                "{} trailing bytes after the last section",
                bytes.len() - cur.pos
            )));
        }
        Ok(Container {
            header: StreamHeader {
                model_hash,
                sample_rate,
                n_samples,
                n_frames,
                n_fft,
                hop,
                window_tag,
                center,
                lambda_index,
                lambda,
                n_slices,
            },
            z_section,
            y_sections,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(BitsError::Format(format!(
                "truncated stream: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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

    fn section(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}
