//! Packing bit strings and small integers into capacity-sized payloads.

use alloc::vec::Vec;

use crate::bits::BitVector;
use crate::error::{Error, Result};
use crate::sim::Payload;

/// Number of `w`-bit chunks needed for `len` bits.
pub fn chunk_count(len: usize, w: usize) -> usize {
    len.div_ceil(w)
}

/// Splits `v` into `⌈len/w⌉` chunks; chunk `c` holds coordinates `c·w+1 ..`.
pub fn encode_bits(v: &BitVector, w: usize) -> Vec<Payload> {
    let mut out = Vec::with_capacity(chunk_count(v.len(), w));
    let mut start = 0;
    while start < v.len() {
        let width = w.min(v.len() - start);
        out.push(Payload::new(v.extract(start, width), width).expect("chunk fits its width"));
        start += width;
    }
    out
}

/// Inverse of [`encode_bits`].
pub fn decode_bits(chunks: &[Payload], len: usize, w: usize) -> Result<BitVector> {
    if chunks.len() != chunk_count(len, w) {
        return Err(Error::Dimension {
            expected: chunk_count(len, w),
            found: chunks.len(),
        });
    }
    let mut v = BitVector::zeros(len);
    for (c, p) in chunks.iter().enumerate() {
        let width = w.min(len - c * w);
        if p.len() != width {
            return Err(Error::Dimension {
                expected: width,
                found: p.len(),
            });
        }
        v.insert(c * w, width, p.value());
    }
    Ok(v)
}

/// Append-only bit stream cut into payload chunks at the end.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    words: Vec<u64>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends the low `width` bits of `value`.
    pub fn push(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        debug_assert!(width == 64 || value >> width == 0);
        for b in 0..width {
            if self.len.is_multiple_of(64) {
                self.words.push(0);
            }
            self.words[self.len / 64] |= ((value >> b) & 1) << (self.len % 64);
            self.len += 1;
        }
    }

    pub fn into_bits(self) -> BitVector {
        BitVector::from_words(self.words, self.len)
    }

    pub fn into_chunks(self, w: usize) -> Vec<Payload> {
        encode_bits(&self.into_bits(), w)
    }
}

/// Reads fixed-width fields back out of concatenated chunks.
#[derive(Clone, Debug)]
pub struct BitReader {
    bits: BitVector,
    pos: usize,
}

impl BitReader {
    pub fn new(chunks: &[Payload]) -> Self {
        let mut w = BitWriter::new();
        for p in chunks {
            w.push(p.value(), p.len());
        }
        Self {
            bits: w.into_bits(),
            pos: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn read(&mut self, width: usize) -> Result<u64> {
        if width > self.remaining() {
            return Err(Error::Protocol("bit stream ended early".into()));
        }
        let v = self.bits.extract(self.pos, width);
        self.pos += width;
        Ok(v)
    }
}

/// Packs `(value, width)` fields, low field first, into one payload.
pub fn pack(fields: &[(u64, usize)]) -> Result<Payload> {
    let total: usize = fields.iter().map(|f| f.1).sum();
    if total > 64 {
        return Err(Error::Capacity {
            len: total,
            capacity: 64,
        });
    }
    let mut v = 0u64;
    let mut off = 0;
    for &(x, width) in fields {
        if width < 64 && x >> width != 0 {
            return Err(Error::Capacity {
                len: 64 - x.leading_zeros() as usize,
                capacity: width,
            });
        }
        if width > 0 {
            v |= x << off;
        }
        off += width;
    }
    Payload::new(v, total.max(1))
}

/// Splits a payload produced by [`pack`].
pub fn unpack(p: Payload, widths: &[usize]) -> Vec<u64> {
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &width in widths {
        let x = if width == 64 {
            p.value()
        } else {
            (p.value() >> off) & ((1u64 << width) - 1)
        };
        out.push(x);
        off += width;
    }
    out
}
