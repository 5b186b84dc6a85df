//! Big-endian bit streams over the base64url alphabet.
//!
//! TC strings are a sequence of 6-bit characters, so the reader works on
//! sextets directly. This accepts any segment length, including lengths that
//! a byte-oriented base64 decoder would reject.

use super::TcsError;

const ALPHABET: &[u8; 64] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

/// Maps a base64url character to its 6-bit value.
pub(crate) fn sextet(c: u8) -> Option<u8> {
    match c {
        b'A'..=b'Z' => Some(c - b'A'),
        b'a'..=b'z' => Some(c - b'a' + 26),
        b'0'..=b'9' => Some(c - b'0' + 52),
        b'-' => Some(62),
        b'_' => Some(63),
        _ => None,
    }
}

pub(crate) fn is_base64url(text: &str) -> bool {
    !text.is_empty() && text.bytes().all(|c| sextet(c).is_some())
}

pub(crate) struct BitReader {
    sextets: Vec<u8>,
    pos: usize,
}

impl BitReader {
    /// `offset` is the character offset of `segment` within the full string,
    /// used for error positions.
    pub(crate) fn new(segment: &str, offset: usize) -> Result<Self, TcsError> {
        let sextets = segment
            .bytes()
            .enumerate()
            .map(|(i, c)| {
                sextet(c).ok_or(TcsError::MalformedBase64 {
                    position: offset + i,
                    character: c as char,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { sextets, pos: 0 })
    }

    pub(crate) fn bit_len(&self) -> usize {
        self.sextets.len() * 6
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bit_len() - self.pos
    }

    fn bit(&self, index: usize) -> bool {
        let s = self.sextets[index / 6];
        (s >> (5 - index % 6)) & 1 == 1
    }

    pub(crate) fn read(&mut self, width: usize) -> Result<u64, TcsError> {
        debug_assert!(width <= 64);
        if self.remaining() < width {
            return Err(TcsError::TruncatedCore {
                needed: self.pos + width,
                available: self.bit_len(),
            });
        }
        let mut value = 0u64;
        for i in 0..width {
            value = (value << 1) | u64::from(self.bit(self.pos + i));
        }
        self.pos += width;
        Ok(value)
    }

    pub(crate) fn read_bool(&mut self) -> Result<bool, TcsError> {
        Ok(self.read(1)? == 1)
    }
}

#[derive(Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub(crate) fn write(&mut self, field: &'static str, value: u64, width: usize) -> Result<(), TcsError> {
        if width < 64 && value >> width != 0 {
            return Err(TcsError::FieldOverflow { field, value });
        }
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
        Ok(())
    }

    pub(crate) fn write_bool(&mut self, value: bool) {
        self.push_bit(value);
    }

    /// Zero-pads to a byte boundary and renders as unpadded base64url.
    pub(crate) fn finish(self) -> String {
        let bytes = self.bytes;
        let mut out = String::with_capacity(bytes.len() * 4 / 3 + 2);
        for chunk in bytes.chunks(3) {
            let mut buf = [0u8; 3];
            buf[..chunk.len()].copy_from_slice(chunk);
            let n = (u32::from(buf[0]) << 16) | (u32::from(buf[1]) << 8) | u32::from(buf[2]);
            let chars = chunk.len() + 1;
            for i in 0..chars {
                let idx = (n >> (18 - 6 * i)) & 0x3f;
                out.push(ALPHABET[idx as usize] as char);
            }
        }
        out
    }
}
