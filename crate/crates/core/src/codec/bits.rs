//! Fixed-width bit vectors and MSB-first field layouts.
//!
//! [`PackedBits`] stores its value as bytes, most-significant bit first, with
//! the unused low-order bits of the final byte held at zero. That is the same
//! layout the link puts on the wire, so a payload never needs re-packing
//! between the codec and the framing layer.

use std::fmt;

use super::CodecError;

/// A fixed-width bit vector, most-significant bit first.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct PackedBits {
    width: u32,
    bytes: Vec<u8>,
}

impl PackedBits {
    pub fn zeros(width: u32) -> Self {
        Self {
            width,
            bytes: vec![0; byte_len(width)],
        }
    }

    pub fn empty() -> Self {
        Self::zeros(0)
    }

    /// Wraps wire bytes. The byte count must be exactly `ceil(width / 8)` and
    /// the pad bits of the last byte must be zero.
    pub fn from_bytes(width: u32, bytes: Vec<u8>) -> Result<Self, CodecError> {
        if bytes.len() != byte_len(width) {
            return Err(CodecError::ByteLength {
                width,
                expected: byte_len(width),
                actual: bytes.len(),
            });
        }
        let pad = pad_bits(width);
        if pad > 0 {
            let last = *bytes.last().expect("non-empty for nonzero pad");
            if last & ((1u8 << pad) - 1) != 0 {
                return Err(CodecError::NonZeroPadding);
            }
        }
        Ok(Self { width, bytes })
    }

    /// Builds a vector from the low `width` bits of `value`. Higher bits are
    /// an error.
    pub fn from_u128(width: u32, value: u128) -> Result<Self, CodecError> {
        if width > 128 {
            return Err(CodecError::WidthTooLarge { width, max: 128 });
        }
        if width < 128 && value >> width != 0 {
            return Err(CodecError::ValueOverflow {
                field: "value".into(),
                width,
            });
        }
        let mut out = Self::zeros(width);
        let mut remaining = width;
        let mut pos = 0;
        while remaining > 0 {
            let chunk = remaining.min(64);
            let shift = remaining - chunk;
            let part = (value >> shift) as u64 & mask64(chunk);
            out.write_msb(pos, chunk, part);
            pos += chunk;
            remaining -= chunk;
        }
        Ok(out)
    }

    pub fn to_u128(&self) -> Result<u128, CodecError> {
        if self.width > 128 {
            return Err(CodecError::WidthTooLarge {
                width: self.width,
                max: 128,
            });
        }
        let mut value = 0u128;
        let mut pos = 0;
        while pos < self.width {
            let chunk = (self.width - pos).min(64);
            value = (value << chunk) | self.read_msb(pos, chunk) as u128;
            pos += chunk;
        }
        Ok(value)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Value bit `pos`, where 0 is the least-significant bit.
    pub fn bit(&self, pos: u32) -> bool {
        assert!(
            pos < self.width,
            "bit {pos} out of range for width {}",
            self.width
        );
        self.read_msb(self.width - 1 - pos, 1) == 1
    }

    /// Reads `width` bits whose least-significant bit sits at value position
    /// `lsb`.
    pub fn field(&self, lsb: u32, width: u32) -> u64 {
        assert!(width <= 64 && lsb + width <= self.width);
        if width == 0 {
            return 0;
        }
        self.read_msb(self.width - lsb - width, width)
    }

    pub fn set_field(&mut self, lsb: u32, width: u32, value: u64) {
        assert!(width <= 64 && lsb + width <= self.width);
        assert!(value & !mask64(width) == 0, "value wider than field");
        if width == 0 {
            return;
        }
        self.write_msb(self.width - lsb - width, width, value);
    }

    /// Count of set bits, handy for isolation checks.
    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    /// Bitwise XOR of two equal-width vectors.
    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.width, other.width);
        Self {
            width: self.width,
            bytes: self
                .bytes
                .iter()
                .zip(&other.bytes)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    /// Value as big-endian hex, `ceil(width / 4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.width.div_ceil(4);
        let mut out = String::with_capacity(digits as usize);
        for d in (0..digits).rev() {
            let lsb = d * 4;
            let w = (self.width - lsb).min(4);
            let nibble = self.field(lsb, w);
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    /// Parses `to_hex` output back into a vector of the given width.
    pub fn from_hex(width: u32, hex: &str) -> Result<Self, CodecError> {
        let hex = hex.trim().trim_start_matches("0x");
        let mut out = Self::zeros(width);
        let digits: Vec<u32> = hex
            .chars()
            .map(|c| c.to_digit(16).ok_or(CodecError::BadHex(hex.to_string())))
            .collect::<Result<_, _>>()?;
        for (i, d) in digits.iter().rev().enumerate() {
            let lsb = i as u32 * 4;
            if *d == 0 {
                continue;
            }
            if lsb >= width || (width - lsb < 4 && (*d as u64) >> (width - lsb) != 0) {
                return Err(CodecError::ValueOverflow {
                    field: "hex".into(),
                    width,
                });
            }
            let w = (width - lsb).min(4);
            out.set_field(lsb, w, *d as u64);
        }
        Ok(out)
    }

    // `start` counts from the most-significant end.
    /// Byte-sized steps: each takes the bits from position `i` up to the
    /// end of its byte or of the field, whichever comes first.
    fn read_msb(&self, start: u32, width: u32) -> u64 {
        let mut value = 0u64;
        let (mut i, end) = (start, start + width);
        while i < end {
            let off = i % 8;
            let n = (8 - off).min(end - i);
            let byte = self.bytes[(i / 8) as usize] as u64;
            value = (value << n) | ((byte >> (8 - off - n)) & mask64(n));
            i += n;
        }
        value
    }

    fn write_msb(&mut self, start: u32, width: u32, value: u64) {
        let (mut i, end) = (start, start + width);
        while i < end {
            let off = i % 8;
            let n = (8 - off).min(end - i);
            let chunk = ((value >> (end - i - n)) & mask64(n)) as u8;
            let shift = 8 - off - n;
            let m = (mask64(n) as u8) << shift;
            let byte = &mut self.bytes[(i / 8) as usize];
            *byte = (*byte & !m) | (chunk << shift);
            i += n;
        }
    }
}

impl fmt::Debug for PackedBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PackedBits({}'h{})", self.width, self.to_hex())
    }
}

pub(crate) fn byte_len(width: u32) -> usize {
    width.div_ceil(8) as usize
}

fn pad_bits(width: u32) -> u32 {
    (8 - width % 8) % 8
}

pub(crate) fn mask64(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Appends fields most-significant first.
#[derive(Debug)]
pub struct BitWriter {
    out: PackedBits,
    pos: u32,
}

impl BitWriter {
    pub fn new(width: u32) -> Self {
        Self {
            out: PackedBits::zeros(width),
            pos: 0,
        }
    }

    pub fn push(&mut self, value: u64, width: u32) -> &mut Self {
        assert!(self.pos + width <= self.out.width, "writer overrun");
        self.out.write_msb(self.pos, width, value & mask64(width));
        self.pos += width;
        self
    }

    pub fn finish(self) -> PackedBits {
        assert_eq!(self.pos, self.out.width, "writer not filled");
        self.out
    }
}

/// Consumes fields most-significant first.
#[derive(Debug)]
pub struct BitReader<'a> {
    bits: &'a PackedBits,
    pos: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a PackedBits) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn take(&mut self, width: u32) -> u64 {
        assert!(self.pos + width <= self.bits.width, "reader overrun");
        let v = self.bits.read_msb(self.pos, width);
        self.pos += width;
        v
    }
}

/// One named field of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    pub name: &'static str,
    pub width: u32,
}

/// An ordered field list. Declaration order is packing order, MSB first.
#[derive(Debug, Clone, Copy)]
pub struct FieldLayout {
    fields: &'static [Field],
}

impl FieldLayout {
    pub const fn new(fields: &'static [Field]) -> Self {
        Self { fields }
    }

    pub fn fields(&self) -> &'static [Field] {
        self.fields
    }

    pub fn total_width(&self) -> u32 {
        self.fields.iter().map(|f| f.width).sum()
    }

    /// Value position of the field's least-significant bit.
    pub fn lsb_of(&self, name: &str) -> Option<u32> {
        let mut lsb = self.total_width();
        for f in self.fields {
            lsb -= f.width;
            if f.name == name {
                return Some(lsb);
            }
        }
        None
    }

    pub fn width_of(&self, name: &str) -> Option<u32> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.width)
    }

    /// Packs one value per field, in layout order.
    pub fn pack(&self, values: &[u64]) -> Result<PackedBits, CodecError> {
        if values.len() != self.fields.len() {
            return Err(CodecError::FieldCount {
                expected: self.fields.len(),
                actual: values.len(),
            });
        }
        let mut w = BitWriter::new(self.total_width());
        for (f, &v) in self.fields.iter().zip(values) {
            if v & !mask64(f.width) != 0 {
                return Err(CodecError::ValueOverflow {
                    field: f.name.into(),
                    width: f.width,
                });
            }
            w.push(v, f.width);
        }
        Ok(w.finish())
    }

    pub fn unpack(&self, bits: &PackedBits) -> Result<Vec<u64>, CodecError> {
        if bits.width() != self.total_width() {
            return Err(CodecError::WidthMismatch {
                expected: self.total_width(),
                actual: bits.width(),
            });
        }
        let mut r = BitReader::new(bits);
        Ok(self.fields.iter().map(|f| r.take(f.width)).collect())
    }
}
