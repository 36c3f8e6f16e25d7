//! Video frame transaction and its streaming word format.
//!
//! A frame crosses the link as one 48-bit header word
//! (`frame_id`, `width`, `height`, MSB first) followed by
//! `ceil(width * height / 2)` 32-bit pixel words. Each pixel word carries two
//! consecutive pixels, the earlier one in the high half; an odd trailing
//! pixel leaves the low half zero.

use super::bits::{BitReader, BitWriter, PackedBits};
use super::CodecError;

pub const FRAME_HEADER_WIDTH: u32 = 48;
pub const PIXEL_WORD_WIDTH: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameTxn {
    pub frame_id: u16,
    pub width: u16,
    pub height: u16,
    /// Row-major samples, `width * height` of them.
    pub pixels: Vec<u16>,
}

/// Header fields without the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_id: u16,
    pub width: u16,
    pub height: u16,
}

impl FrameHeader {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn word_count(&self) -> usize {
        self.pixel_count().div_ceil(2)
    }
}

impl FrameTxn {
    pub fn new(
        frame_id: u16,
        width: u16,
        height: u16,
        pixels: Vec<u16>,
    ) -> Result<Self, CodecError> {
        let f = Self {
            frame_id,
            width,
            height,
            pixels,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.width == 0 || self.height == 0 {
            return Err(CodecError::EmptyFrame {
                width: self.width,
                height: self.height,
            });
        }
        let expected = self.width as usize * self.height as usize;
        if self.pixels.len() != expected {
            return Err(CodecError::PixelCount {
                expected,
                actual: self.pixels.len(),
            });
        }
        Ok(())
    }

    pub fn header(&self) -> FrameHeader {
        FrameHeader {
            frame_id: self.frame_id,
            width: self.width,
            height: self.height,
        }
    }
}

pub fn pack_frame_header(f: &FrameTxn) -> Result<PackedBits, CodecError> {
    if f.width == 0 || f.height == 0 {
        return Err(CodecError::EmptyFrame {
            width: f.width,
            height: f.height,
        });
    }
    Ok(encode_header(&f.header()))
}

pub(crate) fn encode_header(h: &FrameHeader) -> PackedBits {
    let mut w = BitWriter::new(FRAME_HEADER_WIDTH);
    w.push(h.frame_id as u64, 16)
        .push(h.width as u64, 16)
        .push(h.height as u64, 16);
    w.finish()
}

pub fn unpack_frame_header(bits: &PackedBits) -> Result<FrameHeader, CodecError> {
    if bits.width() != FRAME_HEADER_WIDTH {
        return Err(CodecError::WidthMismatch {
            expected: FRAME_HEADER_WIDTH,
            actual: bits.width(),
        });
    }
    let mut r = BitReader::new(bits);
    let h = FrameHeader {
        frame_id: r.take(16) as u16,
        width: r.take(16) as u16,
        height: r.take(16) as u16,
    };
    if h.width == 0 || h.height == 0 {
        return Err(CodecError::EmptyFrame {
            width: h.width,
            height: h.height,
        });
    }
    Ok(h)
}

/// Two pixels in one word; `second` is `None` for an odd trailing pixel.
pub fn pack_pixel_word(first: u16, second: Option<u16>) -> PackedBits {
    let mut w = BitWriter::new(PIXEL_WORD_WIDTH);
    w.push(first as u64, 16)
        .push(second.unwrap_or(0) as u64, 16);
    w.finish()
}

pub fn unpack_pixel_word(bits: &PackedBits) -> Result<(u16, u16), CodecError> {
    if bits.width() != PIXEL_WORD_WIDTH {
        return Err(CodecError::WidthMismatch {
            expected: PIXEL_WORD_WIDTH,
            actual: bits.width(),
        });
    }
    let mut r = BitReader::new(bits);
    Ok((r.take(16) as u16, r.take(16) as u16))
}

/// Header word plus all pixel words for a frame.
pub fn frame_to_words(f: &FrameTxn) -> Result<(PackedBits, Vec<PackedBits>), CodecError> {
    f.validate()?;
    let header = pack_frame_header(f)?;
    let words = f
        .pixels
        .chunks(2)
        .map(|c| pack_pixel_word(c[0], c.get(1).copied()))
        .collect();
    Ok((header, words))
}

/// Reassembles a frame. The word count must match the header and an odd
/// frame's pad half must be zero.
pub fn frame_from_words(header: &PackedBits, words: &[PackedBits]) -> Result<FrameTxn, CodecError> {
    let h = unpack_frame_header(header)?;
    if words.len() != h.word_count() {
        return Err(CodecError::PixelCount {
            expected: h.word_count() * 2,
            actual: words.len() * 2,
        });
    }
    let mut pixels = Vec::with_capacity(h.pixel_count());
    for w in words {
        let (a, b) = unpack_pixel_word(w)?;
        pixels.push(a);
        pixels.push(b);
    }
    if pixels.len() > h.pixel_count() && pixels.pop() != Some(0) {
        return Err(CodecError::NonZeroPadding);
    }
    FrameTxn::new(h.frame_id, h.width, h.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_one_frame() {
        let f = FrameTxn::new(1, 2, 1, vec![3, 7]).unwrap();
        let (h, words) = frame_to_words(&f).unwrap();
        assert_eq!(h.to_u128().unwrap(), 0x0001_0002_0001);
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].to_u128().unwrap(), 0x0003_0007);
    }

    #[test]
    fn odd_pixel_is_padded() {
        let f = FrameTxn::new(0, 1, 1, vec![9]).unwrap();
        let (_, words) = frame_to_words(&f).unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].to_u128().unwrap(), 0x0009_0000);
    }

    #[test]
    fn degenerate_frames_rejected() {
        let f = FrameTxn {
            frame_id: 0,
            width: 0,
            height: 5,
            pixels: vec![],
        };
        assert!(matches!(
            pack_frame_header(&f),
            Err(CodecError::EmptyFrame { .. })
        ));
        assert!(FrameTxn::new(0, 2, 2, vec![1, 2, 3]).is_err());
    }

    #[test]
    fn word_count_mismatch_is_integrity_error() {
        let f = FrameTxn::new(4, 3, 1, vec![1, 2, 3]).unwrap();
        let (h, words) = frame_to_words(&f).unwrap();
        assert_eq!(frame_from_words(&h, &words).unwrap(), f);
        assert!(frame_from_words(&h, &words[..1]).is_err());
    }
}
