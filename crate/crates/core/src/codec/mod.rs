//! Transaction representations: field records on the testbench side and
//! fixed-width packed bit vectors on the link.

mod bits;
mod frame;
mod reg;

use thiserror::Error;

pub use bits::{BitReader, BitWriter, Field, FieldLayout, PackedBits};
pub(crate) use frame::encode_header;
pub use frame::{
    frame_from_words, frame_to_words, pack_frame_header, pack_pixel_word, unpack_frame_header,
    unpack_pixel_word, FrameHeader, FrameTxn, FRAME_HEADER_WIDTH, PIXEL_WORD_WIDTH,
};
pub use reg::{
    golden_line, pack_reg, parse_golden_line, unpack_reg, RegPacket, RespOpcode, REG_LAYOUT,
    REG_PACKED_WIDTH,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("packed width mismatch: expected {expected} bits, got {actual}")]
    WidthMismatch { expected: u32, actual: u32 },
    #[error("field `{field}` does not fit in {width} bits")]
    ValueOverflow { field: String, width: u32 },
    #[error("width {width} exceeds {max}-bit limit")]
    WidthTooLarge { width: u32, max: u32 },
    #[error("{width}-bit vector needs {expected} bytes, got {actual}")]
    ByteLength {
        width: u32,
        expected: usize,
        actual: usize,
    },
    #[error("nonzero pad bits")]
    NonZeroPadding,
    #[error("layout has {expected} fields, got {actual} values")]
    FieldCount { expected: usize, actual: usize },
    #[error("frame dimensions {width}x{height} must both be at least 1")]
    EmptyFrame { width: u16, height: u16 },
    #[error("frame integrity: expected {expected} pixels, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("bad hex `{0}`")]
    BadHex(String),
    #[error("malformed golden-vector line `{0}`")]
    BadGolden(String),
}
