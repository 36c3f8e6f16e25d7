//! Register-bus transaction: record form and its 105-bit packed form.

use std::fmt;
use std::str::FromStr;

use super::bits::{Field, FieldLayout, PackedBits};
use super::CodecError;

static REG_FIELDS: [Field; 8] = [
    Field {
        name: "req",
        width: 1,
    },
    Field {
        name: "eop",
        width: 1,
    },
    Field {
        name: "addr",
        width: 32,
    },
    Field {
        name: "data",
        width: 32,
    },
    Field {
        name: "be",
        width: 4,
    },
    Field {
        name: "r_req",
        width: 1,
    },
    Field {
        name: "r_data",
        width: 32,
    },
    Field {
        name: "r_opc",
        width: 2,
    },
];

/// Packing order of [`RegPacket`], MSB first.
pub const REG_LAYOUT: FieldLayout = FieldLayout::new(&REG_FIELDS);

/// Width of a packed [`RegPacket`].
pub const REG_PACKED_WIDTH: u32 = 105;

/// Response opcode carried in `r_opc`. Values 2 and 3 are reserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RespOpcode {
    Ok = 0,
    Error = 1,
}

impl RespOpcode {
    pub fn from_bits(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Ok),
            1 => Some(Self::Error),
            _ => None,
        }
    }
}

/// A register-bus transaction.
///
/// Field widths: `req`, `eop`, `r_req` are 1 bit, `be` is 4, `r_opc` is 2,
/// the rest are 32. `be == 0` marks a read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RegPacket {
    pub req: bool,
    pub eop: bool,
    pub addr: u32,
    pub data: u32,
    pub be: u8,
    pub r_req: bool,
    pub r_data: u32,
    pub r_opc: u8,
}

impl RegPacket {
    pub fn write(addr: u32, data: u32, be: u8) -> Self {
        debug_assert!(be != 0 && be <= 0xf);
        Self {
            req: true,
            eop: true,
            addr,
            data,
            be,
            ..Self::default()
        }
    }

    pub fn read(addr: u32) -> Self {
        Self {
            req: true,
            eop: true,
            addr,
            ..Self::default()
        }
    }

    pub fn is_read(&self) -> bool {
        self.be == 0
    }

    pub fn is_write(&self) -> bool {
        self.be != 0
    }

    /// The request half with every response field cleared, as the driver
    /// sends it.
    pub fn request_only(&self) -> Self {
        Self {
            r_req: false,
            r_data: 0,
            r_opc: 0,
            ..*self
        }
    }

    pub fn with_response(mut self, r_data: u32, r_opc: RespOpcode) -> Self {
        self.r_req = true;
        self.r_data = r_data;
        self.r_opc = r_opc as u8;
        self
    }

    pub fn response_ok(&self) -> bool {
        self.r_opc == RespOpcode::Ok as u8
    }

    fn check_widths(&self) -> Result<(), CodecError> {
        if self.be > 0xf {
            return Err(CodecError::ValueOverflow {
                field: "be".into(),
                width: 4,
            });
        }
        if self.r_opc > 0x3 {
            return Err(CodecError::ValueOverflow {
                field: "r_opc".into(),
                width: 2,
            });
        }
        Ok(())
    }

    fn field_values(&self) -> [u64; 8] {
        [
            self.req as u64,
            self.eop as u64,
            self.addr as u64,
            self.data as u64,
            self.be as u64,
            self.r_req as u64,
            self.r_data as u64,
            self.r_opc as u64,
        ]
    }
}

/// Record to packed form.
pub fn pack_reg(p: &RegPacket) -> Result<PackedBits, CodecError> {
    p.check_widths()?;
    REG_LAYOUT.pack(&p.field_values())
}

/// Packed form back to a record. The input must be exactly 105 bits wide.
pub fn unpack_reg(bits: &PackedBits) -> Result<RegPacket, CodecError> {
    let v = REG_LAYOUT.unpack(bits)?;
    Ok(RegPacket {
        req: v[0] != 0,
        eop: v[1] != 0,
        addr: v[2] as u32,
        data: v[3] as u32,
        be: v[4] as u8,
        r_req: v[5] != 0,
        r_data: v[6] as u32,
        r_opc: v[7] as u8,
    })
}

/// Golden-vector line: `<fields> -> <27-digit hex>`, fields comma-separated
/// hex in layout order.
pub fn golden_line(p: &RegPacket) -> Result<String, CodecError> {
    let packed = pack_reg(p)?;
    Ok(format!("{p} -> {}", packed.to_hex()))
}

/// Parses a golden-vector line into the record and its expected packing.
pub fn parse_golden_line(line: &str) -> Result<(RegPacket, PackedBits), CodecError> {
    let (lhs, rhs) = line
        .split_once("->")
        .ok_or_else(|| CodecError::BadGolden(line.to_string()))?;
    let packet: RegPacket = lhs.trim().parse()?;
    let bits = PackedBits::from_hex(REG_PACKED_WIDTH, rhs.trim())?;
    Ok((packet, bits))
}

impl fmt::Display for RegPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:x},{:x},{:08x},{:08x},{:x},{:x},{:08x},{:x}",
            self.req as u8,
            self.eop as u8,
            self.addr,
            self.data,
            self.be,
            self.r_req as u8,
            self.r_data,
            self.r_opc
        )
    }
}

impl FromStr for RegPacket {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != REG_FIELDS.len() {
            return Err(CodecError::BadGolden(s.to_string()));
        }
        let mut vals = [0u64; 8];
        for (i, (part, field)) in parts.iter().zip(REG_FIELDS.iter()).enumerate() {
            let v =
                u64::from_str_radix(part, 16).map_err(|_| CodecError::BadHex(part.to_string()))?;
            if v >> field.width != 0 {
                return Err(CodecError::ValueOverflow {
                    field: field.name.into(),
                    width: field.width,
                });
            }
            vals[i] = v;
        }
        Ok(RegPacket {
            req: vals[0] != 0,
            eop: vals[1] != 0,
            addr: vals[2] as u32,
            data: vals[3] as u32,
            be: vals[4] as u8,
            r_req: vals[5] != 0,
            r_data: vals[6] as u32,
            r_opc: vals[7] as u8,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_105_bits() {
        assert_eq!(REG_LAYOUT.total_width(), REG_PACKED_WIDTH);
        assert_eq!(REG_LAYOUT.lsb_of("req"), Some(104));
        assert_eq!(REG_LAYOUT.lsb_of("eop"), Some(103));
        assert_eq!(REG_LAYOUT.lsb_of("addr"), Some(71));
        assert_eq!(REG_LAYOUT.lsb_of("data"), Some(39));
        assert_eq!(REG_LAYOUT.lsb_of("be"), Some(35));
        assert_eq!(REG_LAYOUT.lsb_of("r_req"), Some(34));
        assert_eq!(REG_LAYOUT.lsb_of("r_data"), Some(2));
        assert_eq!(REG_LAYOUT.lsb_of("r_opc"), Some(0));
    }

    #[test]
    fn zero_packet() {
        let b = pack_reg(&RegPacket::default()).unwrap();
        assert_eq!(b.width(), 105);
        assert_eq!(b.count_ones(), 0);
        assert_eq!(
            unpack_reg(&PackedBits::zeros(105)).unwrap(),
            RegPacket::default()
        );
    }

    #[test]
    fn req_only_sets_bit_104() {
        let p = RegPacket {
            req: true,
            ..Default::default()
        };
        let b = pack_reg(&p).unwrap();
        assert_eq!(b.count_ones(), 1);
        assert!(b.bit(104));
    }

    #[test]
    fn wrong_width_rejected() {
        assert!(matches!(
            unpack_reg(&PackedBits::zeros(104)),
            Err(CodecError::WidthMismatch {
                expected: 105,
                actual: 104
            })
        ));
    }

    #[test]
    fn oversized_fields_rejected() {
        let p = RegPacket {
            be: 0x10,
            ..Default::default()
        };
        assert!(pack_reg(&p).is_err());
        let p = RegPacket {
            r_opc: 4,
            ..Default::default()
        };
        assert!(pack_reg(&p).is_err());
    }

    #[test]
    fn golden_line_round_trip() {
        let p = RegPacket::write(0x10, 0xa5a5_a5a5, 0xf);
        let line = golden_line(&p).unwrap();
        let (q, bits) = parse_golden_line(&line).unwrap();
        assert_eq!(p, q);
        assert_eq!(bits, pack_reg(&p).unwrap());
    }
}
