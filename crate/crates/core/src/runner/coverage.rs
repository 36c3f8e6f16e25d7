use std::fmt;

use crate::codec::{FrameTxn, RespOpcode};
use crate::vip::MonitoredTxn;

/// Fixed bin names in report order.
pub const BINS: [&str; 11] = [
    "addr_q0",
    "addr_q1",
    "addr_q2",
    "addr_q3",
    "dir_read",
    "dir_write",
    "opc_ok",
    "opc_error",
    "frame_small",
    "frame_medium",
    "frame_large",
];

/// Largest pixel count of a small frame.
pub const SMALL_FRAME_MAX: usize = 64;
/// Largest pixel count of a medium frame.
pub const MEDIUM_FRAME_MAX: usize = 256;

/// Hit counts for the eleven fixed bins.
///
/// Each register transaction hits one address-quadrant bin (`(addr >> 8) &
/// 3`), one direction bin and one response bin; each output frame hits one
/// size bin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageDb {
    hits: [u64; 11],
}

impl CoverageDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample_txn(&mut self, t: &MonitoredTxn) {
        let p = &t.pkt;
        self.hits[((p.addr >> 8) & 3) as usize] += 1;
        self.hits[if p.is_read() { 4 } else { 5 }] += 1;
        self.hits[if p.r_opc == RespOpcode::Ok as u8 {
            6
        } else {
            7
        }] += 1;
    }

    pub fn sample_frame(&mut self, f: &FrameTxn) {
        let n = f.pixels.len();
        let bin = if n <= SMALL_FRAME_MAX {
            8
        } else if n <= MEDIUM_FRAME_MAX {
            9
        } else {
            10
        };
        self.hits[bin] += 1;
    }

    pub fn hits(&self, bin: &str) -> Option<u64> {
        BINS.iter().position(|b| *b == bin).map(|i| self.hits[i])
    }

    pub fn total_hits(&self) -> u64 {
        self.hits.iter().sum()
    }

    pub fn bins_hit(&self) -> usize {
        self.hits.iter().filter(|&&h| h > 0).count()
    }

    /// Percentage of bins with at least one hit.
    pub fn percent(&self) -> f64 {
        100.0 * self.bins_hit() as f64 / BINS.len() as f64
    }

    pub fn merge(&mut self, other: &CoverageDb) {
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
    }
}

impl fmt::Display for CoverageDb {
    /// One `bin=hits` line per bin, then `coverage=<hit>/<total> <pct>%`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, h) in BINS.iter().zip(self.hits) {
            writeln!(f, "{b}={h}")?;
        }
        writeln!(
            f,
            "coverage={}/{} {:.1}%",
            self.bins_hit(),
            BINS.len(),
            self.percent()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::RegPacket;

    fn w(addr: u32) -> MonitoredTxn {
        MonitoredTxn {
            cycle: 0,
            pkt: RegPacket::write(addr, 0, 0xf).with_response(0, RespOpcode::Ok),
        }
    }

    #[test]
    fn empty_is_zero() {
        let c = CoverageDb::new();
        assert_eq!(c.bins_hit(), 0);
        assert_eq!(c.percent(), 0.0);
        assert!(c.to_string().ends_with("coverage=0/11 0.0%\n"));
    }

    #[test]
    fn four_quadrants() {
        let mut c = CoverageDb::new();
        for a in [0x000, 0x100, 0x200, 0x3FC] {
            c.sample_txn(&w(a));
        }
        for q in 0..4 {
            assert_eq!(c.hits(&format!("addr_q{q}")), Some(1));
        }
        assert_eq!(c.total_hits(), 12);
    }

    #[test]
    fn frame_classes() {
        let mut c = CoverageDb::new();
        for (w, h) in [(8, 8), (9, 8), (16, 16), (17, 16)] {
            c.sample_frame(&FrameTxn::new(0, w, h, vec![0; w as usize * h as usize]).unwrap());
        }
        assert_eq!(c.hits("frame_small"), Some(1));
        assert_eq!(c.hits("frame_medium"), Some(2));
        assert_eq!(c.hits("frame_large"), Some(1));
    }
}
