use crate::codec::RespOpcode;
use crate::kernel::{Kernel, ModelFault, ProcessIo, SimError};

use super::bus::{BusRequest, BusSlave, RegBusPins, RegTarget};

pub const REGFILE_WORDS: usize = 256;

/// Injected misbehavior for error-path tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegFileFault {
    #[default]
    None,
    /// Unmapped addresses get no response at all.
    Unresponsive,
    /// An `r_req` pulse with no preceding request, driven at this cycle.
    SpuriousResponse { at_cycle: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegFileConfig {
    pub base: u32,
    pub response_latency: u32,
    pub fault: RegFileFault,
}

impl Default for RegFileConfig {
    fn default() -> Self {
        Self {
            base: 0,
            response_latency: 2,
            fault: RegFileFault::None,
        }
    }
}

/// 256 words at word-aligned offsets `0x000..=0x3FC` from `base`.
#[derive(Debug, Clone)]
pub struct RegFileStorage {
    base: u32,
    words: Vec<u32>,
    unresponsive: bool,
}

impl RegFileStorage {
    pub fn new(base: u32) -> Self {
        Self {
            base,
            words: vec![0; REGFILE_WORDS],
            unresponsive: false,
        }
    }

    /// Word index for `addr`, if mapped.
    pub fn index(&self, addr: u32) -> Option<usize> {
        let off = addr.checked_sub(self.base)?;
        (off % 4 == 0 && (off as usize) < REGFILE_WORDS * 4).then_some(off as usize / 4)
    }

    pub fn word(&self, i: usize) -> u32 {
        self.words[i]
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }
}

impl RegTarget for RegFileStorage {
    fn access(&mut self, req: &BusRequest) -> Option<(u32, RespOpcode)> {
        match self.index(req.addr) {
            None if self.unresponsive => None,
            None => Some((0, RespOpcode::Error)),
            Some(i) if req.is_read() => Some((self.words[i], RespOpcode::Ok)),
            Some(i) => {
                self.words[i] = req.merge(self.words[i]);
                Some((0, RespOpcode::Ok))
            }
        }
    }
}

/// Register-file DUT as a kernel process.
pub struct RegFileDut {
    slave: BusSlave,
    storage: RegFileStorage,
    fault: RegFileFault,
}

impl RegFileDut {
    pub fn new(pins: RegBusPins, cfg: RegFileConfig) -> Result<Self, SimError> {
        let mut storage = RegFileStorage::new(cfg.base);
        storage.unresponsive = cfg.fault == RegFileFault::Unresponsive;
        Ok(Self {
            slave: BusSlave::new(pins, cfg.response_latency)?,
            storage,
            fault: cfg.fault,
        })
    }

    pub fn storage(&self) -> &RegFileStorage {
        &self.storage
    }

    /// Registers the model under `key`.
    pub fn register(self, k: &mut Kernel, key: &str) -> Result<(), SimError> {
        k.register_process(key, Box::new(self)).map(|_| ())
    }
}

impl crate::kernel::Process for RegFileDut {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        self.slave.eval(io, &mut self.storage)?;
        if let RegFileFault::SpuriousResponse { at_cycle } = self.fault {
            if io.cycle().0 == at_cycle {
                self.slave.drive(io, true, 0xBAD0_BAD0, RespOpcode::Ok)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rd(addr: u32) -> BusRequest {
        BusRequest {
            addr,
            data: 0,
            be: 0,
        }
    }

    fn wr(addr: u32, data: u32, be: u8) -> BusRequest {
        BusRequest { addr, data, be }
    }

    #[test]
    fn read_returns_last_write() {
        let mut s = RegFileStorage::new(0x1000);
        assert_eq!(
            s.access(&wr(0x1010, 0xDEAD_BEEF, 0xf)),
            Some((0, RespOpcode::Ok))
        );
        assert_eq!(s.access(&rd(0x1010)), Some((0xDEAD_BEEF, RespOpcode::Ok)));
    }

    #[test]
    fn byte_enables_merge() {
        let mut s = RegFileStorage::new(0);
        s.access(&wr(0, 0x1122_3344, 0xf));
        s.access(&wr(0, 0xAABB_CCDD, 0b0101));
        assert_eq!(s.word(0), 0x11BB_33DD);
    }

    #[test]
    fn decode_bounds() {
        let s = RegFileStorage::new(0x100);
        assert_eq!(s.index(0x100), Some(0));
        assert_eq!(s.index(0x4FC), Some(255));
        assert_eq!(s.index(0x500), None);
        assert_eq!(s.index(0xFC), None);
        assert_eq!(s.index(0x102), None);
        let mut s = s;
        assert_eq!(s.access(&rd(0x500)), Some((0, RespOpcode::Error)));
    }
}
