use std::collections::VecDeque;

use crate::codec::RespOpcode;
use crate::kernel::{Kernel, ModelFault, ProcessIo, SignalId, SimError};

/// Signals of one register-bus interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegBusPins {
    pub req: SignalId,
    pub eop: SignalId,
    pub addr: SignalId,
    pub data: SignalId,
    pub be: SignalId,
    pub r_req: SignalId,
    pub r_data: SignalId,
    pub r_opc: SignalId,
}

impl RegBusPins {
    /// Creates the bundle as `<prefix>.<pin>`, all idle at zero.
    pub fn add(k: &mut Kernel, prefix: &str) -> Result<Self, SimError> {
        let mut s = |n: &str, w: u32| k.add_signal(&format!("{prefix}.{n}"), w, 0);
        Ok(Self {
            req: s("req", 1)?,
            eop: s("eop", 1)?,
            addr: s("addr", 32)?,
            data: s("data", 32)?,
            be: s("be", 4)?,
            r_req: s("r_req", 1)?,
            r_data: s("r_data", 32)?,
            r_opc: s("r_opc", 2)?,
        })
    }
}

/// A request accepted from the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusRequest {
    pub addr: u32,
    pub data: u32,
    pub be: u8,
}

impl BusRequest {
    pub fn is_read(&self) -> bool {
        self.be == 0
    }

    /// `old` with the enabled bytes replaced from `data`.
    pub fn merge(&self, old: u32) -> u32 {
        let mut mask = 0u32;
        for i in 0..4 {
            if self.be & (1 << i) != 0 {
                mask |= 0xff << (8 * i);
            }
        }
        (old & !mask) | (self.data & mask)
    }
}

/// Address-decoded register space behind a bus slave.
pub trait RegTarget {
    /// Performs the access. `None` means the target never responds.
    fn access(&mut self, req: &BusRequest) -> Option<(u32, RespOpcode)>;
}

/// Slave side of the register-bus protocol.
///
/// A request visible at cycle `c` is decoded at `c` and its response pulses
/// `r_req` visible at `c + latency`. Response pins read zero otherwise.
#[derive(Debug)]
pub struct BusSlave {
    pins: RegBusPins,
    latency: u32,
    due: VecDeque<(u64, u32, RespOpcode)>,
}

impl BusSlave {
    pub fn new(pins: RegBusPins, latency: u32) -> Result<Self, SimError> {
        if latency == 0 {
            return Err(SimError::Config(
                "response latency must be at least 1".into(),
            ));
        }
        Ok(Self {
            pins,
            latency,
            due: VecDeque::new(),
        })
    }

    pub fn pins(&self) -> &RegBusPins {
        &self.pins
    }

    /// Reads a request off the pins, if one is present this cycle.
    pub fn sample(&self, io: &ProcessIo<'_>) -> Option<BusRequest> {
        io.read_bool(self.pins.req).then(|| BusRequest {
            addr: io.read(self.pins.addr) as u32,
            data: io.read(self.pins.data) as u32,
            be: io.read(self.pins.be) as u8,
        })
    }

    /// One cycle: decode a visible request through `target`, then drive
    /// whichever response is due.
    pub fn eval(
        &mut self,
        io: &mut ProcessIo<'_>,
        target: &mut dyn RegTarget,
    ) -> Result<(), ModelFault> {
        let now = io.cycle().0;
        if let Some(req) = self.sample(io) {
            if let Some((d, o)) = target.access(&req) {
                self.due.push_back((now + self.latency as u64 - 1, d, o));
            }
        }
        match self.due.front() {
            Some(&(at, d, o)) if at <= now => {
                self.due.pop_front();
                self.drive(io, true, d, o)
            }
            _ => self.drive(io, false, 0, RespOpcode::Ok),
        }
    }

    /// Drives the response pins directly; used by fault injection.
    pub fn drive(
        &self,
        io: &mut ProcessIo<'_>,
        valid: bool,
        data: u32,
        opc: RespOpcode,
    ) -> Result<(), ModelFault> {
        io.write_bool(self.pins.r_req, valid)?;
        io.write(self.pins.r_data, data as u64)?;
        io.write(self.pins.r_opc, opc as u64)
    }
}
