use std::cell::RefCell;
use std::rc::Rc;

use crate::codec::{
    pack_reg, unpack_reg, CodecError, PackedBits, RegPacket, RespOpcode, REG_PACKED_WIDTH,
};
use crate::dut::RegBusPins;
use crate::kernel::{ModelFault, Process, ProcessIo, ResetGen, SignalId};
use crate::link::hdl::{HdlErrorCounter, HdlServer, SharedOutbox, XtfTask};
use crate::link::LinkError;

/// Cycles the driver waits for `r_req` before failing the transaction.
pub const DEFAULT_RESPONSE_TIMEOUT: u32 = 64;

/// Width of a monitor sample: the packed transaction plus a 64-bit cycle
/// stamp in the most significant bits.
pub const MONITOR_SAMPLE_WIDTH: u32 = REG_PACKED_WIDTH + 64;

pub fn encode_monitor_sample(cycle: u64, p: &RegPacket) -> Result<PackedBits, CodecError> {
    let packed = pack_reg(p)?.to_u128()?;
    let mut out = PackedBits::zeros(MONITOR_SAMPLE_WIDTH);
    out.set_field(0, 64, packed as u64);
    out.set_field(64, REG_PACKED_WIDTH - 64, (packed >> 64) as u64);
    out.set_field(REG_PACKED_WIDTH, 64, cycle);
    Ok(out)
}

pub fn decode_monitor_sample(bits: &PackedBits) -> Result<(u64, RegPacket), CodecError> {
    if bits.width() != MONITOR_SAMPLE_WIDTH {
        return Err(CodecError::WidthMismatch {
            expected: MONITOR_SAMPLE_WIDTH,
            actual: bits.width(),
        });
    }
    let lo = bits.field(0, 64) as u128;
    let hi = bits.field(64, REG_PACKED_WIDTH - 64) as u128;
    let p = unpack_reg(&PackedBits::from_u128(REG_PACKED_WIDTH, (hi << 64) | lo)?)?;
    Ok((bits.field(REG_PACKED_WIDTH, 64), p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegDriverConfig {
    pub timeout: u32,
    /// Idle cycles appended after each response before the call returns.
    pub bus_gap: u32,
    pub wait_for_reset: bool,
}

impl Default for RegDriverConfig {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_RESPONSE_TIMEOUT,
            bus_gap: 0,
            wait_for_reset: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum DrvState {
    Idle,
    Start(RegPacket),
    Waiting { req: RegPacket, waited: u32 },
    Gap { done: RegPacket, left: u32 },
    Done(RegPacket),
}

/// Timed half of the register driver: a kernel process that wiggles the
/// request pins, and the reactive task that feeds it.
pub struct RegDriverBfm {
    pins: RegBusPins,
    reset: SignalId,
    reset_gen: ResetGen,
    cfg: RegDriverConfig,
    state: Rc<RefCell<DrvState>>,
}

struct RegDriveTask {
    state: Rc<RefCell<DrvState>>,
}

impl XtfTask for RegDriveTask {
    fn start(&mut self, payload: PackedBits) -> Result<(), ModelFault> {
        let p = unpack_reg(&payload).map_err(|e| ModelFault(e.to_string()))?;
        let mut s = self.state.borrow_mut();
        if !matches!(*s, DrvState::Idle) {
            return Err(ModelFault(
                "drive called while a transaction is active".into(),
            ));
        }
        *s = DrvState::Start(p.request_only());
        Ok(())
    }

    fn poll(&mut self) -> Option<PackedBits> {
        let mut s = self.state.borrow_mut();
        if let DrvState::Done(p) = *s {
            *s = DrvState::Idle;
            return pack_reg(&p).ok();
        }
        None
    }
}

impl RegDriverBfm {
    /// Registers the process under `key` and binds the drive task to `port`.
    pub fn install(
        server: &mut HdlServer,
        key: &str,
        pins: RegBusPins,
        port: u16,
        cfg: RegDriverConfig,
    ) -> Result<(), LinkError> {
        let k = server.kernel();
        let state = Rc::new(RefCell::new(DrvState::Idle));
        let bfm = Self {
            pins,
            reset: k.reset_signal(),
            reset_gen: k.config().reset,
            cfg,
            state: state.clone(),
        };
        server
            .kernel_mut()
            .register_process(key, Box::new(bfm))
            .map_err(|e| LinkError::Usage(e.to_string()))?;
        server.bind_task(port, Box::new(RegDriveTask { state }))
    }

    fn drive_request(
        &self,
        io: &mut ProcessIo<'_>,
        p: Option<&RegPacket>,
    ) -> Result<(), ModelFault> {
        let d = p.copied().unwrap_or_default();
        io.write_bool(self.pins.req, p.is_some())?;
        io.write_bool(self.pins.eop, p.is_some() && d.eop)?;
        io.write(self.pins.addr, d.addr as u64)?;
        io.write(self.pins.data, d.data as u64)?;
        io.write(self.pins.be, d.be as u64)
    }
}

impl Process for RegDriverBfm {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        let mut s = self.state.borrow_mut();
        let next = match *s {
            DrvState::Start(req) => {
                if self.cfg.wait_for_reset && self.reset_gen.is_asserted(io.read(self.reset)) {
                    self.drive_request(io, None)?;
                    DrvState::Start(req)
                } else {
                    self.drive_request(io, Some(&req))?;
                    DrvState::Waiting { req, waited: 0 }
                }
            }
            DrvState::Waiting { req, waited } => {
                self.drive_request(io, None)?;
                let done = if io.read_bool(self.pins.r_req) {
                    let opc = io.read(self.pins.r_opc) as u8;
                    let mut d = req.with_response(io.read(self.pins.r_data) as u32, RespOpcode::Ok);
                    d.r_opc = opc;
                    Some(d)
                } else if waited + 1 >= self.cfg.timeout {
                    let mut d = req.with_response(0, RespOpcode::Error);
                    d.r_req = false;
                    Some(d)
                } else {
                    None
                };
                match done {
                    Some(d) if self.cfg.bus_gap > 0 => DrvState::Gap {
                        done: d,
                        left: self.cfg.bus_gap,
                    },
                    Some(d) => DrvState::Done(d),
                    None => DrvState::Waiting {
                        req,
                        waited: waited + 1,
                    },
                }
            }
            DrvState::Gap { done, left } => {
                self.drive_request(io, None)?;
                if left <= 1 {
                    DrvState::Done(done)
                } else {
                    DrvState::Gap {
                        done,
                        left: left - 1,
                    }
                }
            }
            other => {
                self.drive_request(io, None)?;
                other
            }
        };
        *s = next;
        Ok(())
    }
}

/// Passive observer on a register bus. Emits one stamped sample per
/// completed request/response pair.
pub struct RegMonitorBfm {
    pins: RegBusPins,
    port: u16,
    outbox: SharedOutbox,
    errors: HdlErrorCounter,
    open: Option<RegPacket>,
}

impl RegMonitorBfm {
    pub fn install(
        server: &mut HdlServer,
        key: &str,
        pins: RegBusPins,
        port: u16,
    ) -> Result<(), LinkError> {
        let bfm = Self {
            pins,
            port,
            outbox: server.outbox(),
            errors: server.error_counter(),
            open: None,
        };
        server
            .kernel_mut()
            .register_process(key, Box::new(bfm))
            .map_err(|e| LinkError::Usage(e.to_string()))
            .map(|_| ())
    }
}

impl Process for RegMonitorBfm {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        if io.read_bool(self.pins.r_req) {
            match self.open.take() {
                Some(req) => {
                    let mut p = req.with_response(io.read(self.pins.r_data) as u32, RespOpcode::Ok);
                    p.r_opc = io.read(self.pins.r_opc) as u8;
                    let s = encode_monitor_sample(io.cycle().0, &p)
                        .map_err(|e| ModelFault(e.to_string()))?;
                    self.outbox.borrow_mut().push(self.port, s);
                }
                None => self.errors.bump(),
            }
        }
        if io.read_bool(self.pins.req) {
            if self.open.is_some() {
                self.errors.bump();
            }
            self.open = Some(RegPacket {
                req: true,
                eop: io.read_bool(self.pins.eop),
                addr: io.read(self.pins.addr) as u32,
                data: io.read(self.pins.data) as u32,
                be: io.read(self.pins.be) as u8,
                ..RegPacket::default()
            });
        }
        Ok(())
    }
}
