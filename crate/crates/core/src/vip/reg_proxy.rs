use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::codec::{pack_reg, unpack_reg, RegPacket};
use crate::uvm::{
    Activity, AnalysisPort, BuildCtx, Component, NextItem, ReportCtx, RunCtx, Sequencer, UvmError,
};

use super::reg_bfm::decode_monitor_sample;
use super::{BfmHandle, LinkHandle, DRIVER_BFM_KEY, MONITOR_BFM_KEY};

/// A bus transaction as the monitor saw it, stamped with the cycle its
/// response became visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitoredTxn {
    pub cycle: u64,
    pub pkt: RegPacket,
}

impl fmt::Display for MonitoredTxn {
    /// `cycle,R|W,addr,data,be,r_data,r_opc`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.pkt;
        write!(
            f,
            "{},{},0x{:08x},0x{:08x},0x{:x},0x{:08x},{}",
            self.cycle,
            if p.is_read() { 'R' } else { 'W' },
            p.addr,
            p.data,
            p.be,
            p.r_data,
            p.r_opc
        )
    }
}

/// Untimed driver half: pulls items from its sequencer and executes each
/// one as a blocking call into the driver BFM.
pub struct RegDriverProxy {
    link: LinkHandle,
    seq: Rc<RefCell<Sequencer<RegPacket>>>,
    rsp: Rc<RefCell<AnalysisPort<RegPacket>>>,
    port: Option<u16>,
    completed: u64,
}

impl RegDriverProxy {
    pub fn new(link: LinkHandle) -> Self {
        Self {
            link,
            seq: Rc::new(RefCell::new(Sequencer::new())),
            rsp: Rc::new(RefCell::new(AnalysisPort::new())),
            port: None,
            completed: 0,
        }
    }

    pub fn sequencer(&self) -> Rc<RefCell<Sequencer<RegPacket>>> {
        self.seq.clone()
    }

    /// Completed items with their response fields.
    pub fn responses(&self) -> Rc<RefCell<AnalysisPort<RegPacket>>> {
        self.rsp.clone()
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }
}

impl Component for RegDriverProxy {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        match ctx.registry.get::<BfmHandle>(ctx.path, DRIVER_BFM_KEY) {
            Ok(h) => {
                self.port = Some(h.port);
                Ok(())
            }
            Err(_) => Err(ctx.fatal(format!("{DRIVER_BFM_KEY} is not set"))),
        }
    }

    fn run_step(&mut self, ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        let port = self
            .port
            .ok_or_else(|| UvmError::Config("driver proxy ran without BUILD".into()))?;
        let next = self.seq.borrow_mut().get_next_item(ctx.end_of_test())?;
        let NextItem::Item(item) = next else {
            return Ok(Activity::Idle);
        };
        let ret = self.link.borrow_mut().xtf_call(port, pack_reg(&item)?)?;
        let rsp = unpack_reg(&ret)?;
        self.seq.borrow_mut().item_done(Some(rsp))?;
        self.completed += 1;
        self.rsp.borrow_mut().write(&rsp);
        Ok(Activity::Busy)
    }

    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        ctx.add_transactions(self.completed);
    }
}

/// Untimed monitor half: converts stamped samples back into records and
/// broadcasts them.
pub struct RegMonitorProxy {
    link: LinkHandle,
    ap: Rc<RefCell<AnalysisPort<MonitoredTxn>>>,
    port: Option<u16>,
    seen: u64,
}

impl RegMonitorProxy {
    pub fn new(link: LinkHandle) -> Self {
        Self {
            link,
            ap: Rc::new(RefCell::new(AnalysisPort::new())),
            port: None,
            seen: 0,
        }
    }

    pub fn analysis_port(&self) -> Rc<RefCell<AnalysisPort<MonitoredTxn>>> {
        self.ap.clone()
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }
}

impl Component for RegMonitorProxy {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        match ctx.registry.get::<BfmHandle>(ctx.path, MONITOR_BFM_KEY) {
            Ok(h) => {
                self.port = Some(h.port);
                Ok(())
            }
            Err(_) => Err(ctx.fatal(format!("{MONITOR_BFM_KEY} is not set"))),
        }
    }

    fn run_step(&mut self, _ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        let Some(port) = self.port else {
            return Ok(Activity::Idle);
        };
        let mut any = false;
        loop {
            let Some(bits) = self.link.borrow_mut().stream_recv_ready(port)? else {
                break;
            };
            let (cycle, pkt) = decode_monitor_sample(&bits)?;
            self.seen += 1;
            self.ap.borrow_mut().write(&MonitoredTxn { cycle, pkt });
            any = true;
        }
        Ok(Activity::busy_if(any))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::RespOpcode;

    #[test]
    fn log_line_format() {
        let t = MonitoredTxn {
            cycle: 9,
            pkt: RegPacket::write(0x10, 0xDEAD_BEEF, 0xf).with_response(0, RespOpcode::Ok),
        };
        assert_eq!(t.to_string(), "9,W,0x00000010,0xdeadbeef,0xf,0x00000000,0");
        let r = MonitoredTxn {
            cycle: 13,
            pkt: RegPacket::read(0x10).with_response(0xDEAD_BEEF, RespOpcode::Ok),
        };
        assert_eq!(r.to_string(), "13,R,0x00000010,0x00000000,0x0,0xdeadbeef,0");
    }
}
