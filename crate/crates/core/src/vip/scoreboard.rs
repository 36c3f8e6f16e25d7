use std::cell::RefCell;
use std::collections::VecDeque;
use std::rc::Rc;

use crate::codec::{FrameTxn, RegPacket, RespOpcode};
use crate::dut::apply_golden_pipeline;
use crate::uvm::{Component, ReportCtx};

use super::reg_proxy::MonitoredTxn;
use super::regmodel::RegModel;

/// Reference register file for predicting responses: `words` words from
/// `base`, byte-enable writes, error on anything unmapped.
#[derive(Debug, Clone)]
pub struct ShadowRegFile {
    base: u32,
    data: Vec<u32>,
}

impl ShadowRegFile {
    pub fn new(base: u32, words: u32) -> Self {
        Self {
            base,
            data: vec![0; words as usize],
        }
    }

    fn index(&self, addr: u32) -> Option<usize> {
        let off = addr.checked_sub(self.base)?;
        let i = (off / 4) as usize;
        (off % 4 == 0 && i < self.data.len()).then_some(i)
    }

    /// Applies the request and returns the expected `(r_data, r_opc)`.
    pub fn apply(&mut self, p: &RegPacket) -> (u32, u8) {
        let Some(i) = self.index(p.addr) else {
            return (0, RespOpcode::Error as u8);
        };
        let cur = self.data[i];
        if p.is_read() {
            return (cur, RespOpcode::Ok as u8);
        }
        let mut v = cur;
        for b in 0..4 {
            if p.be >> b & 1 == 1 {
                v = (v & !(0xff << (8 * b))) | (p.data & (0xff << (8 * b)));
            }
        }
        self.data[i] = v;
        (0, RespOpcode::Ok as u8)
    }

    /// Current value; 0 outside the map.
    pub fn value_of(&self, addr: u32) -> u32 {
        self.index(addr).map_or(0, |i| self.data[i])
    }
}

/// Cross-checks what the driver got back against what the monitor saw,
/// and optionally both against a reference register file.
#[derive(Debug, Default)]
pub struct RegScoreboard {
    driven: VecDeque<RegPacket>,
    observed: VecDeque<MonitoredTxn>,
    reference: Option<ShadowRegFile>,
    model: Option<Rc<RefCell<RegModel>>>,
    matched: u64,
    driven_total: u64,
    observed_total: u64,
    timeouts: u64,
    mirror_audit: bool,
    errors: Vec<String>,
}

impl RegScoreboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_reference(mut self, r: ShadowRegFile) -> Self {
        self.reference = Some(r);
        self
    }

    /// Feeds every completed response to the model's predictor.
    pub fn with_model(mut self, m: Rc<RefCell<RegModel>>) -> Self {
        self.model = Some(m);
        self
    }

    /// Compares every mapped mirror value with the reference after each
    /// response. Needs both a model and a reference.
    pub fn with_mirror_audit(mut self) -> Self {
        self.mirror_audit = true;
        self
    }

    pub fn reference(&self) -> Option<&ShadowRegFile> {
        self.reference.as_ref()
    }

    /// Checks the response against the reference and feeds the model's
    /// predictor, then pairs it with the monitor's record.
    pub fn on_driver_response(&mut self, p: &RegPacket) {
        self.driven_total += 1;
        if !p.r_req {
            self.timeouts += 1;
            self.errors
                .push(format!("no response to request at {:#010x}", p.addr));
            return;
        }
        let n = self.driven_total;
        if let Some(r) = self.reference.as_mut() {
            let (d, o) = r.apply(p);
            if (p.r_data, p.r_opc) != (d, o) {
                self.errors.push(format!(
                    "op {n}: {:#010x} returned ({:#010x}, {}), expected ({d:#010x}, {o})",
                    p.addr, p.r_data, p.r_opc
                ));
            }
        }
        if let Some(m) = &self.model {
            if !m.borrow_mut().predict(p) {
                let msg = m.borrow().mismatches().last().cloned().unwrap_or_default();
                self.errors.push(format!("op {n}: mirror mismatch: {msg}"));
            }
        }
        if self.mirror_audit {
            self.audit_mirror(n);
        }
        self.driven.push_back(*p);
        self.pair();
    }

    fn audit_mirror(&mut self, n: u64) {
        let (Some(m), Some(r)) = (&self.model, &self.reference) else {
            return;
        };
        let m = m.borrow();
        for reg in m.registers() {
            if reg.mirror != r.value_of(reg.addr) {
                self.errors.push(format!(
                    "op {n}: mirror of {} is {:#010x}, reference holds {:#010x}",
                    reg.name,
                    reg.mirror,
                    r.value_of(reg.addr)
                ));
            }
        }
    }

    pub fn on_monitor(&mut self, t: &MonitoredTxn) {
        self.observed_total += 1;
        self.observed.push_back(*t);
        self.pair();
    }

    fn pair(&mut self) {
        while let (Some(d), Some(o)) = (self.driven.front(), self.observed.front()) {
            if *d != o.pkt {
                self.errors.push(format!(
                    "cycle {}: monitor saw {} but driver completed {}",
                    o.cycle, o.pkt, d
                ));
            }
            self.driven.pop_front();
            self.observed.pop_front();
            self.matched += 1;
        }
    }

    pub fn matched(&self) -> u64 {
        self.matched
    }

    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    /// Errors plus any transaction one side saw and the other did not.
    pub fn final_errors(&self) -> Vec<String> {
        let mut e = self.errors.clone();
        if !self.driven.is_empty() || !self.observed.is_empty() {
            e.push(format!(
                "driver completed {} responses, monitor reported {}",
                self.driven_total - self.timeouts,
                self.observed_total
            ));
        }
        e
    }
}

impl Component for RegScoreboard {
    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        for e in self.final_errors() {
            ctx.error(e);
        }
    }
}

/// Compares output frames with the reference pipeline applied to input
/// frames, in order. Configurations are read from the register model's
/// mirror at the moment each frame is sent.
pub struct FrameScoreboard {
    model: Rc<RefCell<RegModel>>,
    ips: usize,
    expected: VecDeque<FrameTxn>,
    frames_in: u64,
    frames_out: u64,
    pixels_in: u64,
    pixels_out: u64,
    errors: Vec<String>,
}

impl FrameScoreboard {
    pub fn new(model: Rc<RefCell<RegModel>>, ips: usize) -> Self {
        Self {
            model,
            ips,
            expected: VecDeque::new(),
            frames_in: 0,
            frames_out: 0,
            pixels_in: 0,
            pixels_out: 0,
            errors: Vec::new(),
        }
    }

    pub fn on_input(&mut self, f: &FrameTxn) {
        self.frames_in += 1;
        self.pixels_in += f.pixels.len() as u64;
        let m = self.model.borrow();
        let cfgs: Result<Vec<_>, _> = (0..self.ips).map(|i| m.isp_config(i)).collect();
        let golden = cfgs
            .map_err(|e| e.to_string())
            .and_then(|c| apply_golden_pipeline(f, &c, self.ips).map_err(|e| e.to_string()));
        match golden {
            Ok(g) => self.expected.push_back(g),
            Err(e) => self.errors.push(format!("frame {}: {e}", f.frame_id)),
        }
    }

    pub fn on_output(&mut self, f: &FrameTxn) {
        self.frames_out += 1;
        self.pixels_out += f.pixels.len() as u64;
        let Some(g) = self.expected.pop_front() else {
            self.errors
                .push(format!("unexpected output frame #{}", self.frames_out));
            return;
        };
        if (g.width, g.height) != (f.width, f.height) {
            self.errors.push(format!(
                "frame {}: {}x{} out, {}x{} expected",
                g.frame_id, f.width, f.height, g.width, g.height
            ));
        } else if let Some(i) = (0..g.pixels.len()).find(|&i| g.pixels[i] != f.pixels[i]) {
            self.errors.push(format!(
                "frame {}: pixel {i} is {:#06x}, expected {:#06x}",
                g.frame_id, f.pixels[i], g.pixels[i]
            ));
        }
    }

    pub fn frames_out(&self) -> u64 {
        self.frames_out
    }

    pub fn frames_in(&self) -> u64 {
        self.frames_in
    }

    pub fn pixels(&self) -> (u64, u64) {
        (self.pixels_in, self.pixels_out)
    }

    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    pub fn final_errors(&self) -> Vec<String> {
        let mut e = self.errors.clone();
        if !self.expected.is_empty() {
            e.push(format!("{} frame(s) never came out", self.expected.len()));
        }
        e
    }
}

impl Component for FrameScoreboard {
    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        for e in self.final_errors() {
            ctx.error(e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shadow_predicts_regfile() {
        let mut s = ShadowRegFile::new(0, 256);
        assert_eq!(s.apply(&RegPacket::write(0x10, 0xDEAD_BEEF, 0xf)), (0, 0));
        assert_eq!(s.apply(&RegPacket::read(0x10)), (0xDEAD_BEEF, 0));
        assert_eq!(s.apply(&RegPacket::read(0x400)), (0, 1));
        assert_eq!(s.apply(&RegPacket::read(0x11)), (0, 1));
    }

    #[test]
    fn pairs_in_either_order() {
        let mut sb = RegScoreboard::new();
        let p = RegPacket::write(0, 1, 0xf).with_response(0, RespOpcode::Ok);
        sb.on_monitor(&MonitoredTxn { cycle: 3, pkt: p });
        sb.on_driver_response(&p);
        sb.on_driver_response(&p);
        assert_eq!(sb.final_errors().len(), 1);
        sb.on_monitor(&MonitoredTxn { cycle: 7, pkt: p });
        assert!(sb.final_errors().is_empty());
        assert_eq!(sb.matched(), 2);
    }
}
