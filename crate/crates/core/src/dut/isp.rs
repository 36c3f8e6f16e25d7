use std::collections::VecDeque;

use crate::codec::{FrameTxn, RespOpcode};
use crate::kernel::{Kernel, ModelFault, Process, ProcessIo, SignalId, SimError};

use super::bus::{BusRequest, BusSlave, RegBusPins, RegTarget};
use super::DutError;

pub const REG_ENABLE: u32 = 0x00;
pub const REG_GAIN: u32 = 0x04;
pub const REG_OFFSET: u32 = 0x08;
pub const REG_CLAMP_MIN: u32 = 0x0C;
pub const REG_CLAMP_MAX: u32 = 0x10;
/// Read-only identification word.
pub const REG_ID: u32 = 0x14;
/// Read-only count of completed output frames.
pub const REG_FRAMES: u32 = 0x18;
/// Address distance between consecutive IPs of a chain.
pub const IP_STRIDE: u32 = 0x100;
pub const ISP_ID_VALUE: u32 = 0x1590_0001;

const RW_REGS: [u32; 5] = [
    REG_ENABLE,
    REG_GAIN,
    REG_OFFSET,
    REG_CLAMP_MIN,
    REG_CLAMP_MAX,
];

/// Register settings of one IP. `gain` is unsigned 8.8 fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IspConfig {
    pub enable: bool,
    pub gain: u16,
    pub offset: i16,
    pub clamp_min: u16,
    pub clamp_max: u16,
}

impl Default for IspConfig {
    fn default() -> Self {
        Self {
            enable: false,
            gain: 0x0100,
            offset: 0,
            clamp_min: 0,
            clamp_max: 0xFFFF,
        }
    }
}

impl IspConfig {
    /// Enabled with unity gain and no offset.
    pub fn identity() -> Self {
        Self {
            enable: true,
            ..Self::default()
        }
    }

    /// Per-pixel transfer function. Truncating shift; the result is first
    /// saturated to 16 bits, then clamped to `[clamp_min, clamp_max]` with
    /// the upper bound taking precedence if the bounds cross.
    pub fn transfer(&self, px: u16) -> u16 {
        if !self.enable {
            return px;
        }
        let scaled = ((px as i64) * (self.gain as i64)) >> 8;
        let v = (scaled + self.offset as i64).clamp(0, 0xFFFF) as u16;
        v.max(self.clamp_min).min(self.clamp_max)
    }

    /// `(offset, value)` register writes that establish this config.
    pub fn register_words(&self) -> [(u32, u32); 5] {
        [
            (REG_ENABLE, self.enable as u32),
            (REG_GAIN, self.gain as u32),
            (REG_OFFSET, self.offset as u16 as u32),
            (REG_CLAMP_MIN, self.clamp_min as u32),
            (REG_CLAMP_MAX, self.clamp_max as u32),
        ]
    }

    /// Interprets register words; only the low 16 bits (bit 0 for ENABLE)
    /// are significant.
    pub fn from_words(enable: u32, gain: u32, offset: u32, min: u32, max: u32) -> Self {
        Self {
            enable: enable & 1 != 0,
            gain: gain as u16,
            offset: offset as u16 as i16,
            clamp_min: min as u16,
            clamp_max: max as u16,
        }
    }
}

/// Reference model: the transfer function folded across a chain of
/// `chain_len` IPs.
pub fn apply_golden_pipeline(
    f: &FrameTxn,
    configs: &[IspConfig],
    chain_len: usize,
) -> Result<FrameTxn, DutError> {
    if configs.len() != chain_len {
        return Err(DutError::ChainLength {
            expected: chain_len,
            got: configs.len(),
        });
    }
    f.validate()?;
    let pixels = f
        .pixels
        .iter()
        .map(|&p| configs.iter().fold(p, |v, c| c.transfer(v)))
        .collect();
    Ok(FrameTxn::new(f.frame_id, f.width, f.height, pixels)?)
}

/// Pixel-bus signals. `frame_end` accompanies the last pixel of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoPins {
    pub frame_start: SignalId,
    pub line_start: SignalId,
    pub pixel_valid: SignalId,
    pub pixel_data: SignalId,
    pub frame_end: SignalId,
}

impl VideoPins {
    pub fn add(k: &mut Kernel, prefix: &str) -> Result<Self, SimError> {
        let mut s = |n: &str, w: u32| k.add_signal(&format!("{prefix}.{n}"), w, 0);
        Ok(Self {
            frame_start: s("frame_start", 1)?,
            line_start: s("line_start", 1)?,
            pixel_valid: s("pixel_valid", 1)?,
            pixel_data: s("pixel_data", 16)?,
            frame_end: s("frame_end", 1)?,
        })
    }

    pub fn sample(&self, io: &ProcessIo<'_>) -> VideoSample {
        VideoSample {
            frame_start: io.read_bool(self.frame_start),
            line_start: io.read_bool(self.line_start),
            valid: io.read_bool(self.pixel_valid),
            data: io.read(self.pixel_data) as u16,
            frame_end: io.read_bool(self.frame_end),
        }
    }

    pub fn drive(&self, io: &mut ProcessIo<'_>, s: &VideoSample) -> Result<(), ModelFault> {
        io.write_bool(self.frame_start, s.frame_start)?;
        io.write_bool(self.line_start, s.line_start)?;
        io.write_bool(self.pixel_valid, s.valid)?;
        io.write(self.pixel_data, s.data as u64)?;
        io.write_bool(self.frame_end, s.frame_end)
    }
}

/// One cycle of pixel-bus state. The idle sample is all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VideoSample {
    pub frame_start: bool,
    pub line_start: bool,
    pub valid: bool,
    pub data: u16,
    pub frame_end: bool,
}

/// Register block of one IP.
#[derive(Debug, Clone)]
pub struct IspRegs {
    rw: [u32; 5],
    frames: u32,
}

impl IspRegs {
    pub fn new(reset: IspConfig) -> Self {
        let mut rw = [0; 5];
        for (i, (_, v)) in reset.register_words().into_iter().enumerate() {
            rw[i] = v;
        }
        Self { rw, frames: 0 }
    }

    pub fn config(&self) -> IspConfig {
        let [e, g, o, lo, hi] = self.rw;
        IspConfig::from_words(e, g, o, lo, hi)
    }

    pub fn frames(&self) -> u32 {
        self.frames
    }

    /// Access at an offset within this IP's window.
    pub fn access(&mut self, off: u32, req: &BusRequest) -> (u32, RespOpcode) {
        if let Some(i) = RW_REGS.iter().position(|&r| r == off) {
            if req.is_read() {
                return (self.rw[i], RespOpcode::Ok);
            }
            self.rw[i] = req.merge(self.rw[i]);
            return (0, RespOpcode::Ok);
        }
        match (off, req.is_read()) {
            (REG_ID, true) => (ISP_ID_VALUE, RespOpcode::Ok),
            (REG_FRAMES, true) => (self.frames, RespOpcode::Ok),
            _ => (0, RespOpcode::Error),
        }
    }
}

struct IpStage {
    regs: IspRegs,
    input: VideoPins,
    output: VideoPins,
    irq: SignalId,
    /// `L - 1` samples in flight; the output register is the L-th stage.
    delay: VecDeque<VideoSample>,
}

impl IpStage {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        let mut s = self.input.sample(io);
        if s.valid {
            s.data = self.regs.config().transfer(s.data);
        } else {
            s.data = 0;
        }
        self.delay.push_back(s);
        let out = self.delay.pop_front().unwrap_or_default();
        let done = out.valid && out.frame_end;
        if done {
            self.regs.frames = self.regs.frames.wrapping_add(1);
        }
        self.output.drive(io, &out)?;
        io.write_bool(self.irq, done)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemConfig {
    /// Number of chained IPs (R).
    pub ips: usize,
    pub base: u32,
    pub response_latency: u32,
    /// Per-IP pixel latency (L), at least 1.
    pub pipeline_latency: u32,
    /// Reset values per IP; missing entries use the documented defaults.
    pub reset: Vec<IspConfig>,
}

impl Default for SubsystemConfig {
    fn default() -> Self {
        Self {
            ips: 1,
            base: 0,
            response_latency: 2,
            pipeline_latency: 4,
            reset: Vec::new(),
        }
    }
}

impl SubsystemConfig {
    pub fn ip_base(&self, i: usize) -> u32 {
        self.base + i as u32 * IP_STRIDE
    }
}

struct Decoder<'a> {
    base: u32,
    stages: &'a mut [IpStage],
}

impl RegTarget for Decoder<'_> {
    fn access(&mut self, req: &BusRequest) -> Option<(u32, RespOpcode)> {
        let Some(off) = req.addr.checked_sub(self.base) else {
            return Some((0, RespOpcode::Error));
        };
        let ip = (off / IP_STRIDE) as usize;
        if off % 4 != 0 || ip >= self.stages.len() {
            return Some((0, RespOpcode::Error));
        }
        Some(self.stages[ip].regs.access(off % IP_STRIDE, req))
    }
}

/// R image-processing IPs chained input to output behind one register bus.
/// A single IP is the `ips == 1` case.
pub struct SubsystemDut {
    slave: BusSlave,
    base: u32,
    stages: Vec<IpStage>,
}

impl SubsystemDut {
    /// Builds the chain between `input` and `output`, creating the
    /// inter-stage buses `isp<i>.out` and interrupt lines `isp<i>.irq`.
    pub fn new(
        k: &mut Kernel,
        cfg: &SubsystemConfig,
        bus: RegBusPins,
        input: VideoPins,
        output: VideoPins,
    ) -> Result<Self, SimError> {
        if cfg.ips == 0 {
            return Err(SimError::Config("subsystem needs at least one IP".into()));
        }
        if cfg.pipeline_latency == 0 {
            return Err(SimError::Config(
                "pipeline latency must be at least 1".into(),
            ));
        }
        let mut stages = Vec::with_capacity(cfg.ips);
        let mut prev = input;
        for i in 0..cfg.ips {
            let out = if i + 1 == cfg.ips {
                output
            } else {
                VideoPins::add(k, &format!("isp{i}.out"))?
            };
            let irq = k.add_signal(&format!("isp{i}.irq"), 1, 0)?;
            let reset = cfg.reset.get(i).copied().unwrap_or_default();
            stages.push(IpStage {
                regs: IspRegs::new(reset),
                input: prev,
                output: out,
                irq,
                delay: (0..cfg.pipeline_latency - 1)
                    .map(|_| VideoSample::default())
                    .collect(),
            });
            prev = out;
        }
        Ok(Self {
            slave: BusSlave::new(bus, cfg.response_latency)?,
            base: cfg.base,
            stages,
        })
    }

    pub fn irq_lines(&self) -> Vec<SignalId> {
        self.stages.iter().map(|s| s.irq).collect()
    }

    pub fn configs(&self) -> Vec<IspConfig> {
        self.stages.iter().map(|s| s.regs.config()).collect()
    }

    pub fn register(self, k: &mut Kernel, key: &str) -> Result<(), SimError> {
        k.register_process(key, Box::new(self)).map(|_| ())
    }
}

impl Process for SubsystemDut {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        let mut dec = Decoder {
            base: self.base,
            stages: &mut self.stages,
        };
        self.slave.eval(io, &mut dec)?;
        for s in &mut self.stages {
            s.eval(io)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent fixed-point oracle: widen, multiply, truncate, add,
    /// saturate, clamp.
    #[allow(clippy::manual_clamp)]
    fn oracle(px: u16, gain: u16, offset: i16, lo: u16, hi: u16) -> u16 {
        let prod = px as u32 * gain as u32;
        let shifted = (prod / 256) as i32;
        let mut v = shifted + offset as i32;
        if v < 0 {
            v = 0;
        }
        if v > 65535 {
            v = 65535;
        }
        let mut v = v as u16;
        if v < lo {
            v = lo;
        }
        if v > hi {
            v = hi;
        }
        v
    }

    fn cfg(gain: u16, offset: i16) -> IspConfig {
        IspConfig {
            gain,
            offset,
            ..IspConfig::identity()
        }
    }

    #[test]
    fn identity_passes_pixels() {
        assert_eq!(IspConfig::identity().transfer(0x1234), 0x1234);
        assert_eq!(IspConfig::default().transfer(0x1234), 0x1234);
    }

    #[test]
    fn gain_two() {
        assert_eq!(cfg(0x0200, 0).transfer(100), 200);
        assert_eq!(oracle(100, 0x200, 0, 0, 0xffff), 200);
    }

    #[test]
    fn negative_offset_clamps() {
        assert_eq!(cfg(0x0100, -50).transfer(20), 0);
    }

    #[test]
    fn disabled_is_passthrough() {
        let c = IspConfig {
            enable: false,
            ..cfg(0x0300, 9)
        };
        assert_eq!(c.transfer(77), 77);
    }

    #[test]
    fn two_stage_truncation() {
        let f = FrameTxn::new(0, 1, 1, vec![101]).unwrap();
        let out = apply_golden_pipeline(&f, &[cfg(0x0200, 0), cfg(0x0080, 0)], 2).unwrap();
        // 101*2 = 202 exactly; 202*0.5 = 101 exactly, nothing truncates
        assert_eq!(out.pixels, vec![101]);
        let out = apply_golden_pipeline(&f, &[cfg(0x0080, 0), cfg(0x0200, 0)], 2).unwrap();
        assert_eq!(out.pixels, vec![100]);
    }

    #[test]
    fn chain_length_checked() {
        let f = FrameTxn::new(0, 1, 1, vec![1]).unwrap();
        assert!(matches!(
            apply_golden_pipeline(&f, &[IspConfig::identity()], 2),
            Err(DutError::ChainLength {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn register_words_round_trip() {
        let c = IspConfig {
            enable: true,
            gain: 0x1a3,
            offset: -7,
            clamp_min: 3,
            clamp_max: 900,
        };
        let mut regs = IspRegs::new(IspConfig::default());
        for (off, v) in c.register_words() {
            regs.access(
                off,
                &BusRequest {
                    addr: off,
                    data: v,
                    be: 0xf,
                },
            );
        }
        assert_eq!(regs.config(), c);
    }

    #[test]
    fn ro_registers() {
        let mut regs = IspRegs::new(IspConfig::default());
        let rd = |off| BusRequest {
            addr: off,
            data: 0,
            be: 0,
        };
        assert_eq!(
            regs.access(REG_ID, &rd(REG_ID)),
            (ISP_ID_VALUE, RespOpcode::Ok)
        );
        let w = BusRequest {
            addr: REG_ID,
            data: 1,
            be: 0xf,
        };
        assert_eq!(regs.access(REG_ID, &w).1, RespOpcode::Error);
        assert_eq!(regs.access(0x40, &rd(0x40)).1, RespOpcode::Error);
    }

    proptest::proptest! {
        #[test]
        fn transfer_matches_oracle(px: u16, gain: u16, offset: i16, lo: u16, hi: u16) {
            let c = IspConfig { enable: true, gain, offset, clamp_min: lo, clamp_max: hi };
            proptest::prop_assert_eq!(c.transfer(px), oracle(px, gain, offset, lo, hi));
        }
    }
}
