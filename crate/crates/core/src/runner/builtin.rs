use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::rc::Rc;

use crate::codec::{FrameTxn, PackedBits, RegPacket};
use crate::dut::{IspConfig, IP_STRIDE, REG_FRAMES, REG_ID};
use crate::link::hvl::HdlStatus;
use crate::uvm::{Activity, BuildCtx, Component, ReportCtx, RunCtx, Sequencer, UvmError};
use crate::vip::{BfmHandle, LinkHandle, RegModel, VIDEO_SYNC_KEY};

use super::config::{DutKind, RunConfig};
use super::env::EnvHandles;
use super::stimulus::Stimulus;
use super::RunError;

/// Names of the built-in tests.
pub const BUILTIN_TESTS: [&str; 4] = [
    "reg_smoke",
    "reg_random_rw",
    "isp_frames",
    "subsystem_chain",
];

/// Largest frame edge the video tests generate.
pub const MAX_FRAME_EDGE: u16 = 32;

/// One step of a test plan. Each step completes before the next starts.
#[derive(Debug, Clone)]
pub enum Step {
    /// Register operations, as `(interface, item)`; all are queued at once
    /// and the step ends when every one has completed.
    Reg(Vec<(usize, RegPacket)>),
    /// One frame on input interface 0.
    Frame(FrameTxn),
    /// Blocks until output interface 0 has completed this many frames.
    Sync(u32),
}

/// What a test checks after its plan runs.
#[derive(Debug, Clone, Default)]
pub struct Expect {
    /// Frames that must come out, and interrupt pulses each line must see.
    pub frames: Option<u64>,
    /// `(register name, value)` pairs the mirror must hold at the end.
    pub mirror: Vec<(String, u32)>,
}

/// A test plan: the same steps run identically in every link mode.
#[derive(Debug, Clone, Default)]
pub struct TestPlan {
    pub steps: Vec<Step>,
    pub expect: Expect,
}

fn isp_config_writes(configs: &[IspConfig]) -> Vec<(usize, RegPacket)> {
    let mut v = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        for (off, val) in c.register_words() {
            v.push((0, RegPacket::write(i as u32 * IP_STRIDE + off, val, 0xf)));
        }
    }
    v
}

fn isp_readback(ips: usize) -> Vec<(usize, RegPacket)> {
    let mut v = Vec::new();
    for i in 0..ips as u32 {
        let base = i * IP_STRIDE;
        v.push((0, RegPacket::read(base + REG_ID)));
        for (off, _) in IspConfig::default().register_words() {
            v.push((0, RegPacket::read(base + off)));
        }
    }
    v
}

fn video_plan(configs: Vec<IspConfig>, frames: u64, stim: &mut Stimulus) -> TestPlan {
    let ips = configs.len();
    let mut steps = vec![
        Step::Reg(isp_config_writes(&configs)),
        Step::Reg(isp_readback(ips)),
    ];
    for k in 0..frames {
        steps.push(Step::Frame(stim.frame(
            k as u16,
            MAX_FRAME_EDGE,
            MAX_FRAME_EDGE,
        )));
        steps.push(Step::Sync(k as u32 + 1));
    }
    steps.push(Step::Reg(
        (0..ips as u32)
            .map(|i| (0, RegPacket::read(i * IP_STRIDE + REG_FRAMES)))
            .collect(),
    ));
    TestPlan {
        steps,
        expect: Expect {
            frames: Some(frames),
            mirror: (0..ips)
                .map(|i| (format!("ip{i}.FRAMES"), frames as u32))
                .collect(),
        },
    }
}

/// Expands a built-in test into its plan. The plan depends only on the run
/// configuration and the seed.
pub fn plan_for(run: &RunConfig) -> Result<TestPlan, RunError> {
    let env = run.hdl.env;
    let mut stim = Stimulus::new(run.seed);
    let ifaces = env.e as usize;
    match run.test.as_str() {
        "reg_smoke" => {
            let mut ops = Vec::new();
            for e in 0..ifaces {
                ops.extend(
                    [
                        RegPacket::write(0x000, 0xDEAD_BEEF, 0xf),
                        RegPacket::read(0x000),
                        RegPacket::write(0x004, 0x1234_5678, 0x5),
                        RegPacket::read(0x004),
                        RegPacket::write(0x3FC, 0xA5A5_A5A5, 0xf),
                        RegPacket::read(0x3FC),
                        RegPacket::read(0x400),
                    ]
                    .map(|p| (e, p)),
                );
            }
            require(run, DutKind::RegFile)?;
            Ok(TestPlan {
                steps: vec![Step::Reg(ops)],
                expect: Expect::default(),
            })
        }
        "reg_random_rw" => {
            require(run, DutKind::RegFile)?;
            let pairs = run.txns.unwrap_or(1000) / 2;
            let mut ops = Vec::with_capacity(2 * pairs as usize);
            for k in 0..pairs as usize {
                let [w, r] = stim.reg_pair(0, run.reg_words);
                ops.push((k % ifaces, w));
                ops.push((k % ifaces, r));
            }
            Ok(TestPlan {
                steps: vec![Step::Reg(ops)],
                expect: Expect::default(),
            })
        }
        "isp_frames" => {
            require(run, DutKind::Isp)?;
            let cfgs = vec![IspConfig::identity(); env.r as usize];
            Ok(video_plan(cfgs, run.frames.unwrap_or(8), &mut stim))
        }
        "subsystem_chain" => {
            require(run, DutKind::Isp)?;
            let cfgs = (0..env.r).map(|_| stim.isp_config()).collect();
            Ok(video_plan(cfgs, run.frames.unwrap_or(20), &mut stim))
        }
        other => Err(RunError::UnknownTest(other.to_string())),
    }
}

fn require(run: &RunConfig, dut: DutKind) -> Result<(), RunError> {
    if run.hdl.dut != dut {
        return Err(RunError::Config(format!(
            "test `{}` needs dut={dut}, configured dut={}",
            run.test, run.hdl.dut
        )));
    }
    Ok(())
}

/// Default environment and design for a built-in test.
pub fn configure_for(run: &mut RunConfig) {
    match run.test.as_str() {
        "isp_frames" => {
            run.hdl.dut = DutKind::Isp;
            run.hdl.env = super::config::EnvConfig::video(1);
        }
        "subsystem_chain" => {
            run.hdl.dut = DutKind::Isp;
            run.hdl.env = super::config::EnvConfig::video(3);
        }
        _ => run.hdl.dut = DutKind::RegFile,
    }
}

enum Wait {
    None,
    Regs(Vec<u64>),
    Frames(u64),
}

/// The test at the top of the tree. Holds one objection while its plan
/// runs, then shuts the link down so every monitor sees its final samples.
pub struct PlanTest {
    link: LinkHandle,
    reg_seqs: Vec<Rc<RefCell<Sequencer<RegPacket>>>>,
    video_seqs: Vec<Rc<RefCell<Sequencer<FrameTxn>>>>,
    model: Rc<RefCell<RegModel>>,
    frames_out: Rc<RefCell<Vec<FrameTxn>>>,
    irq_counts: Vec<Rc<Cell<u64>>>,
    steps: VecDeque<Step>,
    expect: Expect,
    sync_port: Option<u16>,
    wait: Wait,
    started: bool,
    finished: bool,
    status: Rc<Cell<Option<HdlStatus>>>,
}

impl PlanTest {
    pub fn new(plan: TestPlan, h: &EnvHandles) -> Self {
        Self {
            link: h.link.clone(),
            reg_seqs: h.reg_seqs.clone(),
            video_seqs: h.video_seqs.clone(),
            model: h.model.clone(),
            frames_out: h.frames_out.clone(),
            irq_counts: h.irq_counts.clone(),
            steps: plan.steps.into(),
            expect: plan.expect,
            sync_port: None,
            wait: Wait::None,
            started: false,
            finished: false,
            status: Rc::new(Cell::new(None)),
        }
    }

    /// Final timed-side status, filled in at shutdown.
    pub fn status(&self) -> Rc<Cell<Option<HdlStatus>>> {
        self.status.clone()
    }

    fn waiting(&self) -> bool {
        match &self.wait {
            Wait::None => false,
            Wait::Regs(t) => self
                .reg_seqs
                .iter()
                .zip(t)
                .any(|(s, &t)| s.borrow().done_count() < t),
            Wait::Frames(t) => self.video_seqs[0].borrow().done_count() < *t,
        }
    }

    fn issue(&mut self, step: Step, ctx: &mut RunCtx<'_>) -> Result<(), UvmError> {
        match step {
            Step::Reg(ops) => {
                for (e, p) in ops {
                    let seq = self
                        .reg_seqs
                        .get(e)
                        .ok_or_else(|| UvmError::Config(format!("no register interface {e}")))?;
                    seq.borrow_mut().send(p);
                }
                let targets = self
                    .reg_seqs
                    .iter()
                    .map(|s| {
                        let s = s.borrow();
                        s.done_count() + s.pending_len() as u64
                    })
                    .collect();
                self.wait = Wait::Regs(targets);
            }
            Step::Frame(f) => {
                let seq = self
                    .video_seqs
                    .first()
                    .ok_or_else(|| UvmError::Config("no input video interface".into()))?;
                seq.borrow_mut().send(f);
                let target = seq.borrow().done_count() + seq.borrow().pending_len() as u64;
                self.wait = Wait::Frames(target);
            }
            Step::Sync(n) => {
                let port = self
                    .sync_port
                    .ok_or_else(|| ctx.fatal(format!("{VIDEO_SYNC_KEY} is not set")))?;
                let ret = self
                    .link
                    .borrow_mut()
                    .xtf_call(port, PackedBits::from_u128(32, n as u128)?)?;
                let got = ret.field(0, 32) as u32;
                if got < n {
                    ctx.error(format!("video sync: {got} of {n} frames completed"));
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut RunCtx<'_>) -> Result<(), UvmError> {
        let st = self.link.borrow_mut().shutdown()?;
        if st.hdl_errors > 0 {
            ctx.error(format!(
                "timed side counted {} protocol error(s)",
                st.hdl_errors
            ));
        }
        self.status.set(Some(st));
        Ok(())
    }
}

impl Component for PlanTest {
    fn build(&mut self, ctx: &mut BuildCtx<'_>) -> Result<(), UvmError> {
        if ctx.registry.contains(ctx.path, VIDEO_SYNC_KEY) {
            self.sync_port = Some(
                ctx.registry
                    .get::<BfmHandle>(ctx.path, VIDEO_SYNC_KEY)?
                    .port,
            );
        }
        Ok(())
    }

    fn run_step(&mut self, ctx: &mut RunCtx<'_>) -> Result<Activity, UvmError> {
        if self.finished {
            return Ok(Activity::Idle);
        }
        if !self.started {
            self.started = true;
            ctx.raise_objection();
        }
        if self.waiting() {
            return Ok(Activity::Busy);
        }
        self.wait = Wait::None;
        match self.steps.pop_front() {
            Some(step) => self.issue(step, ctx)?,
            None => {
                self.finish(ctx)?;
                self.finished = true;
                ctx.drop_objection()?;
            }
        }
        Ok(Activity::Busy)
    }

    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        if let Some(st) = self.status.get() {
            ctx.observe_cycles(st.final_cycle);
        }
        if let Some(n) = self.expect.frames {
            let got = self.frames_out.borrow().len() as u64;
            if got != n {
                ctx.error(format!("{got} frames out, {n} expected"));
            }
            for (d, c) in self.irq_counts.iter().enumerate() {
                if c.get() != n {
                    ctx.error(format!(
                        "irq line {d} pulsed {} times, {n} expected",
                        c.get()
                    ));
                }
            }
        }
        let m = self.model.borrow();
        for (name, want) in &self.expect.mirror {
            match m.mirror(name) {
                Ok(v) if v == *want => {}
                Ok(v) => ctx.error(format!("{name} mirrors {v}, expected {want}")),
                Err(e) => ctx.error(e.to_string()),
            }
        }
    }
}
