use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::codec::{FrameTxn, RegPacket};
use crate::dut::REGFILE_WORDS;
use crate::uvm::{BindingRegistry, Component, ComponentTree, Container, ReportCtx, Sequencer};
use crate::vip::{
    ports, BfmHandle, FrameScoreboard, IrqMonitorProxy, LinkHandle, RegDriverProxy, RegModel,
    RegMonitorProxy, RegScoreboard, ShadowRegFile, VideoInDriverProxy, VideoOutMonitorProxy,
    DRIVER_BFM_KEY, MONITOR_BFM_KEY, VIDEO_SYNC_KEY,
};

use super::config::{DutKind, HdlConfig};
use super::coverage::CoverageDb;
use super::RunError;

/// Name of the tree root; the test component sits there.
pub const TEST_TOP: &str = "uvm_test_top";

/// Shared handles into a built environment, for the test and the runner.
pub struct EnvHandles {
    pub link: LinkHandle,
    /// One sequencer per register interface.
    pub reg_seqs: Vec<Rc<RefCell<Sequencer<RegPacket>>>>,
    /// One sequencer per input video interface.
    pub video_seqs: Vec<Rc<RefCell<Sequencer<FrameTxn>>>>,
    /// Register model of the design behind interface 0.
    pub model: Rc<RefCell<RegModel>>,
    pub reg_scoreboards: Vec<Rc<RefCell<RegScoreboard>>>,
    pub frame_scoreboard: Option<Rc<RefCell<FrameScoreboard>>>,
    pub coverage: Rc<RefCell<CoverageDb>>,
    /// Monitor log lines per register interface.
    pub txn_logs: Vec<Rc<RefCell<Vec<String>>>>,
    /// Frames seen by output monitor 0.
    pub frames_out: Rc<RefCell<Vec<FrameTxn>>>,
    pub irq_counts: Vec<Rc<Cell<u64>>>,
}

/// Reports the coverage summary line at REPORT.
struct CoverageCollector(Rc<RefCell<CoverageDb>>);

impl Component for CoverageCollector {
    fn report(&mut self, ctx: &mut ReportCtx<'_>) {
        let c = self.0.borrow();
        ctx.info(format!(
            "coverage {}/{} bins, {} hits",
            c.bins_hit(),
            super::coverage::BINS.len(),
            c.total_hits()
        ));
    }
}

fn uvm(e: crate::uvm::UvmError) -> RunError {
    RunError::Uvm(e.to_string())
}

/// Builds the test component once the environment handles exist.
pub type TestFactory = Box<dyn FnOnce(&EnvHandles) -> Box<dyn Component>>;

/// Builds the component tree for `cfg` under `test` and performs every
/// registry binding. Proxies resolve their bindings during BUILD.
///
/// `reg_words` sizes the register model when the design is a register
/// file.
pub fn build_env(
    cfg: &HdlConfig,
    link: LinkHandle,
    reg_words: u32,
    test: TestFactory,
) -> Result<(ComponentTree, BindingRegistry, EnvHandles), RunError> {
    let env = cfg.env;
    env.validate()?;
    if cfg.dut == DutKind::Isp && (env.a == 0 || env.c == 0) {
        return Err(RunError::Config(
            "the image pipeline needs A >= 1 and C >= 1".into(),
        ));
    }
    let mut reg = BindingRegistry::new();
    let model = Rc::new(RefCell::new(match cfg.dut {
        DutKind::RegFile => RegModel::regfile_map(0, reg_words.min(REGFILE_WORDS as u32) as usize),
        DutKind::Isp => RegModel::isp_map(0, env.r as usize),
    }));
    let coverage = Rc::new(RefCell::new(CoverageDb::new()));
    let frames_out = Rc::new(RefCell::new(Vec::new()));

    let mut parts: Vec<(String, Box<dyn Component>)> = Vec::new();
    let mut reg_seqs = Vec::new();
    let mut reg_scoreboards = Vec::new();
    let mut txn_logs = Vec::new();
    for e in 0..env.e as usize {
        let agent = format!("env.reg_agent{e}");
        let drv = RegDriverProxy::new(link.clone());
        let mon = RegMonitorProxy::new(link.clone());
        reg_seqs.push(drv.sequencer());

        let mut sb = RegScoreboard::new();
        if e > 0 || cfg.dut == DutKind::RegFile {
            sb = sb.with_reference(ShadowRegFile::new(0, REGFILE_WORDS as u32));
        }
        if e == 0 {
            sb = sb.with_model(model.clone());
            if cfg.dut == DutKind::RegFile {
                sb = sb.with_mirror_audit();
            }
        }
        let sb = Rc::new(RefCell::new(sb));
        let s = sb.clone();
        drv.responses()
            .borrow_mut()
            .subscribe(move |p| s.borrow_mut().on_driver_response(p));
        let s = sb.clone();
        let cov = coverage.clone();
        let log = Rc::new(RefCell::new(Vec::new()));
        let l = log.clone();
        mon.analysis_port().borrow_mut().subscribe(move |t| {
            s.borrow_mut().on_monitor(t);
            cov.borrow_mut().sample_txn(t);
            l.borrow_mut().push(t.to_string());
        });
        txn_logs.push(log);
        reg_scoreboards.push(sb.clone());

        reg.set(
            &format!("{TEST_TOP}.{agent}.driver"),
            DRIVER_BFM_KEY,
            BfmHandle::single(ports::reg_drv(e as u16)),
        )
        .map_err(uvm)?;
        reg.set(
            &format!("{TEST_TOP}.{agent}.monitor"),
            MONITOR_BFM_KEY,
            BfmHandle::single(ports::reg_mon(e as u16)),
        )
        .map_err(uvm)?;
        parts.push((agent.clone(), Box::new(Container)));
        parts.push((format!("{agent}.driver"), Box::new(drv)));
        parts.push((format!("{agent}.monitor"), Box::new(mon)));
        parts.push((format!("env.reg_scoreboard{e}"), Box::new(sb)));
    }

    let frame_sb = (cfg.dut == DutKind::Isp).then(|| {
        Rc::new(RefCell::new(FrameScoreboard::new(
            model.clone(),
            env.r as usize,
        )))
    });
    let mut video_seqs = Vec::new();
    for m in 0..env.m() {
        let agent = format!("env.video_agent{m}");
        parts.push((agent.clone(), Box::new(Container)));
        if m < env.a {
            let drv = VideoInDriverProxy::new(link.clone(), cfg.stream_depth);
            video_seqs.push(drv.sequencer());
            if m == 0 {
                if let Some(fsb) = &frame_sb {
                    let s = fsb.clone();
                    drv.sent_port()
                        .borrow_mut()
                        .subscribe(move |f| s.borrow_mut().on_input(f));
                }
            }
            reg.set(
                &format!("{TEST_TOP}.{agent}.driver"),
                DRIVER_BFM_KEY,
                BfmHandle::pair(ports::vid_hdr(m as u16), ports::vid_pix(m as u16)),
            )
            .map_err(uvm)?;
            parts.push((format!("{agent}.driver"), Box::new(drv)));
        }
        if m < env.c {
            let mon = VideoOutMonitorProxy::new(link.clone());
            if m == 0 {
                let cov = coverage.clone();
                let fo = frames_out.clone();
                let fsb = frame_sb.clone();
                mon.analysis_port().borrow_mut().subscribe(move |f| {
                    if let Some(s) = &fsb {
                        s.borrow_mut().on_output(f);
                    }
                    cov.borrow_mut().sample_frame(f);
                    fo.borrow_mut().push(f.clone());
                });
            }
            reg.set(
                &format!("{TEST_TOP}.{agent}.monitor"),
                MONITOR_BFM_KEY,
                BfmHandle::pair(ports::out_hdr(m as u16), ports::out_pix(m as u16)),
            )
            .map_err(uvm)?;
            parts.push((format!("{agent}.monitor"), Box::new(mon)));
        }
    }

    let mut irq_counts = Vec::new();
    for d in 0..env.d as usize {
        let path = format!("env.irq_monitor{d}");
        let mon = IrqMonitorProxy::new(link.clone());
        irq_counts.push(mon.counter());
        reg.set(
            &format!("{TEST_TOP}.{path}"),
            MONITOR_BFM_KEY,
            BfmHandle::single(ports::irq(d as u16)),
        )
        .map_err(uvm)?;
        parts.push((path, Box::new(mon)));
    }
    if let Some(s) = &frame_sb {
        parts.push(("env.frame_scoreboard".into(), Box::new(s.clone())));
    }
    parts.push((
        "env.coverage".into(),
        Box::new(CoverageCollector(coverage.clone())),
    ));
    if env.c > 0 {
        reg.set(
            TEST_TOP,
            VIDEO_SYNC_KEY,
            BfmHandle::single(ports::VIDEO_SYNC),
        )
        .map_err(uvm)?;
    }

    let handles = EnvHandles {
        link,
        reg_seqs,
        video_seqs,
        model,
        reg_scoreboards,
        frame_scoreboard: frame_sb,
        coverage,
        txn_logs,
        frames_out,
        irq_counts,
    };
    let mut tree = ComponentTree::new(TEST_TOP, test(&handles)).map_err(uvm)?;
    let env_node = tree
        .add_child(tree.root(), "env", Box::new(Container))
        .map_err(uvm)?;
    for (path, comp) in parts {
        let (parent, name) = match path.rsplit_once('.') {
            Some((p, n)) => (p, n),
            None => ("", path.as_str()),
        };
        let parent_id = if parent == "env" {
            env_node
        } else {
            tree.find(&format!("{TEST_TOP}.{parent}"))
                .ok_or_else(|| RunError::Uvm(format!("no parent {parent} for {name}")))?
        };
        tree.add_child(parent_id, name, comp).map_err(uvm)?;
    }
    Ok((tree, reg, handles))
}
