use std::cell::RefCell;
use std::rc::Rc;

use crate::dut::{
    ComplexityKnob, RegBusPins, RegFileConfig, RegFileDut, RegFileFault, SubsystemConfig,
    SubsystemDut, VideoPins,
};
use crate::kernel::{Kernel, KernelConfig, ResetGen, SimError};
use crate::link::hdl::{EchoTask, HdlServer};
use crate::link::{Direction, LinkError, PortDecl, PortTable};
use crate::vip::{
    ports, IrqMonitorBfm, RegDriverBfm, RegDriverConfig, RegMonitorBfm, VideoInBfm, VideoOutBfm,
    VideoSyncTask, MONITOR_SAMPLE_WIDTH,
};

use super::config::{DutKind, HdlConfig};

/// Port declarations for a configuration. Both sides derive the table
/// from the same config.
pub fn port_table(cfg: &HdlConfig) -> Result<PortTable, LinkError> {
    let e = &cfg.env;
    let mut decls = vec![PortDecl::reactive(ports::ECHO, 105, 105)];
    for i in 0..e.e as u16 {
        decls.push(PortDecl::reactive(ports::reg_drv(i), 105, 105));
        decls.push(PortDecl::stream(
            ports::reg_mon(i),
            Direction::HdlToHvl,
            MONITOR_SAMPLE_WIDTH,
        ));
    }
    for i in 0..e.a as u16 {
        decls.push(PortDecl::stream(ports::vid_hdr(i), Direction::HvlToHdl, 48));
        decls.push(PortDecl::stream(ports::vid_pix(i), Direction::HvlToHdl, 32));
    }
    for i in 0..e.c as u16 {
        decls.push(PortDecl::stream(ports::out_hdr(i), Direction::HdlToHvl, 48));
        decls.push(PortDecl::stream(ports::out_pix(i), Direction::HdlToHvl, 32));
    }
    for d in 0..e.d as u16 {
        decls.push(PortDecl::stream(ports::irq(d), Direction::HdlToHvl, 32));
    }
    if e.c > 0 {
        decls.push(PortDecl::reactive(ports::VIDEO_SYNC, 32, 32));
    }
    PortTable::new(decls)
}

/// Timed-side observations only available when the server runs in this
/// process.
#[derive(Debug, Default)]
pub struct HdlProbes {
    /// Per input interface, the cycles at which frames were accepted.
    pub accepted: Vec<Rc<RefCell<Vec<u64>>>>,
}

impl HdlProbes {
    pub fn accepted_cycles(&self) -> Vec<Vec<u64>> {
        self.accepted.iter().map(|a| a.borrow().clone()).collect()
    }
}

fn sim(e: SimError) -> LinkError {
    LinkError::Usage(e.to_string())
}

/// Builds the timed top level: pins, design, BFMs and link bindings.
///
/// Register interface 0 reaches the configured design; further interfaces
/// each reach a private register file. Video input 0 and output 0 connect
/// to the image pipeline; other video interfaces are left unconnected.
pub fn build_hdl(cfg: &HdlConfig) -> Result<(HdlServer, HdlProbes), LinkError> {
    let env = &cfg.env;
    env.validate()
        .map_err(|e| LinkError::Usage(e.to_string()))?;
    let mut k = Kernel::new(KernelConfig {
        reset: ResetGen {
            assert_cycles: cfg.reset_cycles,
            active_low: true,
        },
        ..KernelConfig::default()
    })
    .map_err(sim)?;
    if cfg.trace {
        k.enable_trace();
    }

    let buses: Vec<RegBusPins> = (0..env.e)
        .map(|i| RegBusPins::add(&mut k, &format!("reg{i}")))
        .collect::<Result<_, _>>()
        .map_err(sim)?;
    let vin: Vec<VideoPins> = (0..env.a)
        .map(|i| VideoPins::add(&mut k, &format!("vin{i}")))
        .collect::<Result<_, _>>()
        .map_err(sim)?;
    let vout: Vec<VideoPins> = (0..env.c)
        .map(|i| VideoPins::add(&mut k, &format!("vout{i}")))
        .collect::<Result<_, _>>()
        .map_err(sim)?;

    let mut irq_lines = Vec::new();
    match cfg.dut {
        DutKind::RegFile => {
            let rf = RegFileDut::new(
                buses[0],
                RegFileConfig {
                    base: 0,
                    response_latency: cfg.response_latency,
                    fault: cfg.fault,
                },
            )
            .map_err(sim)?;
            rf.register(&mut k, "dut.reg0").map_err(sim)?;
        }
        DutKind::Isp => {
            if env.a == 0 || env.c == 0 {
                return Err(LinkError::Usage(
                    "the image pipeline needs A >= 1 and C >= 1".into(),
                ));
            }
            let sub = SubsystemDut::new(
                &mut k,
                &SubsystemConfig {
                    ips: env.r as usize,
                    base: 0,
                    response_latency: cfg.response_latency,
                    pipeline_latency: cfg.pipeline_latency,
                    reset: Vec::new(),
                },
                buses[0],
                vin[0],
                vout[0],
            )
            .map_err(sim)?;
            irq_lines = sub.irq_lines();
            sub.register(&mut k, "dut.isp").map_err(sim)?;
        }
    }
    for (i, bus) in buses.iter().enumerate().skip(1) {
        let rf = RegFileDut::new(
            *bus,
            RegFileConfig {
                base: 0,
                response_latency: cfg.response_latency,
                fault: RegFileFault::None,
            },
        )
        .map_err(sim)?;
        rf.register(&mut k, &format!("dut.reg{i}")).map_err(sim)?;
    }
    while irq_lines.len() < env.d as usize {
        let n = irq_lines.len();
        irq_lines.push(
            k.add_signal(&format!("irq{n}.tied_low"), 1, 0)
                .map_err(sim)?,
        );
    }
    ComplexityKnob::new(cfg.gate_factor)
        .register(&mut k, "knob")
        .map_err(sim)?;

    let mut server = HdlServer::new(k, cfg.mode, port_table(cfg)?);
    server.bind_task(ports::ECHO, Box::new(EchoTask::default()))?;
    let drv_cfg = RegDriverConfig {
        timeout: cfg.timeout,
        bus_gap: cfg.bus_gap,
        wait_for_reset: true,
    };
    for (i, bus) in buses.iter().enumerate() {
        let e = i as u16;
        RegDriverBfm::install(
            &mut server,
            &format!("bfm.reg{i}.drv"),
            *bus,
            ports::reg_drv(e),
            drv_cfg,
        )?;
        RegMonitorBfm::install(
            &mut server,
            &format!("bfm.reg{i}.mon"),
            *bus,
            ports::reg_mon(e),
        )?;
    }
    let mut probes = HdlProbes::default();
    for (i, pins) in vin.iter().enumerate() {
        let n = i as u16;
        probes.accepted.push(VideoInBfm::install(
            &mut server,
            &format!("bfm.vin{i}"),
            *pins,
            ports::vid_hdr(n),
            ports::vid_pix(n),
            cfg.stream_depth,
        )?);
    }
    let mut counters = Vec::new();
    for (i, pins) in vout.iter().enumerate() {
        let n = i as u16;
        counters.push(VideoOutBfm::install(
            &mut server,
            &format!("bfm.vout{i}"),
            *pins,
            ports::out_hdr(n),
            ports::out_pix(n),
        )?);
    }
    for (d, &line) in irq_lines.iter().enumerate().take(env.d as usize) {
        IrqMonitorBfm::install(
            &mut server,
            &format!("bfm.irq{d}"),
            line,
            ports::irq(d as u16),
        )?;
    }
    if let Some(c) = counters.first() {
        server.bind_task(
            ports::VIDEO_SYNC,
            Box::new(VideoSyncTask::new(c.clone(), cfg.sync_limit)),
        )?;
    }
    Ok((server, probes))
}
