//! Acceleratable verification components. Each agent is split into a timed
//! BFM that runs as kernel processes on the HDL side and an untimed proxy
//! on the testbench side; the two halves talk only through link ports.
//!
//! Proxies find their BFM through the binding registry: the environment
//! binds a handle naming the link port under `(proxy path, key)` before
//! BUILD, and the proxy looks it up during BUILD.

mod reg_bfm;
mod reg_proxy;
mod regmodel;
mod scoreboard;
mod video_bfm;
mod video_proxy;

use std::cell::RefCell;
use std::rc::Rc;

pub use reg_bfm::{
    decode_monitor_sample, encode_monitor_sample, RegDriverBfm, RegDriverConfig, RegMonitorBfm,
    DEFAULT_RESPONSE_TIMEOUT, MONITOR_SAMPLE_WIDTH,
};
pub use reg_proxy::{MonitoredTxn, RegDriverProxy, RegMonitorProxy};
pub use regmodel::{Access, RegMapError, RegModel, Register};
pub use scoreboard::{FrameScoreboard, RegScoreboard, ShadowRegFile};
pub use video_bfm::{
    FrameCounter, IrqMonitorBfm, VideoInBfm, VideoOutBfm, VideoSyncTask, DRIVE_OFFSET,
};
pub use video_proxy::{IrqMonitorProxy, VideoInDriverProxy, VideoOutMonitorProxy};

use crate::link::hvl::HvlLink;

/// The testbench side's link, shared by every proxy of one environment.
pub type LinkHandle = Rc<RefCell<HvlLink>>;

/// Registry key under which a register driver proxy finds its BFM.
pub const DRIVER_BFM_KEY: &str = "driver_bfm_if";
/// Registry key under which a monitor proxy finds its BFM.
pub const MONITOR_BFM_KEY: &str = "monitor_bfm_if";
/// Registry key for the test's video synchronization task.
pub const VIDEO_SYNC_KEY: &str = "video_sync_if";

/// Stand-in for a virtual interface: the link port(s) a BFM is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BfmHandle {
    pub port: u16,
    /// Second port for agents that split header and payload.
    pub data_port: Option<u16>,
}

impl BfmHandle {
    pub fn single(port: u16) -> Self {
        Self {
            port,
            data_port: None,
        }
    }

    pub fn pair(port: u16, data_port: u16) -> Self {
        Self {
            port,
            data_port: Some(data_port),
        }
    }
}

/// Link port numbering shared by both sides.
pub mod ports {
    /// Echo task used for link smoke tests.
    pub const ECHO: u16 = 0x0001;
    /// Completes when the output BFM reaches a frame count.
    pub const VIDEO_SYNC: u16 = 0x0700;

    pub const fn reg_drv(e: u16) -> u16 {
        0x0100 + e
    }

    pub const fn reg_mon(e: u16) -> u16 {
        0x0200 + e
    }

    pub const fn vid_hdr(i: u16) -> u16 {
        0x0300 + i
    }

    pub const fn vid_pix(i: u16) -> u16 {
        0x0380 + i
    }

    pub const fn out_hdr(i: u16) -> u16 {
        0x0400 + i
    }

    pub const fn out_pix(i: u16) -> u16 {
        0x0480 + i
    }

    pub const fn irq(d: u16) -> u16 {
        0x0600 + d
    }
}
