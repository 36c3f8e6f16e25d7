//! Cycle-accurate design models hosted by the kernel: a register file, a
//! chain of image-processing IPs with a reference model, and a knob that
//! adds per-cycle compute to emulate design size.
//!
//! Register-bus slave protocol: a request visible at cycle `c` is answered
//! by a one-cycle `r_req` pulse visible at `c + response_latency`.

mod bus;
mod complexity;
mod isp;
mod regfile;

pub use bus::{BusRequest, BusSlave, RegBusPins, RegTarget};
pub use complexity::ComplexityKnob;
pub use isp::{
    apply_golden_pipeline, IspConfig, IspRegs, SubsystemConfig, SubsystemDut, VideoPins,
    VideoSample, IP_STRIDE, ISP_ID_VALUE, REG_CLAMP_MAX, REG_CLAMP_MIN, REG_ENABLE, REG_FRAMES,
    REG_GAIN, REG_ID, REG_OFFSET,
};
pub use regfile::{RegFileConfig, RegFileDut, RegFileFault, RegFileStorage, REGFILE_WORDS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DutError {
    #[error("golden chain has {got} configs for {expected} IPs")]
    ChainLength { expected: usize, got: usize },
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}
