//! Untimed testbench component model: hierarchy, phases, sequencer
//! handshake, analysis broadcast and the binding registry.
//!
//! Nothing here advances simulated time. Components run cooperatively; the
//! only place a component may block is waiting for a link reply.

mod analysis;
mod component;
mod registry;
mod report;
mod sequencer;

pub use analysis::AnalysisPort;
pub use component::{
    Activity, BuildCtx, Component, ComponentTree, ConnectCtx, Container, NodeId, Phase, ReportCtx,
    RunCtx,
};
pub use registry::BindingRegistry;
pub use report::{ReportEntry, ReportSummary, Reporter, Severity};
pub use sequencer::{NextItem, Sequencer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UvmError {
    #[error("fatal at {path}: {message}")]
    Fatal { path: String, message: String },
    #[error("no binding for ({path}, {key})")]
    MissingBinding { path: String, key: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Link(#[from] crate::link::LinkError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}
