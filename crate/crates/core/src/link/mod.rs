//! Transaction link between the untimed testbench side (HVL) and the
//! cycle-accurate side (HDL).
//!
//! The link carries [`Message`]s over a [`transport::FrameTransport`], in
//! process or across a socket, using the bit-exact framing in [`wire`].
//! Reactive ports model remotely callable timed tasks; streaming ports model
//! one-way pipes. Time on the HDL side advances only inside directives the
//! HVL side issues: a reactive call, or an explicit `advance`.

pub mod hdl;
pub mod hvl;
pub mod transport;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use std::thread::JoinHandle;

use thiserror::Error;

use crate::codec::{CodecError, PackedBits};
use hdl::{HdlServer, ServerReport};
use hvl::HvlLink;
use transport::{inproc_pair, FrameTransport};

/// Message type codes as they appear on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    XtfCall = 0,
    XtfReturn = 1,
    StreamIn = 2,
    StreamOut = 3,
    CycleTick = 4,
    CycleAck = 5,
    RunCycles = 6,
    Shutdown = 7,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::XtfCall,
        MsgType::XtfReturn,
        MsgType::StreamIn,
        MsgType::StreamOut,
        MsgType::CycleTick,
        MsgType::CycleAck,
        MsgType::RunCycles,
        MsgType::Shutdown,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::XtfCall => "XTF_CALL",
            MsgType::XtfReturn => "XTF_RETURN",
            MsgType::StreamIn => "STREAM_IN",
            MsgType::StreamOut => "STREAM_OUT",
            MsgType::CycleTick => "CYCLE_TICK",
            MsgType::CycleAck => "CYCLE_ACK",
            MsgType::RunCycles => "RUN_CYCLES",
            MsgType::Shutdown => "SHUTDOWN",
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One framed unit crossing the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_type: MsgType,
    pub port_id: u16,
    pub payload: PackedBits,
}

/// Payload width of `RUN_CYCLES`.
pub const RUN_CYCLES_WIDTH: u32 = 32;

/// Port used by control messages (tick, ack, run, shutdown).
pub const CONTROL_PORT: u16 = 0;
/// HDL→HVL: stream-in consumption report, `port(16) | count(32)`.
pub const CREDIT_PORT: u16 = 0xffff;
/// HDL→HVL: final status at shutdown, `sim_time(64) | hdl_errors(32)`.
pub const STATUS_PORT: u16 = 0xfffe;
/// HDL→HVL: fatal error, `cycle(64)` followed by UTF-8 text. The only
/// variable-width port.
pub const ERROR_PORT: u16 = 0xfffd;

pub const CREDIT_WIDTH: u32 = 48;
pub const STATUS_WIDTH: u32 = 96;

/// Default stream queue depth, in messages.
pub const DEFAULT_STREAM_DEPTH: u32 = 1024;

impl Message {
    pub fn new(msg_type: MsgType, port_id: u16, payload: PackedBits) -> Self {
        Self {
            msg_type,
            port_id,
            payload,
        }
    }

    pub fn control(msg_type: MsgType) -> Self {
        Self::new(msg_type, CONTROL_PORT, PackedBits::empty())
    }

    pub fn run_cycles(n: u32) -> Self {
        Self::new(
            MsgType::RunCycles,
            CONTROL_PORT,
            PackedBits::from_u128(RUN_CYCLES_WIDTH, n as u128).expect("32-bit count"),
        )
    }

    pub(crate) fn error_report(cycle: u64, text: &str) -> Self {
        let mut bytes = cycle.to_be_bytes().to_vec();
        bytes.extend_from_slice(text.as_bytes());
        let width = bytes.len() as u32 * 8;
        Self::new(
            MsgType::StreamOut,
            ERROR_PORT,
            PackedBits::from_bytes(width, bytes).expect("byte-aligned"),
        )
    }

    pub(crate) fn parse_error_report(&self) -> (u64, String) {
        let b = self.payload.as_bytes();
        if b.len() < 8 {
            return (0, String::from_utf8_lossy(b).into_owned());
        }
        let cycle = u64::from_be_bytes(b[..8].try_into().unwrap());
        (cycle, String::from_utf8_lossy(&b[8..]).into_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    HvlToHdl,
    HdlToHvl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortKind {
    Reactive,
    Streaming,
}

/// Declaration of one link port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortDecl {
    pub port_id: u16,
    pub direction: Direction,
    pub kind: PortKind,
    pub payload_width: u32,
    /// Width of the reply; reactive ports only.
    pub return_width: Option<u32>,
}

impl PortDecl {
    pub fn reactive(port_id: u16, payload_width: u32, return_width: u32) -> Self {
        Self {
            port_id,
            direction: Direction::HvlToHdl,
            kind: PortKind::Reactive,
            payload_width,
            return_width: Some(return_width),
        }
    }

    pub fn stream(port_id: u16, direction: Direction, payload_width: u32) -> Self {
        Self {
            port_id,
            direction,
            kind: PortKind::Streaming,
            payload_width,
            return_width: None,
        }
    }
}

/// Port declarations for one link, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortTable {
    ports: BTreeMap<u16, PortDecl>,
}

impl PortTable {
    pub fn new(decls: impl IntoIterator<Item = PortDecl>) -> Result<Self, LinkError> {
        let mut t = Self::default();
        for d in decls {
            t.insert(d)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, d: PortDecl) -> Result<(), LinkError> {
        if matches!(
            d.port_id,
            CONTROL_PORT | CREDIT_PORT | STATUS_PORT | ERROR_PORT
        ) {
            return Err(LinkError::Usage(format!(
                "port id {:#06x} is reserved",
                d.port_id
            )));
        }
        match (d.kind, d.direction, d.return_width) {
            (PortKind::Reactive, Direction::HvlToHdl, Some(_)) => {}
            (PortKind::Reactive, _, _) => {
                return Err(LinkError::Usage(format!(
                    "reactive port {} must be HVL_TO_HDL with a return width",
                    d.port_id
                )))
            }
            (PortKind::Streaming, _, None) => {}
            (PortKind::Streaming, _, Some(_)) => {
                return Err(LinkError::Usage(format!(
                    "streaming port {} cannot have a return payload",
                    d.port_id
                )))
            }
        }
        if self.ports.insert(d.port_id, d).is_some() {
            return Err(LinkError::Usage(format!("duplicate port id {}", d.port_id)));
        }
        Ok(())
    }

    pub fn get(&self, port_id: u16) -> Result<&PortDecl, LinkError> {
        self.ports
            .get(&port_id)
            .ok_or(LinkError::UnknownPort(port_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.values()
    }
}

/// Synchronization mode, fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkMode {
    /// One round trip per clock cycle.
    Lockstep,
    /// One round trip per transaction or `advance` directive.
    Transactional,
}

impl LinkMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkMode::Lockstep => "lockstep",
            LinkMode::Transactional => "txn",
        }
    }
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lockstep" => Ok(LinkMode::Lockstep),
            "txn" | "transactional" => Ok(LinkMode::Transactional),
            other => Err(format!("unknown link mode `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("framing: {0}")]
    Framing(String),
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
    #[error("link closed")]
    Closed,
    #[error("usage: {0}")]
    Usage(String),
    #[error("remote fault at cycle {cycle}: {message}")]
    Remote { cycle: u64, message: String },
    #[error("port {port}: payload is {actual} bits, port declares {expected}")]
    PayloadWidth {
        port: u16,
        expected: u32,
        actual: u32,
    },
    #[error("unknown port {0}")]
    UnknownPort(u16),
    #[error("stream port {port} is full ({depth} messages in flight)")]
    Backpressure { port: u16, depth: u32 },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

pub(crate) fn check_width(port: u16, expected: u32, payload: &PackedBits) -> Result<(), LinkError> {
    if payload.width() != expected {
        return Err(LinkError::PayloadWidth {
            port,
            expected,
            actual: payload.width(),
        });
    }
    Ok(())
}

/// Runs a timed side on its own thread, connected through an in-process
/// channel. The server is built on that thread since models share state
/// through `Rc`.
pub fn spawn_inproc<F>(
    mode: LinkMode,
    ports: PortTable,
    build: F,
) -> (HvlLink, JoinHandle<Result<ServerReport, LinkError>>)
where
    F: FnOnce() -> Result<HdlServer, LinkError> + Send + 'static,
{
    let (hvl_end, mut hdl_end) = inproc_pair();
    let handle = std::thread::spawn(move || {
        let mut server = build()?;
        server.serve(&mut hdl_end)?;
        Ok(server.into_report())
    });
    (HvlLink::new(Box::new(hvl_end), mode, ports), handle)
}

/// Serves one session over any transport and returns the timed side's
/// report.
pub fn serve_session<T: FrameTransport + ?Sized>(
    mut server: HdlServer,
    transport: &mut T,
) -> Result<ServerReport, LinkError> {
    server.serve(transport)?;
    Ok(server.into_report())
}


#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn msg_type_codes() {
        for (i, t) in MsgType::ALL.iter().enumerate() {
            assert_eq!(*t as u8, i as u8);
            assert_eq!(MsgType::from_code(i as u8), Some(*t));
        }
        assert_eq!(MsgType::from_code(8), None);
    }

    #[test]
    fn port_table_rules() {
        assert!(
            PortTable::new([PortDecl::reactive(1, 8, 8), PortDecl::reactive(1, 8, 8)]).is_err()
        );
        let bad = PortDecl {
            direction: Direction::HdlToHvl,
            ..PortDecl::reactive(2, 8, 8)
        };
        assert!(PortTable::new([bad]).is_err());
        assert!(PortTable::new([PortDecl::reactive(STATUS_PORT, 8, 8)]).is_err());
        let t = PortTable::new([PortDecl::stream(3, Direction::HdlToHvl, 32)]).unwrap();
        assert!(t.get(3).is_ok());
        assert!(matches!(t.get(4), Err(LinkError::UnknownPort(4))));
    }

    #[test]
    fn error_report_round_trip() {
        let m = Message::error_report(42, "boom");
        assert_eq!(m.parse_error_report(), (42, "boom".to_string()));
    }
}
