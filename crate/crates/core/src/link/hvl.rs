//! Testbench-side link endpoint.
//!
//! The testbench is untimed: it never steps a clock. Time on the timed side
//! moves only through the two directives exposed here, [`HvlLink::xtf_call`]
//! and [`HvlLink::advance`]. Everything else is non-blocking and leaves time
//! alone.

use std::collections::{BTreeMap, VecDeque};

use super::transport::FrameTransport;
use super::wire::{CaptureDir, CaptureEntry};
use super::{
    check_width, Direction, LinkError, LinkMode, Message, MsgType, PortKind, PortTable,
    CREDIT_PORT, CREDIT_WIDTH, DEFAULT_STREAM_DEPTH, ERROR_PORT, STATUS_PORT, STATUS_WIDTH,
};
use crate::codec::PackedBits;

/// Final state reported by the timed side at shutdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdlStatus {
    pub final_cycle: u64,
    /// Non-fatal errors counted by timed-side models (monitor protocol
    /// errors and the like).
    pub hdl_errors: u32,
}

/// Frame counters, indexed by message type code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub sent: [u64; 8],
    pub received: [u64; 8],
}

impl LinkStats {
    pub fn sent_of(&self, t: MsgType) -> u64 {
        self.sent[t as usize]
    }

    pub fn received_of(&self, t: MsgType) -> u64 {
        self.received[t as usize]
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn total_received(&self) -> u64 {
        self.received.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total_sent() + self.total_received()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Open,
    Calling(u16),
    Closed,
}

enum SyncPoint {
    Ack,
    Return(Message),
    Shutdown,
}

/// Handle for a call started with [`HvlLink::begin_call`].
#[must_use = "a started call must be finished"]
#[derive(Debug)]
pub struct CallTicket {
    port: u16,
}

pub const DEFAULT_MAX_CALL_TICKS: u64 = 1 << 24;

pub struct HvlLink {
    transport: Box<dyn FrameTransport>,
    mode: LinkMode,
    ports: PortTable,
    depth: u32,
    rx: BTreeMap<u16, VecDeque<PackedBits>>,
    uncredited: BTreeMap<u16, u32>,
    state: State,
    status: Option<HdlStatus>,
    stats: LinkStats,
    capture: Option<Vec<CaptureEntry>>,
}

impl HvlLink {
    pub fn new(transport: Box<dyn FrameTransport>, mode: LinkMode, ports: PortTable) -> Self {
        Self {
            transport,
            mode,
            ports,
            depth: DEFAULT_STREAM_DEPTH,
            rx: BTreeMap::new(),
            uncredited: BTreeMap::new(),
            state: State::Open,
            status: None,
            stats: LinkStats::default(),
            capture: None,
        }
    }

    pub fn with_stream_depth(mut self, depth: u32) -> Self {
        self.depth = depth.max(1);
        self
    }

    pub fn mode(&self) -> LinkMode {
        self.mode
    }

    pub fn ports(&self) -> &PortTable {
        &self.ports
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn status(&self) -> Option<HdlStatus> {
        self.status
    }

    pub fn is_closed(&self) -> bool {
        self.state == State::Closed
    }

    /// Starts recording every frame in both directions.
    pub fn enable_capture(&mut self) {
        self.capture.get_or_insert_with(Vec::new);
    }

    pub fn take_capture(&mut self) -> Vec<CaptureEntry> {
        self.capture
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }

    fn send(&mut self, m: Message) -> Result<(), LinkError> {
        if let Err(e) = self.transport.send(&m) {
            self.state = State::Closed;
            return Err(e);
        }
        self.stats.sent[m.msg_type as usize] += 1;
        if let Some(c) = self.capture.as_mut() {
            c.push(CaptureEntry {
                dir: CaptureDir::HvlToHdl,
                message: m,
            });
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, LinkError> {
        let m = match self.transport.recv() {
            Ok(m) => m,
            Err(e) => {
                self.state = State::Closed;
                return Err(e);
            }
        };
        self.stats.received[m.msg_type as usize] += 1;
        if let Some(c) = self.capture.as_mut() {
            c.push(CaptureEntry {
                dir: CaptureDir::HdlToHvl,
                message: m.clone(),
            });
        }
        Ok(m)
    }

    fn fail(&mut self, e: LinkError) -> LinkError {
        self.state = State::Closed;
        e
    }

    fn route_stream(&mut self, m: Message) -> Result<(), LinkError> {
        match m.port_id {
            CREDIT_PORT => {
                check_width(CREDIT_PORT, CREDIT_WIDTH, &m.payload)?;
                let port = m.payload.field(32, 16) as u16;
                let count = m.payload.field(0, 32) as u32;
                let slot = self.uncredited.entry(port).or_default();
                *slot = slot.saturating_sub(count);
            }
            STATUS_PORT => {
                check_width(STATUS_PORT, STATUS_WIDTH, &m.payload)?;
                self.status = Some(HdlStatus {
                    final_cycle: m.payload.field(32, 64),
                    hdl_errors: m.payload.field(0, 32) as u32,
                });
            }
            ERROR_PORT => {
                let (cycle, message) = m.parse_error_report();
                return Err(LinkError::Remote { cycle, message });
            }
            port => {
                let decl = *self.ports.get(port)?;
                if decl.kind != PortKind::Streaming || decl.direction != Direction::HdlToHvl {
                    return Err(LinkError::Protocol(format!(
                        "STREAM_OUT on port {port}, which is not an HDL_TO_HVL stream"
                    )));
                }
                check_width(port, decl.payload_width, &m.payload)?;
                self.rx.entry(port).or_default().push_back(m.payload);
            }
        }
        Ok(())
    }

    /// Reads frames until a synchronization point, queueing stream traffic
    /// on the way.
    fn recv_sync(&mut self) -> Result<SyncPoint, LinkError> {
        loop {
            let m = self.recv()?;
            match m.msg_type {
                MsgType::StreamOut => {
                    if let Err(e) = self.route_stream(m) {
                        return Err(self.fail(e));
                    }
                }
                MsgType::CycleAck => return Ok(SyncPoint::Ack),
                MsgType::XtfReturn => return Ok(SyncPoint::Return(m)),
                MsgType::Shutdown => return Ok(SyncPoint::Shutdown),
                other => {
                    return Err(self.fail(LinkError::Protocol(format!(
                        "unexpected {other} from the timed side"
                    ))))
                }
            }
        }
    }

    fn ensure_open(&self) -> Result<(), LinkError> {
        match self.state {
            State::Open => Ok(()),
            State::Calling(p) => Err(LinkError::Usage(format!(
                "call on port {p} is still in flight"
            ))),
            State::Closed => Err(LinkError::Closed),
        }
    }

    /// Blocking remote call of the task bound to a reactive port.
    pub fn xtf_call(&mut self, port: u16, payload: PackedBits) -> Result<PackedBits, LinkError> {
        let t = self.begin_call(port, payload)?;
        self.finish_call(t)
    }

    /// Sends the call without waiting for its return.
    pub fn begin_call(&mut self, port: u16, payload: PackedBits) -> Result<CallTicket, LinkError> {
        self.ensure_open()?;
        let decl = *self.ports.get(port)?;
        if decl.kind != PortKind::Reactive {
            return Err(LinkError::Usage(format!(
                "xtf_call on streaming port {port}"
            )));
        }
        check_width(port, decl.payload_width, &payload)?;
        self.send(Message::new(MsgType::XtfCall, port, payload))?;
        self.state = State::Calling(port);
        Ok(CallTicket { port })
    }

    pub fn finish_call(&mut self, ticket: CallTicket) -> Result<PackedBits, LinkError> {
        if self.state != State::Calling(ticket.port) {
            return Err(match self.state {
                State::Closed => LinkError::Closed,
                _ => LinkError::Usage("ticket does not match the call in flight".into()),
            });
        }
        let ret = match self.mode {
            LinkMode::Transactional => match self.recv_sync()? {
                SyncPoint::Return(m) => m,
                _ => return Err(self.fail(LinkError::Protocol("expected XTF_RETURN".into()))),
            },
            LinkMode::Lockstep => {
                let mut ticks = 0u64;
                loop {
                    if ticks >= DEFAULT_MAX_CALL_TICKS {
                        return Err(self.fail(LinkError::Protocol(format!(
                            "call on port {} did not return within {ticks} cycles",
                            ticket.port
                        ))));
                    }
                    self.send(Message::control(MsgType::CycleTick))?;
                    ticks += 1;
                    match self.recv_sync()? {
                        SyncPoint::Ack => continue,
                        SyncPoint::Return(m) => break m,
                        SyncPoint::Shutdown => {
                            return Err(self.fail(LinkError::Protocol(
                                "unexpected SHUTDOWN during call".into(),
                            )))
                        }
                    }
                }
            }
        };
        if ret.port_id != ticket.port {
            return Err(self.fail(LinkError::Protocol(format!(
                "return on port {} for call on port {}",
                ret.port_id, ticket.port
            ))));
        }
        let width = self.ports.get(ticket.port)?.return_width.expect("reactive");
        if let Err(e) = check_width(ticket.port, width, &ret.payload) {
            return Err(self.fail(e));
        }
        self.state = State::Open;
        Ok(ret.payload)
    }

    /// Queues a message on an HVL→HDL stream. Does not block and does not
    /// advance time; once `depth` messages are unconsumed the send is
    /// refused with [`LinkError::Backpressure`] and the caller keeps the
    /// message.
    pub fn stream_send(&mut self, port: u16, payload: PackedBits) -> Result<(), LinkError> {
        self.ensure_open()?;
        let decl = *self.ports.get(port)?;
        if decl.kind != PortKind::Streaming || decl.direction != Direction::HvlToHdl {
            return Err(LinkError::Usage(format!(
                "stream_send on port {port}, which is not an HVL_TO_HDL stream"
            )));
        }
        check_width(port, decl.payload_width, &payload)?;
        let used = self.uncredited.get(&port).copied().unwrap_or(0);
        if used >= self.depth {
            return Err(LinkError::Backpressure {
                port,
                depth: self.depth,
            });
        }
        self.send(Message::new(MsgType::StreamIn, port, payload))?;
        *self.uncredited.entry(port).or_default() += 1;
        Ok(())
    }

    /// Messages sent on `port` that the timed side has not consumed yet, as
    /// of the last synchronization point.
    pub fn stream_in_flight(&self, port: u16) -> u32 {
        self.uncredited.get(&port).copied().unwrap_or(0)
    }

    /// Next delivered message on an HDL→HVL stream, if any. Never blocks.
    pub fn stream_recv_ready(&mut self, port: u16) -> Result<Option<PackedBits>, LinkError> {
        let decl = self.ports.get(port)?;
        if decl.kind != PortKind::Streaming || decl.direction != Direction::HdlToHvl {
            return Err(LinkError::Usage(format!(
                "stream_recv on port {port}, which is not an HDL_TO_HVL stream"
            )));
        }
        Ok(self.rx.get_mut(&port).and_then(VecDeque::pop_front))
    }

    /// Lets the timed side run `n` cycles.
    pub fn advance(&mut self, n: u64) -> Result<(), LinkError> {
        self.ensure_open()?;
        match self.mode {
            LinkMode::Lockstep => {
                for _ in 0..n {
                    self.send(Message::control(MsgType::CycleTick))?;
                    self.expect_ack()?;
                }
            }
            LinkMode::Transactional => {
                let mut left = n;
                while left > 0 {
                    let chunk = left.min(u32::MAX as u64) as u32;
                    self.send(Message::run_cycles(chunk))?;
                    self.expect_ack()?;
                    left -= chunk as u64;
                }
            }
        }
        Ok(())
    }

    fn expect_ack(&mut self) -> Result<(), LinkError> {
        match self.recv_sync()? {
            SyncPoint::Ack => Ok(()),
            _ => Err(self.fail(LinkError::Protocol("expected CYCLE_ACK".into()))),
        }
    }

    /// Ends the session. A second call is a no-op returning the same status.
    pub fn shutdown(&mut self) -> Result<HdlStatus, LinkError> {
        match self.state {
            State::Closed => {
                return self.status.ok_or(LinkError::Closed);
            }
            State::Calling(p) => {
                return Err(LinkError::Usage(format!(
                    "shutdown while call on port {p} is in flight"
                )))
            }
            State::Open => {}
        }
        self.send(Message::control(MsgType::Shutdown))?;
        if !matches!(self.recv_sync()?, SyncPoint::Shutdown) {
            return Err(self.fail(LinkError::Protocol(
                "expected SHUTDOWN acknowledgement".into(),
            )));
        }
        self.state = State::Closed;
        self.status
            .ok_or_else(|| LinkError::Protocol("timed side sent no final status".into()))
    }
}
