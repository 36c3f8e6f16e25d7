//! Timed-side link endpoint.
//!
//! [`HdlServer`] owns the simulation kernel and answers link directives.
//! Reactive ports are bound to [`XtfTask`]s: a call starts the task, then the
//! kernel is stepped until the task reports completion. In transactional
//! mode that loop runs locally; in lockstep mode each step waits for a
//! `CYCLE_TICK` from the testbench side.
//!
//! Models push HDL→HVL stream messages into a shared [`StreamOutbox`]; the
//! server flushes it, in generation order, at the end of every directive.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use super::transport::FrameTransport;
use super::{
    check_width, Direction, LinkError, LinkMode, Message, MsgType, PortKind, PortTable,
    CREDIT_WIDTH, RUN_CYCLES_WIDTH, STATUS_PORT, STATUS_WIDTH,
};
use crate::codec::{BitWriter, PackedBits};
use crate::kernel::{Kernel, ModelFault, SimError, SimTime, TraceEntry};

/// A timed task callable from the testbench side.
pub trait XtfTask {
    /// Accepts the call payload. The task does its work from kernel
    /// processes as cycles advance.
    fn start(&mut self, payload: PackedBits) -> Result<(), ModelFault>;

    /// Checked after every cycle while the call is in flight; `Some` ends
    /// the call with that return payload.
    fn poll(&mut self) -> Option<PackedBits>;
}

/// Returns its payload after one cycle.
#[derive(Debug, Default)]
pub struct EchoTask {
    held: Option<PackedBits>,
}

impl XtfTask for EchoTask {
    fn start(&mut self, payload: PackedBits) -> Result<(), ModelFault> {
        self.held = Some(payload);
        Ok(())
    }

    fn poll(&mut self) -> Option<PackedBits> {
        self.held.take()
    }
}

/// HDL→HVL stream messages awaiting the next flush.
#[derive(Debug, Default)]
pub struct StreamOutbox {
    items: Vec<(u16, PackedBits)>,
}

impl StreamOutbox {
    pub fn push(&mut self, port: u16, payload: PackedBits) {
        self.items.push((port, payload));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub type SharedOutbox = Rc<RefCell<StreamOutbox>>;

/// Inbound stream queue consumed by a model.
#[derive(Debug)]
pub struct StreamInQueue {
    items: VecDeque<PackedBits>,
    depth: u32,
    consumed: u32,
}

impl StreamInQueue {
    pub fn new(depth: u32) -> Self {
        Self {
            items: VecDeque::new(),
            depth,
            consumed: 0,
        }
    }

    pub fn pop(&mut self) -> Option<PackedBits> {
        let v = self.items.pop_front();
        if v.is_some() {
            self.consumed += 1;
        }
        v
    }

    pub fn front(&self) -> Option<&PackedBits> {
        self.items.front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub type SharedInQueue = Rc<RefCell<StreamInQueue>>;

/// Count of non-fatal model-detected errors, reported at shutdown.
#[derive(Debug, Clone, Default)]
pub struct HdlErrorCounter(Rc<Cell<u32>>);

impl HdlErrorCounter {
    pub fn bump(&self) {
        self.0.set(self.0.get() + 1);
    }

    pub fn get(&self) -> u32 {
        self.0.get()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServerStats {
    pub frames_in: u64,
    pub frames_out: u64,
    pub directives: u64,
    /// Cycles advanced while handling directives.
    pub directive_cycles: u64,
    /// Cycles advanced while handling anything else. Always zero unless a
    /// model breaks the time rule.
    pub cycles_outside_directives: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerReport {
    pub final_time: SimTime,
    pub hdl_errors: u32,
    pub stats: ServerStats,
    pub trace: Vec<TraceEntry>,
}

pub const DEFAULT_MAX_CALL_CYCLES: u64 = 1 << 24;

pub struct HdlServer {
    kernel: Kernel,
    mode: LinkMode,
    ports: PortTable,
    tasks: BTreeMap<u16, Box<dyn XtfTask>>,
    stream_in: BTreeMap<u16, SharedInQueue>,
    outbox: SharedOutbox,
    errors: HdlErrorCounter,
    pending: Option<u16>,
    max_call_cycles: u64,
    stats: ServerStats,
    finished: bool,
}

impl HdlServer {
    pub fn new(kernel: Kernel, mode: LinkMode, ports: PortTable) -> Self {
        Self {
            kernel,
            mode,
            ports,
            tasks: BTreeMap::new(),
            stream_in: BTreeMap::new(),
            outbox: Rc::default(),
            errors: HdlErrorCounter::default(),
            pending: None,
            max_call_cycles: DEFAULT_MAX_CALL_CYCLES,
            stats: ServerStats::default(),
            finished: false,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel {
        &mut self.kernel
    }

    pub fn mode(&self) -> LinkMode {
        self.mode
    }

    pub fn outbox(&self) -> SharedOutbox {
        self.outbox.clone()
    }

    pub fn error_counter(&self) -> HdlErrorCounter {
        self.errors.clone()
    }

    pub fn stats(&self) -> ServerStats {
        self.stats
    }

    pub fn set_max_call_cycles(&mut self, n: u64) {
        self.max_call_cycles = n.max(1);
    }

    pub fn bind_task(&mut self, port_id: u16, task: Box<dyn XtfTask>) -> Result<(), LinkError> {
        let p = self.ports.get(port_id)?;
        if p.kind != PortKind::Reactive {
            return Err(LinkError::Usage(format!("port {port_id} is not reactive")));
        }
        if self.tasks.insert(port_id, task).is_some() {
            return Err(LinkError::Usage(format!("port {port_id} already bound")));
        }
        Ok(())
    }

    pub fn bind_stream_in(&mut self, port_id: u16, depth: u32) -> Result<SharedInQueue, LinkError> {
        let p = self.ports.get(port_id)?;
        if p.kind != PortKind::Streaming || p.direction != Direction::HvlToHdl {
            return Err(LinkError::Usage(format!(
                "port {port_id} is not an HVL_TO_HDL stream"
            )));
        }
        let q = Rc::new(RefCell::new(StreamInQueue::new(depth)));
        if self.stream_in.insert(port_id, q.clone()).is_some() {
            return Err(LinkError::Usage(format!("port {port_id} already bound")));
        }
        Ok(q)
    }

    fn fault(&self, e: SimError) -> LinkError {
        match e {
            SimError::Fault {
                cycle,
                process,
                message,
            } => LinkError::Remote {
                cycle: cycle.0,
                message: format!("{process}: {message}"),
            },
            SimError::Config(m) => LinkError::Remote {
                cycle: self.kernel.time().0,
                message: m,
            },
        }
    }

    fn step(&mut self) -> Result<(), LinkError> {
        self.kernel.step_cycle().map_err(|e| self.fault(e))?;
        Ok(())
    }

    fn poll_pending(&mut self) -> Result<Option<Message>, LinkError> {
        let Some(port) = self.pending else {
            return Ok(None);
        };
        let task = self.tasks.get_mut(&port).expect("pending port is bound");
        let Some(ret) = task.poll() else {
            return Ok(None);
        };
        let width = self.ports.get(port)?.return_width.expect("reactive");
        if ret.width() != width {
            return Err(LinkError::Remote {
                cycle: self.kernel.time().0,
                message: format!(
                    "task on port {port} returned {} bits, port declares {width}",
                    ret.width()
                ),
            });
        }
        self.pending = None;
        Ok(Some(Message::new(MsgType::XtfReturn, port, ret)))
    }

    fn flush(&mut self, out: &mut Vec<Message>) {
        for (port, payload) in self.outbox.borrow_mut().items.drain(..) {
            out.push(Message::new(MsgType::StreamOut, port, payload));
        }
        for (&port, q) in &self.stream_in {
            let mut q = q.borrow_mut();
            if q.consumed > 0 {
                let mut w = BitWriter::new(CREDIT_WIDTH);
                w.push(port as u64, 16).push(q.consumed as u64, 32);
                out.push(Message::new(
                    MsgType::StreamOut,
                    super::CREDIT_PORT,
                    w.finish(),
                ));
                q.consumed = 0;
            }
        }
    }

    fn status_message(&self) -> Message {
        let mut w = BitWriter::new(STATUS_WIDTH);
        w.push(self.kernel.time().0, 64)
            .push(self.errors.get() as u64, 32);
        Message::new(MsgType::StreamOut, STATUS_PORT, w.finish())
    }

    /// Handles one inbound message. Returns the replies and whether the
    /// session is over.
    pub fn handle(&mut self, m: Message) -> Result<(Vec<Message>, bool), LinkError> {
        if self.finished {
            return Err(LinkError::Closed);
        }
        self.stats.frames_in += 1;
        let before = self.kernel.time();
        let is_directive = matches!(
            m.msg_type,
            MsgType::XtfCall | MsgType::CycleTick | MsgType::RunCycles
        );
        let mut out = Vec::new();
        let mut stop = false;
        match m.msg_type {
            MsgType::XtfCall => {
                let decl = *self.ports.get(m.port_id)?;
                if decl.kind != PortKind::Reactive {
                    return Err(LinkError::Protocol(format!(
                        "XTF_CALL on non-reactive port {}",
                        m.port_id
                    )));
                }
                check_width(m.port_id, decl.payload_width, &m.payload)?;
                if self.pending.is_some() {
                    return Err(LinkError::Protocol(
                        "XTF_CALL while a call is in flight".into(),
                    ));
                }
                let cycle = self.kernel.time().0;
                let task = self.tasks.get_mut(&m.port_id).ok_or_else(|| {
                    LinkError::Protocol(format!("no task bound to port {}", m.port_id))
                })?;
                task.start(m.payload).map_err(|f| LinkError::Remote {
                    cycle,
                    message: f.0,
                })?;
                self.pending = Some(m.port_id);
                if self.mode == LinkMode::Transactional {
                    let mut spent = 0u64;
                    let ret = loop {
                        self.step()?;
                        spent += 1;
                        if let Some(r) = self.poll_pending()? {
                            break r;
                        }
                        if spent >= self.max_call_cycles {
                            return Err(LinkError::Remote {
                                cycle: self.kernel.time().0,
                                message: format!(
                                    "call on port {} exceeded {} cycles",
                                    m.port_id, self.max_call_cycles
                                ),
                            });
                        }
                    };
                    self.flush(&mut out);
                    out.push(ret);
                }
            }
            MsgType::CycleTick => {
                if self.mode != LinkMode::Lockstep {
                    return Err(LinkError::Protocol(
                        "CYCLE_TICK in transactional mode".into(),
                    ));
                }
                self.step()?;
                let ret = self.poll_pending()?;
                self.flush(&mut out);
                out.push(ret.unwrap_or_else(|| Message::control(MsgType::CycleAck)));
            }
            MsgType::RunCycles => {
                if self.mode != LinkMode::Transactional {
                    return Err(LinkError::Protocol("RUN_CYCLES in lockstep mode".into()));
                }
                if self.pending.is_some() {
                    return Err(LinkError::Protocol(
                        "RUN_CYCLES while a call is in flight".into(),
                    ));
                }
                check_width(m.port_id, RUN_CYCLES_WIDTH, &m.payload)?;
                let n = m.payload.field(0, RUN_CYCLES_WIDTH);
                for _ in 0..n {
                    self.step()?;
                }
                self.flush(&mut out);
                out.push(Message::control(MsgType::CycleAck));
            }
            MsgType::StreamIn => {
                let decl = *self.ports.get(m.port_id)?;
                check_width(m.port_id, decl.payload_width, &m.payload)?;
                let q = self.stream_in.get(&m.port_id).ok_or_else(|| {
                    LinkError::Protocol(format!("STREAM_IN on unbound port {}", m.port_id))
                })?;
                let mut q = q.borrow_mut();
                if q.items.len() as u32 >= q.depth {
                    return Err(LinkError::Protocol(format!(
                        "stream port {} overflowed depth {}",
                        m.port_id, q.depth
                    )));
                }
                q.items.push_back(m.payload);
            }
            MsgType::Shutdown => {
                if self.pending.is_some() {
                    return Err(LinkError::Protocol(
                        "SHUTDOWN while a call is in flight".into(),
                    ));
                }
                self.flush(&mut out);
                out.push(self.status_message());
                out.push(Message::control(MsgType::Shutdown));
                self.finished = true;
                stop = true;
            }
            MsgType::XtfReturn | MsgType::StreamOut | MsgType::CycleAck => {
                return Err(LinkError::Protocol(format!(
                    "{} is not valid toward the timed side",
                    m.msg_type
                )));
            }
        }
        let spent = self.kernel.time().0 - before.0;
        if is_directive {
            self.stats.directives += 1;
            self.stats.directive_cycles += spent;
        } else {
            self.stats.cycles_outside_directives += spent;
        }
        self.stats.frames_out += out.len() as u64;
        Ok((out, stop))
    }

    /// Serves one session until `SHUTDOWN`. Faults are reported to the peer
    /// on the error port before returning.
    pub fn serve<T: FrameTransport + ?Sized>(&mut self, t: &mut T) -> Result<(), LinkError> {
        loop {
            let m = t.recv()?;
            match self.handle(m) {
                Ok((replies, stop)) => {
                    t.send_batch(&replies)?;
                    if stop {
                        return Ok(());
                    }
                }
                Err(e) => {
                    let (cycle, text) = match &e {
                        LinkError::Remote { cycle, message } => (*cycle, message.clone()),
                        _ => (self.kernel.time().0, e.to_string()),
                    };
                    let _ = t.send(&Message::error_report(cycle, &text));
                    self.finished = true;
                    return Err(e);
                }
            }
        }
    }

    pub fn into_report(mut self) -> ServerReport {
        ServerReport {
            final_time: self.kernel.time(),
            hdl_errors: self.errors.get(),
            stats: self.stats,
            trace: self.kernel.take_trace(),
        }
    }
}
