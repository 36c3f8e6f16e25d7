//! Cycle-accurate simulation kernel for the timed side.
//!
//! One primary clock, posedge-only. Every [`Kernel::step_cycle`] runs two
//! phases: all registered processes sample `current` signal values and write
//! `next`, then every `next` is committed at once. A process therefore never
//! sees another process's write from the same cycle.
//!
//! Processes run in lexicographic order of their registration key, so the
//! trace depends only on the process set and its inputs, never on
//! construction order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

/// Count of elapsed primary-clock posedges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(usize);

pub const MAX_SIGNAL_WIDTH: u32 = 64;

#[derive(Debug, Clone)]
struct SignalState {
    name: String,
    width: u32,
    current: u64,
    next: u64,
}

impl SignalState {
    fn mask(&self) -> u64 {
        if self.width == 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }
}

/// Clock generator for the primary clock.
///
/// With `period > 1` processes are evaluated on every `period`-th cycle only;
/// a disabled clock gates evaluation entirely while time still advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockGen {
    pub period: u32,
    pub enabled: bool,
}

impl Default for ClockGen {
    fn default() -> Self {
        Self {
            period: 1,
            enabled: true,
        }
    }
}

/// Reset generator. The reset signal is asserted from time 0 for exactly
/// `assert_cycles` cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResetGen {
    pub assert_cycles: u64,
    pub active_low: bool,
}

impl Default for ResetGen {
    fn default() -> Self {
        Self {
            assert_cycles: 4,
            active_low: true,
        }
    }
}

impl ResetGen {
    /// Pin level of the reset signal for a given assertion state.
    pub fn level(&self, asserted: bool) -> u64 {
        (asserted != self.active_low) as u64
    }

    pub fn is_asserted(&self, level: u64) -> bool {
        (level != 0) != self.active_low
    }

    pub fn signal_name(&self) -> &'static str {
        if self.active_low {
            "rst_n"
        } else {
            "rst"
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KernelConfig {
    pub clock: ClockGen,
    pub reset: ResetGen,
}

/// A fault raised by a model while it evaluates.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ModelFault(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("model fault in `{process}` at cycle {cycle}: {message}")]
    Fault {
        cycle: SimTime,
        process: String,
        message: String,
    },
    #[error("kernel configuration: {0}")]
    Config(String),
}

/// Signal access handed to a process during evaluation. Reads see
/// `current`; writes land in `next`.
pub struct ProcessIo<'a> {
    cycle: SimTime,
    signals: &'a mut [SignalState],
}

impl ProcessIo<'_> {
    pub fn cycle(&self) -> SimTime {
        self.cycle
    }

    pub fn read(&self, id: SignalId) -> u64 {
        self.signals[id.0].current
    }

    pub fn read_bool(&self, id: SignalId) -> bool {
        self.read(id) != 0
    }

    pub fn write(&mut self, id: SignalId, value: u64) -> Result<(), ModelFault> {
        let s = &mut self.signals[id.0];
        if value & !s.mask() != 0 {
            return Err(ModelFault(format!(
                "value {value:#x} does not fit {}-bit signal `{}`",
                s.width, s.name
            )));
        }
        s.next = value;
        Ok(())
    }

    pub fn write_bool(&mut self, id: SignalId, value: bool) -> Result<(), ModelFault> {
        self.write(id, value as u64)
    }
}

/// A synchronous process evaluated once per active cycle.
pub trait Process {
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault>;
}

impl<F> Process for F
where
    F: FnMut(&mut ProcessIo<'_>) -> Result<(), ModelFault>,
{
    fn eval(&mut self, io: &mut ProcessIo<'_>) -> Result<(), ModelFault> {
        self(io)
    }
}

/// One committed value change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    /// Cycle at which the new value becomes current.
    pub cycle: u64,
    pub signal: String,
    pub value: u64,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{:x}", self.cycle, self.signal, self.value)
    }
}

/// Writes a trace as `cycle,signal_name,hex_value` lines.
pub fn write_trace<W: Write>(mut out: W, trace: &[TraceEntry]) -> io::Result<()> {
    for e in trace {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

struct ProcessSlot {
    id: ProcessId,
    proc: Box<dyn Process>,
}

pub struct Kernel {
    config: KernelConfig,
    time: SimTime,
    started: bool,
    signals: Vec<SignalState>,
    by_name: HashMap<String, SignalId>,
    processes: BTreeMap<String, ProcessSlot>,
    reset: SignalId,
    trace: Option<Vec<TraceEntry>>,
}

impl Kernel {
    pub fn new(config: KernelConfig) -> Result<Self, SimError> {
        if config.clock.period == 0 {
            return Err(SimError::Config("clock period must be at least 1".into()));
        }
        let mut k = Self {
            config,
            time: SimTime(0),
            started: false,
            signals: Vec::new(),
            by_name: HashMap::new(),
            processes: BTreeMap::new(),
            reset: SignalId(0),
            trace: None,
        };
        let r = config.reset;
        k.reset = k.add_signal(r.signal_name(), 1, r.level(r.assert_cycles > 0))?;
        Ok(k)
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn time(&self) -> SimTime {
        self.time
    }

    pub fn reset_signal(&self) -> SignalId {
        self.reset
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn add_signal(&mut self, name: &str, width: u32, init: u64) -> Result<SignalId, SimError> {
        if !(1..=MAX_SIGNAL_WIDTH).contains(&width) {
            return Err(SimError::Config(format!(
                "signal `{name}` width {width} outside 1..=64"
            )));
        }
        if self.by_name.contains_key(name) {
            return Err(SimError::Config(format!("duplicate signal `{name}`")));
        }
        let state = SignalState {
            name: name.to_string(),
            width,
            current: init,
            next: init,
        };
        if init & !state.mask() != 0 {
            return Err(SimError::Config(format!(
                "initial value {init:#x} does not fit signal `{name}`"
            )));
        }
        let id = SignalId(self.signals.len());
        self.signals.push(state);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn signal(&self, name: &str) -> Option<SignalId> {
        self.by_name.get(name).copied()
    }

    pub fn signal_name(&self, id: SignalId) -> &str {
        &self.signals[id.0].name
    }

    pub fn signal_width(&self, id: SignalId) -> u32 {
        self.signals[id.0].width
    }

    /// Committed value of a signal.
    pub fn peek(&self, id: SignalId) -> u64 {
        self.signals[id.0].current
    }

    pub fn register_process(
        &mut self,
        order_key: &str,
        proc: Box<dyn Process>,
    ) -> Result<ProcessId, SimError> {
        if self.started {
            return Err(SimError::Config(
                "processes cannot be registered once the kernel is running".into(),
            ));
        }
        if self.processes.contains_key(order_key) {
            return Err(SimError::Config(format!(
                "duplicate process key `{order_key}`"
            )));
        }
        let id = ProcessId(self.processes.len());
        self.processes
            .insert(order_key.to_string(), ProcessSlot { id, proc });
        Ok(id)
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    /// Process keys in evaluation order.
    pub fn process_order(&self) -> impl Iterator<Item = (&str, ProcessId)> {
        self.processes.iter().map(|(k, s)| (k.as_str(), s.id))
    }

    /// Evaluates every process for the current cycle, commits, and advances
    /// time by one.
    pub fn step_cycle(&mut self) -> Result<SimTime, SimError> {
        self.started = true;
        let cycle = self.time;
        for s in &mut self.signals {
            s.next = s.current;
        }

        let r = self.config.reset;
        let still_asserted = cycle.0 + 1 < r.assert_cycles;
        self.signals[self.reset.0].next = r.level(still_asserted);

        let clk = self.config.clock;
        let active = clk.enabled && cycle.0.is_multiple_of(clk.period as u64);
        if active {
            let mut io = ProcessIo {
                cycle,
                signals: &mut self.signals,
            };
            for (key, slot) in self.processes.iter_mut() {
                slot.proc.eval(&mut io).map_err(|f| SimError::Fault {
                    cycle,
                    process: key.clone(),
                    message: f.0,
                })?;
            }
        }

        let stamp = cycle.0 + 1;
        for s in &mut self.signals {
            if s.next != s.current {
                if let Some(t) = self.trace.as_mut() {
                    t.push(TraceEntry {
                        cycle: stamp,
                        signal: s.name.clone(),
                        value: s.next,
                    });
                }
                s.current = s.next;
            }
        }
        self.time = SimTime(stamp);
        Ok(self.time)
    }

    pub fn run_cycles(&mut self, n: u64) -> Result<SimTime, SimError> {
        for _ in 0..n {
            self.step_cycle()?;
        }
        Ok(self.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> Kernel {
        Kernel::new(KernelConfig::default()).unwrap()
    }

    #[test]
    fn processes_run_in_key_order() {
        use std::cell::RefCell;
        use std::rc::Rc;
        let log = Rc::new(RefCell::new(Vec::new()));
        let mut k = kernel();
        for key in ["b", "a"] {
            let log = log.clone();
            k.register_process(
                key,
                Box::new(move |_: &mut ProcessIo<'_>| {
                    log.borrow_mut().push(key);
                    Ok(())
                }),
            )
            .unwrap();
        }
        k.run_cycles(2).unwrap();
        assert_eq!(*log.borrow(), vec!["a", "b", "a", "b"]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut k = kernel();
        let p = |_: &mut ProcessIo<'_>| Ok(());
        k.register_process("x", Box::new(p)).unwrap();
        assert!(matches!(
            k.register_process("x", Box::new(p)),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn no_registration_after_start() {
        let mut k = kernel();
        k.step_cycle().unwrap();
        let p = |_: &mut ProcessIo<'_>| Ok(());
        assert!(k.register_process("late", Box::new(p)).is_err());
    }

    #[test]
    fn empty_kernel_only_advances_time() {
        let mut k = kernel();
        let s = k.add_signal("s", 8, 0x5a).unwrap();
        assert_eq!(k.step_cycle().unwrap(), SimTime(1));
        assert_eq!(k.peek(s), 0x5a);
    }

    #[test]
    fn swap_through_two_phase_update() {
        let mut k = kernel();
        let a = k.add_signal("a", 8, 1).unwrap();
        let b = k.add_signal("b", 8, 2).unwrap();
        k.register_process(
            "p0",
            Box::new(move |io: &mut ProcessIo<'_>| io.write(a, io.read(b))),
        )
        .unwrap();
        k.register_process(
            "p1",
            Box::new(move |io: &mut ProcessIo<'_>| io.write(b, io.read(a))),
        )
        .unwrap();
        k.step_cycle().unwrap();
        assert_eq!((k.peek(a), k.peek(b)), (2, 1));
        k.step_cycle().unwrap();
        assert_eq!((k.peek(a), k.peek(b)), (1, 2));
    }

    #[test]
    fn reset_asserted_for_exact_cycles() {
        use std::cell::RefCell;
        use std::rc::Rc;
        let cfg = KernelConfig {
            reset: ResetGen {
                assert_cycles: 4,
                active_low: true,
            },
            ..Default::default()
        };
        let mut k = Kernel::new(cfg).unwrap();
        let rst = k.reset_signal();
        let seen = Rc::new(RefCell::new(Vec::new()));
        let s2 = seen.clone();
        k.register_process(
            "sampler",
            Box::new(move |io: &mut ProcessIo<'_>| {
                s2.borrow_mut().push(cfg.reset.is_asserted(io.read(rst)));
                Ok(())
            }),
        )
        .unwrap();
        k.run_cycles(6).unwrap();
        assert_eq!(*seen.borrow(), vec![true, true, true, true, false, false]);
    }

    #[test]
    fn zero_reset_cycles_starts_deasserted() {
        let cfg = KernelConfig {
            reset: ResetGen {
                assert_cycles: 0,
                active_low: false,
            },
            ..Default::default()
        };
        let k = Kernel::new(cfg).unwrap();
        assert_eq!(k.peek(k.reset_signal()), 0);
    }

    #[test]
    fn out_of_range_write_is_fault_with_cycle() {
        let mut k = kernel();
        let s = k.add_signal("narrow", 2, 0).unwrap();
        k.register_process(
            "bad",
            Box::new(move |io: &mut ProcessIo<'_>| {
                if io.cycle().0 == 3 {
                    io.write(s, 4)
                } else {
                    Ok(())
                }
            }),
        )
        .unwrap();
        let err = k.run_cycles(10).unwrap_err();
        assert!(matches!(
            err,
            SimError::Fault {
                cycle: SimTime(3),
                ..
            }
        ));
    }

    #[test]
    fn run_cycles_counts() {
        let mut k = kernel();
        assert_eq!(k.run_cycles(0).unwrap(), SimTime(0));
        k.run_cycles(5).unwrap();
        assert_eq!(k.run_cycles(100).unwrap(), SimTime(105));
    }

    #[test]
    fn gated_clock_skips_evaluation() {
        let cfg = KernelConfig {
            clock: ClockGen {
                period: 3,
                enabled: true,
            },
            ..Default::default()
        };
        let mut k = Kernel::new(cfg).unwrap();
        let c = k.add_signal("count", 8, 0).unwrap();
        k.register_process(
            "inc",
            Box::new(move |io: &mut ProcessIo<'_>| io.write(c, io.read(c) + 1)),
        )
        .unwrap();
        k.run_cycles(9).unwrap();
        assert_eq!(k.peek(c), 3);
        assert!(Kernel::new(KernelConfig {
            clock: ClockGen {
                period: 0,
                enabled: true
            },
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn trace_lines() {
        let mut k = kernel();
        k.enable_trace();
        let c = k.add_signal("c", 4, 0).unwrap();
        k.register_process(
            "inc",
            Box::new(move |io: &mut ProcessIo<'_>| io.write(c, (io.read(c) + 1) & 0xf)),
        )
        .unwrap();
        k.run_cycles(2).unwrap();
        let mut out = Vec::new();
        write_trace(&mut out, k.trace().unwrap()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1,c,1\n2,c,2\n");
    }
}
