use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dut::{RegFileFault, REGFILE_WORDS};
use crate::link::transport::TransportKind;
use crate::link::{LinkMode, DEFAULT_STREAM_DEPTH};
use crate::vip::DEFAULT_RESPONSE_TIMEOUT;

use super::RunError;

/// Interface topology of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    /// Input video interfaces.
    pub a: u32,
    /// Memory interfaces; must be 0.
    pub b: u32,
    /// Output video interfaces.
    pub c: u32,
    /// Interrupt lines.
    pub d: u32,
    /// Register interfaces.
    pub e: u32,
    /// Chained IPs.
    pub r: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            a: 0,
            b: 0,
            c: 0,
            d: 0,
            e: 1,
            r: 1,
        }
    }
}

impl EnvConfig {
    pub fn register_only() -> Self {
        Self::default()
    }

    /// One input, one output, one interrupt per IP.
    pub fn video(r: u32) -> Self {
        Self {
            a: 1,
            c: 1,
            d: r,
            r,
            ..Self::default()
        }
    }

    /// Video agent count.
    pub fn m(&self) -> u32 {
        self.a.max(self.c)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.b != 0 {
            return Err(RunError::Unsupported(format!(
                "B={} memory interfaces requested; memory agents are not supported",
                self.b
            )));
        }
        if self.e == 0 {
            return Err(RunError::Config("E must be at least 1".into()));
        }
        if self.r == 0 {
            return Err(RunError::Config("R must be at least 1".into()));
        }
        if self.d > self.r {
            return Err(RunError::Config(format!(
                "D={} interrupt lines but only R={} IPs raise interrupts",
                self.d, self.r
            )));
        }
        if self.e > 0x80 || self.m() > 0x80 || self.d > 0x80 {
            return Err(RunError::Config(
                "at most 128 interfaces of each kind".into(),
            ));
        }
        Ok(())
    }
}

/// Which design sits behind register interface 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DutKind {
    RegFile,
    Isp,
}

impl FromStr for DutKind {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "regfile" => Ok(Self::RegFile),
            "isp" => Ok(Self::Isp),
            _ => Err(RunError::Config(format!("unknown dut `{s}`"))),
        }
    }
}

impl fmt::Display for DutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RegFile => "regfile",
            Self::Isp => "isp",
        })
    }
}

/// Everything the timed side needs to build its top level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HdlConfig {
    pub env: EnvConfig,
    pub dut: DutKind,
    pub mode: LinkMode,
    pub response_latency: u32,
    pub pipeline_latency: u32,
    pub gate_factor: u32,
    pub bus_gap: u32,
    pub reset_cycles: u64,
    pub timeout: u32,
    pub stream_depth: u32,
    pub trace: bool,
    pub fault: RegFileFault,
    /// Cycle budget of one video synchronization call.
    pub sync_limit: u64,
}

impl Default for HdlConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            dut: DutKind::RegFile,
            mode: LinkMode::Transactional,
            response_latency: 2,
            pipeline_latency: 4,
            gate_factor: 0,
            bus_gap: 0,
            reset_cycles: 4,
            timeout: DEFAULT_RESPONSE_TIMEOUT,
            stream_depth: DEFAULT_STREAM_DEPTH,
            trace: false,
            fault: RegFileFault::None,
            sync_limit: 1 << 20,
        }
    }
}

/// Flat `key=value` text. `#` starts a comment; blank lines are ignored.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, RunError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: FromStr>(k: &str, v: &str) -> Result<T, RunError> {
    v.parse()
        .map_err(|_| RunError::Config(format!("`{k}`: bad number `{v}`")))
}

fn flag(k: &str, v: &str) -> Result<bool, RunError> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(RunError::Config(format!(
            "`{k}`: expected a boolean, got `{v}`"
        ))),
    }
}

impl HdlConfig {
    /// Applies one key; returns `false` for keys it does not own.
    pub fn apply(&mut self, k: &str, v: &str) -> Result<bool, RunError> {
        match k {
            "A" | "a" => self.env.a = num(k, v)?,
            "B" | "b" => self.env.b = num(k, v)?,
            "C" | "c" => self.env.c = num(k, v)?,
            "D" | "d" => self.env.d = num(k, v)?,
            "E" | "e" => self.env.e = num(k, v)?,
            "R" | "r" => self.env.r = num(k, v)?,
            "dut" => self.dut = v.parse()?,
            "mode" => self.mode = v.parse().map_err(RunError::Config)?,
            "response_latency" => self.response_latency = num(k, v)?,
            "pipeline_latency" => self.pipeline_latency = num(k, v)?,
            "gate_factor" => self.gate_factor = num(k, v)?,
            "bus_gap" => self.bus_gap = num(k, v)?,
            "reset_cycles" => self.reset_cycles = num(k, v)?,
            "timeout" => self.timeout = num(k, v)?,
            "stream_depth" => self.stream_depth = num(k, v)?,
            "trace" => self.trace = flag(k, v)?,
            "sync_limit" => self.sync_limit = num(k, v)?,
            "fault" => {
                self.fault = match v {
                    "none" => RegFileFault::None,
                    "unresponsive" => RegFileFault::Unresponsive,
                    _ => match v.strip_prefix("spurious@") {
                        Some(c) => RegFileFault::SpuriousResponse {
                            at_cycle: num(k, c)?,
                        },
                        None => return Err(RunError::Config(format!("unknown fault `{v}`"))),
                    },
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_flat(text: &str) -> Result<Self, RunError> {
        let mut c = Self::default();
        for (k, v) in parse_flat(text)? {
            if !c.apply(&k, &v)? {
                return Err(RunError::Config(format!("unknown key `{k}`")));
            }
        }
        c.env.validate()?;
        Ok(c)
    }

    pub fn to_flat(&self) -> String {
        let fault = match self.fault {
            RegFileFault::None => "none".to_string(),
            RegFileFault::Unresponsive => "unresponsive".to_string(),
            RegFileFault::SpuriousResponse { at_cycle } => format!("spurious@{at_cycle}"),
        };
        let e = &self.env;
        format!(
            "A={}\nB={}\nC={}\nD={}\nE={}\nR={}\ndut={}\nmode={}\nresponse_latency={}\n\
             pipeline_latency={}\ngate_factor={}\nbus_gap={}\nreset_cycles={}\ntimeout={}\n\
             stream_depth={}\ntrace={}\nfault={}\nsync_limit={}\n",
            e.a,
            e.b,
            e.c,
            e.d,
            e.e,
            e.r,
            self.dut,
            self.mode,
            self.response_latency,
            self.pipeline_latency,
            self.gate_factor,
            self.bus_gap,
            self.reset_cycles,
            self.timeout,
            self.stream_depth,
            self.trace,
            fault,
            self.sync_limit
        )
    }
}

/// Where the timed side runs when the transport is a socket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HdlLaunch {
    /// A thread of this process listens on an ephemeral localhost port.
    Thread,
    /// A child process (`hdl-serve`) of the given executable.
    Process(PathBuf),
    /// An already running server.
    Connect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub test: String,
    pub transport: TransportKind,
    pub launch: HdlLaunch,
    pub seed: u64,
    /// Register operations; `None` uses the test's default.
    pub txns: Option<u64>,
    /// Frames; `None` uses the test's default.
    pub frames: Option<u64>,
    /// Register-file words the random register test addresses and models.
    pub reg_words: u32,
    pub hdl: HdlConfig,
    pub out_dir: Option<PathBuf>,
    pub capture: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            test: "reg_smoke".into(),
            transport: TransportKind::InProc,
            launch: HdlLaunch::Thread,
            seed: 1,
            txns: None,
            frames: None,
            reg_words: REGFILE_WORDS as u32,
            hdl: HdlConfig::default(),
            out_dir: None,
            capture: false,
        }
    }
}

impl RunConfig {
    pub fn new(test: &str) -> Self {
        Self {
            test: test.into(),
            ..Self::default()
        }
    }

    pub fn mode(mut self, m: LinkMode) -> Self {
        self.hdl.mode = m;
        self
    }

    pub fn transport(mut self, t: TransportKind) -> Self {
        self.transport = t;
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    pub fn txns(mut self, n: u64) -> Self {
        self.txns = Some(n);
        self
    }

    pub fn frames(mut self, n: u64) -> Self {
        self.frames = Some(n);
        self
    }

    /// Applies a flat config file: run keys here, the rest to [`HdlConfig`].
    pub fn apply_flat(&mut self, text: &str) -> Result<(), RunError> {
        for (k, v) in parse_flat(text)? {
            match k.as_str() {
                "test" => self.test = v,
                "transport" => self.transport = v.parse().map_err(RunError::Config)?,
                "endpoint" => self.launch = HdlLaunch::Connect(v),
                "seed" => self.seed = num(&k, &v)?,
                "txns" => self.txns = Some(num(&k, &v)?),
                "frames" => self.frames = Some(num(&k, &v)?),
                "reg_words" => self.reg_words = num(&k, &v)?,
                "out_dir" => self.out_dir = Some(PathBuf::from(v)),
                "capture" => self.capture = flag(&k, &v)?,
                _ => {
                    if !self.hdl.apply(&k, &v)? {
                        return Err(RunError::Config(format!("unknown key `{k}`")));
                    }
                }
            }
        }
        Ok(())
    }
}
