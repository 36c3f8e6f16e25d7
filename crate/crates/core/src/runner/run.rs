use std::cell::RefCell;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::rc::Rc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::codec::FrameTxn;
use crate::kernel::write_trace;
use crate::link::hdl::ServerReport;
use crate::link::hvl::{HdlStatus, HvlLink, LinkStats};
use crate::link::transport::{inproc_pair, FrameTransport, SocketTransport, TransportKind};
use crate::link::wire::CaptureEntry;
use crate::link::{serve_session, LinkError};
use crate::uvm::ReportSummary;

use super::builtin::{plan_for, PlanTest};
use super::config::{HdlConfig, HdlLaunch, RunConfig};
use super::coverage::CoverageDb;
use super::env::build_env;
use super::hdl_top::{build_hdl, port_table};
use super::RunError;

/// What the timed side hands back when it runs inside this process.
#[derive(Debug, Clone)]
pub struct HdlSideReport {
    pub server: ServerReport,
    /// Per input interface, the cycles at which frames were accepted.
    pub accepted: Vec<Vec<u64>>,
}

type HdlJoin = JoinHandle<Result<HdlSideReport, LinkError>>;

/// Everything one run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: ReportSummary,
    /// Monitor log lines per register interface.
    pub txn_logs: Vec<Vec<String>>,
    pub coverage: CoverageDb,
    pub frames_out: Vec<FrameTxn>,
    pub irq_counts: Vec<u64>,
    pub status: Option<HdlStatus>,
    pub link_stats: LinkStats,
    pub capture: Vec<CaptureEntry>,
    /// Present when the timed side ran in this process.
    pub hdl: Option<HdlSideReport>,
    pub wall: Duration,
}

impl RunOutcome {
    /// `PASS|FAIL, errors=<n>, transactions=<n>, cycles=<n>`
    pub fn verdict(&self) -> String {
        self.summary.to_string()
    }

    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code()
    }

    pub fn passed(&self) -> bool {
        self.summary.passed()
    }

    pub fn txn_log_text(&self, iface: usize) -> String {
        let mut s = String::new();
        for l in &self.txn_logs[iface] {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

fn serve_thread(cfg: HdlConfig, mut transport: impl FrameTransport + 'static) -> HdlJoin {
    thread::spawn(move || {
        let (server, probes) = build_hdl(&cfg)?;
        let server = serve_session(server, &mut transport)?;
        Ok(HdlSideReport {
            server,
            accepted: probes.accepted_cycles(),
        })
    })
}

/// Serves sessions on `listener` with a fresh timed top level each time.
/// Returns after one session when `once` is set.
pub fn serve_listener(
    listener: TcpListener,
    cfg: &HdlConfig,
    once: bool,
    mut on_done: impl FnMut(&ServerReport),
) -> Result<(), RunError> {
    loop {
        let (stream, _) = listener.accept().map_err(LinkError::Transport)?;
        let mut t = SocketTransport::from_stream(stream)?;
        let (server, _) = build_hdl(cfg)?;
        let report = serve_session(server, &mut t)?;
        on_done(&report);
        if once {
            return Ok(());
        }
    }
}

enum Remote {
    None,
    Thread(HdlJoin),
    Child(Child),
}

fn spawn_child(exe: &Path, cfg: &HdlConfig) -> Result<(Child, String), RunError> {
    let mut child = Command::new(exe)
        .args([
            "hdl-serve",
            "--listen",
            "127.0.0.1:0",
            "--once",
            "--config",
            "-",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    child
        .stdin
        .take()
        .expect("piped")
        .write_all(cfg.to_flat().as_bytes())?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().expect("piped")).read_line(&mut line)?;
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| {
            RunError::Io(std::io::Error::other(format!(
                "hdl-serve said `{}`",
                line.trim()
            )))
        })?
        .to_string();
    Ok((child, addr))
}

fn connect(run: &RunConfig) -> Result<(Box<dyn FrameTransport>, Remote), RunError> {
    match (run.transport, &run.launch) {
        (TransportKind::InProc, _) => {
            let (hvl, hdl) = inproc_pair();
            Ok((
                Box::new(hvl),
                Remote::Thread(serve_thread(run.hdl.clone(), hdl)),
            ))
        }
        (TransportKind::Socket, HdlLaunch::Thread) => {
            let listener = TcpListener::bind("127.0.0.1:0").map_err(LinkError::Transport)?;
            let addr = listener.local_addr().map_err(LinkError::Transport)?;
            let cfg = run.hdl.clone();
            let join = thread::spawn(move || {
                let (stream, _) = listener.accept().map_err(LinkError::Transport)?;
                let mut t = SocketTransport::from_stream(stream)?;
                let (server, probes) = build_hdl(&cfg)?;
                let server = serve_session(server, &mut t)?;
                Ok(HdlSideReport {
                    server,
                    accepted: probes.accepted_cycles(),
                })
            });
            let t = SocketTransport::from_stream(
                TcpStream::connect(addr).map_err(LinkError::Transport)?,
            )?;
            Ok((Box::new(t), Remote::Thread(join)))
        }
        (TransportKind::Socket, HdlLaunch::Process(exe)) => {
            let (child, addr) = spawn_child(exe, &run.hdl)?;
            Ok((
                Box::new(SocketTransport::connect(addr.as_str())?),
                Remote::Child(child),
            ))
        }
        (TransportKind::Socket, HdlLaunch::Connect(addr)) => Ok((
            Box::new(SocketTransport::connect(addr.as_str())?),
            Remote::None,
        )),
    }
}

/// Runs one test end to end. The test code path is the same for every
/// mode and transport; only the link underneath changes.
///
/// A run whose testbench reports errors still returns `Ok`; check
/// [`RunOutcome::exit_code`].
pub fn run_test(run: &RunConfig) -> Result<RunOutcome, RunError> {
    let plan = plan_for(run)?;
    run.hdl.env.validate()?;
    let start = Instant::now();
    let (transport, remote) = connect(run)?;
    let mut hvl = HvlLink::new(transport, run.hdl.mode, port_table(&run.hdl)?)
        .with_stream_depth(run.hdl.stream_depth);
    if run.capture {
        hvl.enable_capture();
    }
    let link = Rc::new(RefCell::new(hvl));

    let status_cell = Rc::new(RefCell::new(None));
    let sc = status_cell.clone();
    let built = build_env(
        &run.hdl,
        link.clone(),
        run.reg_words,
        Box::new(move |h| {
            let t = PlanTest::new(plan, h);
            *sc.borrow_mut() = Some(t.status());
            Box::new(t)
        }),
    );
    let (mut tree, mut registry, handles) = match built {
        Ok(b) => b,
        Err(e) => {
            let _ = link.borrow_mut().shutdown();
            finish_remote(remote)?;
            return Err(e);
        }
    };
    let summary = tree.run_phases(&mut registry);
    if !link.borrow().is_closed() {
        let _ = link.borrow_mut().shutdown();
    }
    let status = status_cell.borrow().as_ref().and_then(|c| c.get());
    let hdl = finish_remote(remote)?;
    let wall = start.elapsed();

    let mut l = link.borrow_mut();
    let outcome = RunOutcome {
        summary,
        txn_logs: handles
            .txn_logs
            .iter()
            .map(|t| t.borrow().clone())
            .collect(),
        coverage: handles.coverage.borrow().clone(),
        frames_out: handles.frames_out.borrow().clone(),
        irq_counts: handles.irq_counts.iter().map(|c| c.get()).collect(),
        status: status.or(l.status()),
        link_stats: l.stats(),
        capture: l.take_capture(),
        hdl,
        wall,
    };
    drop(l);
    if let Some(dir) = &run.out_dir {
        write_artifacts(dir, run, &outcome)?;
    }
    Ok(outcome)
}

fn finish_remote(remote: Remote) -> Result<Option<HdlSideReport>, RunError> {
    match remote {
        Remote::None => Ok(None),
        Remote::Thread(j) => match j.join() {
            Ok(r) => Ok(Some(r?)),
            Err(_) => Err(RunError::Sim("timed-side thread panicked".into())),
        },
        Remote::Child(mut c) => {
            let st = c.wait()?;
            if !st.success() {
                return Err(RunError::Sim(format!("hdl-serve exited with {st}")));
            }
            Ok(None)
        }
    }
}

/// 16-bit binary PGM.
pub fn write_pgm<W: Write>(mut out: W, f: &FrameTxn) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n65535\n", f.width, f.height)?;
    let mut bytes = Vec::with_capacity(2 * f.pixels.len());
    for p in &f.pixels {
        bytes.extend_from_slice(&p.to_be_bytes());
    }
    out.write_all(&bytes)
}

fn write_artifacts(dir: &Path, run: &RunConfig, o: &RunOutcome) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.txt"), format!("{}\n", o.verdict()))?;
    fs::write(dir.join("coverage.txt"), o.coverage.to_string())?;
    for i in 0..o.txn_logs.len() {
        fs::write(dir.join(format!("txn_reg{i}.log")), o.txn_log_text(i))?;
    }
    let mut log = String::new();
    for e in &o.summary.log {
        log.push_str(&e.to_string());
        log.push('\n');
    }
    fs::write(dir.join("report.log"), log)?;
    let s = &o.link_stats;
    fs::write(
        dir.join("run.txt"),
        format!(
            "test={}\nmode={}\ntransport={}\nseed={}\nwall_seconds={:.6}\nframes_sent={}\nframes_received={}\n",
            run.test,
            run.hdl.mode,
            run.transport,
            run.seed,
            o.wall.as_secs_f64(),
            s.total_sent(),
            s.total_received()
        ),
    )?;
    for f in &o.frames_out {
        write_pgm(
            fs::File::create(dir.join(format!("frame{:04}.pgm", f.frame_id)))?,
            f,
        )?;
    }
    if run.capture {
        let mut text = String::new();
        for c in &o.capture {
            text.push_str(&c.to_string());
            text.push('\n');
        }
        fs::write(dir.join("capture.txt"), text)?;
    }
    if let Some(h) = &o.hdl {
        if !h.server.trace.is_empty() {
            write_trace(fs::File::create(dir.join("trace.txt"))?, &h.server.trace)?;
        }
    }
    Ok(())
}
