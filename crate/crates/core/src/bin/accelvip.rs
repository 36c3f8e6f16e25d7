use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use accelvip::link::transport::TransportKind;
use accelvip::link::LinkMode;
use accelvip::runner::{
    bench, bench_workload, configure_for, regress, run_test, HdlConfig, HdlLaunch, RunConfig,
    RunError,
};

#[derive(Parser)]
#[command(name = "accelvip", version, about = "Co-emulation testbench runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one test.
    Run(RunArgs),
    /// Time a workload in both link modes across gate factors.
    Bench(BenchArgs),
    /// Serve the timed side on a socket.
    HdlServe(ServeArgs),
    /// Run every built-in test and merge coverage.
    Regress(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// lockstep | txn
    #[arg(long)]
    mode: Option<LinkMode>,
    /// inproc | socket
    #[arg(long)]
    transport: Option<TransportKind>,
    /// Connect to an already running `hdl-serve` instead of starting one.
    #[arg(long)]
    endpoint: Option<String>,
    /// Start the timed side as a child process rather than a thread.
    #[arg(long)]
    spawn: bool,
    /// Stimulus seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Busywork units per cycle in the design models.
    #[arg(long)]
    gate_factor: Option<u32>,
    /// Directory for logs, coverage, frames and traces.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Flat key=value file, applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// reg_smoke | reg_random_rw | isp_frames | subsystem_chain
    #[arg(long)]
    test: String,
    /// Register operations, for tests that take a count.
    #[arg(long)]
    txns: Option<u64>,
    /// Frames, for video tests.
    #[arg(long)]
    frames: Option<u64>,
    /// Record every link frame to capture.txt.
    #[arg(long)]
    capture: bool,
    /// Record signal changes to trace.txt.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated gate factors.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    matrix: Vec<u32>,
    /// Register operations per cell.
    #[arg(long, default_value_t = 10_000)]
    txns: u64,
    /// Write the CSV here as well as to stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    spawn: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// host:port; port 0 picks a free one.
    #[arg(long)]
    listen: String,
    /// Flat key=value file, or `-` for stdin.
    #[arg(long)]
    config: Option<String>,
    /// Exit after one session.
    #[arg(long)]
    once: bool,
}

fn apply_common(r: &mut RunConfig, c: &CommonArgs) -> Result<(), RunError> {
    if let Some(p) = &c.config {
        r.apply_flat(&fs::read_to_string(p)?)?;
    }
    if let Some(m) = c.mode {
        r.hdl.mode = m;
    }
    if let Some(t) = c.transport {
        r.transport = t;
    }
    if let Some(e) = &c.endpoint {
        r.transport = TransportKind::Socket;
        r.launch = HdlLaunch::Connect(e.clone());
    } else if c.spawn {
        r.launch = HdlLaunch::Process(std::env::current_exe()?);
    }
    if let Some(s) = c.seed {
        r.seed = s;
    }
    if let Some(g) = c.gate_factor {
        r.hdl.gate_factor = g;
    }
    if let Some(d) = &c.out_dir {
        r.out_dir = Some(d.clone());
    }
    if matches!(r.launch, HdlLaunch::Process(_)) && r.transport == TransportKind::InProc {
        return Err(RunError::Config("--spawn needs --transport socket".into()));
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<i32, RunError> {
    let mut r = RunConfig::new(&a.test);
    configure_for(&mut r);
    apply_common(&mut r, &a.common)?;
    if let Some(n) = a.txns {
        r.txns = Some(n);
    }
    if let Some(n) = a.frames {
        r.frames = Some(n);
    }
    r.capture |= a.capture;
    r.hdl.trace |= a.trace;
    let o = run_test(&r)?;
    println!("{}", o.verdict());
    print!("{}", o.coverage);
    for e in o
        .summary
        .log
        .iter()
        .filter(|e| e.severity >= accelvip::uvm::Severity::Error)
    {
        eprintln!("{e}");
    }
    Ok(o.exit_code())
}

fn cmd_bench(a: BenchArgs) -> Result<i32, RunError> {
    let mut base = bench_workload(a.txns);
    if a.spawn {
        base.launch = HdlLaunch::Process(std::env::current_exe()?);
    }
    let res = bench(&base, &a.matrix)?;
    eprint!("{}", res.table());
    res.write_csv(std::io::stdout())?;
    if let Some(p) = a.csv {
        res.write_csv(fs::File::create(p)?)?;
    }
    Ok(0)
}

fn cmd_serve(a: ServeArgs) -> Result<i32, RunError> {
    let cfg = match a.config.as_deref() {
        None => HdlConfig::default(),
        Some("-") => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            HdlConfig::from_flat(&s)?
        }
        Some(p) => HdlConfig::from_flat(&fs::read_to_string(p)?)?,
    };
    let listener = TcpListener::bind(&a.listen)?;
    let mut out = std::io::stdout();
    writeln!(out, "listening on {}", listener.local_addr()?)?;
    out.flush()?;
    accelvip::runner::serve_listener(listener, &cfg, a.once, |r| {
        eprintln!(
            "session done: cycles={} hdl_errors={}",
            r.final_time.0, r.hdl_errors
        );
    })?;
    Ok(0)
}

fn cmd_regress(c: CommonArgs) -> Result<i32, RunError> {
    let mut r = RunConfig::default();
    apply_common(&mut r, &c)?;
    let res = regress(&r)?;
    for (t, v, _) in &res.runs {
        println!("{t}: {v}");
    }
    print!("{}", res.coverage);
    Ok(res.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::HdlServe(a) => cmd_serve(a),
        Cmd::Regress(c) => cmd_regress(c),
    };
    match r {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
