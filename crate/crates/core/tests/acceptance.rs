//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! verdict lines always reach the output; exits nonzero if any check fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use accelvip::codec::{
    golden_line, pack_reg, parse_golden_line, unpack_reg, PackedBits, RegPacket,
};
use accelvip::link::transport::TransportKind;
use accelvip::link::wire::{decode_frame, encode_frame};
use accelvip::link::{LinkMode, Message, MsgType};
use accelvip::runner::{
    bench, bench_workload, configure_for, regress, run_test, RunConfig, RunOutcome, BINS,
};
use accelvip::vip::DRIVE_OFFSET;

const GOLDEN: &str = include_str!("data/reg_golden.txt");

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(t: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if t > limit {
        return Err(format!(
            "{what} took {:.2}s, limit {:.0}s",
            t.as_secs_f64(),
            limit.as_secs_f64()
        ));
    }
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<RunOutcome, String> {
    let o = run_test(cfg).map_err(|e| format!("{}: {e}", cfg.test))?;
    if !o.passed() {
        let errs: Vec<String> = o
            .summary
            .log
            .iter()
            .filter(|e| e.severity >= accelvip::uvm::Severity::Error)
            .take(3)
            .map(|e| e.to_string())
            .collect();
        return Err(format!("{}: {} {errs:?}", cfg.test, o.verdict()));
    }
    Ok(o)
}

/// Small independent generator so random inputs here do not share code with
/// the stimulus under test.
struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

fn codec_properties() -> Check {
    let start = Instant::now();
    let mut g = SplitMix(1);
    for _ in 0..10_000 {
        let a = g.next();
        let b = g.next();
        let p = RegPacket {
            req: a & 1 != 0,
            eop: a & 2 != 0,
            addr: (a >> 32) as u32,
            data: b as u32,
            be: ((a >> 2) & 0xf) as u8,
            r_req: a & 0x40 != 0,
            r_data: (b >> 32) as u32,
            r_opc: ((a >> 7) & 3) as u8,
        };
        let bits = pack_reg(&p).map_err(|e| e.to_string())?;
        let q = unpack_reg(&bits).map_err(|e| e.to_string())?;
        ensure!(p == q, "round trip changed {p} into {q}");
    }
    let mut n = 0;
    for line in GOLDEN.lines().filter(|l| !l.trim().is_empty()) {
        let (p, expect) = parse_golden_line(line).map_err(|e| e.to_string())?;
        let got = pack_reg(&p).map_err(|e| e.to_string())?;
        ensure!(
            got == expect,
            "{p}: packed {} expected {}",
            got.to_hex(),
            expect.to_hex()
        );
        ensure!(
            golden_line(&p).map_err(|e| e.to_string())? == line,
            "formatting of `{line}`"
        );
        n += 1;
    }
    ensure!(n == 64, "golden file has {n} vectors");
    let t = start.elapsed();
    within(t, Duration::from_secs(1), "codec checks")?;
    Ok(format!(
        "10000 round trips, {n} golden vectors, {:.3}s",
        t.as_secs_f64()
    ))
}

fn wire_conformance() -> Check {
    let mut g = SplitMix(2);
    for _ in 0..10_000 {
        let a = g.next();
        let t = MsgType::from_code((a % 8) as u8).unwrap();
        let width = ((a >> 8) % 300) as u32;
        let mut payload = PackedBits::zeros(width);
        let mut lsb = 0;
        while lsb < width {
            let n = (width - lsb).min(64);
            let mask = if n == 64 { u64::MAX } else { (1 << n) - 1 };
            payload.set_field(lsb, n, g.next() & mask);
            lsb += n;
        }
        let m = Message::new(t, (a >> 32) as u16, payload);
        let back = decode_frame(&encode_frame(&m)).map_err(|e| e.to_string())?;
        ensure!(back == m, "round trip changed {m:?}");
    }

    let shutdown = Message::control(MsgType::Shutdown);
    let expect = [0x53, 0x43, 0x01, 0x07, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00];
    ensure!(
        encode_frame(&shutdown) == expect,
        "SHUTDOWN frame {:02x?}",
        encode_frame(&shutdown)
    );
    ensure!(
        decode_frame(&expect).ok() == Some(shutdown),
        "SHUTDOWN decode"
    );

    let call = RegPacket::write(0x10, 0xA5A5_A5A5, 0xF);
    let m = Message::new(MsgType::XtfCall, 0x0100, pack_reg(&call).unwrap());
    #[rustfmt::skip]
    let expect = [
        0x53, 0x43, 0x01, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x69,
        0xc0, 0x00, 0x00, 0x04, 0x29, 0x69, 0x69, 0x69, 0x7c, 0x00, 0x00, 0x00, 0x00, 0x00,
    ];
    ensure!(
        encode_frame(&m) == expect,
        "XTF_CALL frame {:02x?}",
        encode_frame(&m)
    );
    ensure!(decode_frame(&expect).ok() == Some(m), "XTF_CALL decode");
    Ok("10000 round trips, SHUTDOWN and 105-bit XTF_CALL byte-exact".into())
}

fn four_way() -> Result<(Vec<RunOutcome>, Duration), String> {
    let start = Instant::now();
    let mut outs = Vec::new();
    for mode in [LinkMode::Lockstep, LinkMode::Transactional] {
        for transport in [TransportKind::InProc, TransportKind::Socket] {
            let cfg = RunConfig::new("reg_random_rw")
                .mode(mode)
                .transport(transport)
                .txns(1000)
                .seed(7);
            outs.push(run(&cfg)?);
        }
    }
    Ok((outs, start.elapsed()))
}

fn cross_mode_determinism(outs: &[RunOutcome], t: Duration) -> Check {
    let first = &outs[0];
    ensure!(
        first.summary.transactions == 1000,
        "{} transactions",
        first.summary.transactions
    );
    for (i, o) in outs.iter().enumerate().skip(1) {
        ensure!(
            o.txn_log_text(0) == first.txn_log_text(0),
            "run {i} transaction log differs"
        );
        ensure!(
            o.coverage.to_string() == first.coverage.to_string(),
            "run {i} coverage differs"
        );
        ensure!(
            o.verdict() == first.verdict(),
            "run {i} verdict `{}`",
            o.verdict()
        );
    }
    within(t, Duration::from_secs(30), "four runs")?;
    Ok(format!(
        "4 runs identical ({}), {:.2}s",
        first.verdict(),
        t.as_secs_f64()
    ))
}

/// Replays a monitor log against a brute-force word map: reads must return
/// the byte-merged value of all earlier writes.
fn replay_against_shadow(log: &[String]) -> Result<(usize, usize), String> {
    let mut shadow: HashMap<u32, u32> = HashMap::new();
    let (mut ok, mut failed) = (0, 0);
    for line in log {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 7, "bad log line `{line}`");
        let hex = |s: &str| {
            u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|e| e.to_string())
        };
        let (addr, data, be, r_data, r_opc) = (
            hex(f[2])?,
            hex(f[3])?,
            hex(f[4])?,
            hex(f[5])?,
            f[6].parse::<u8>().map_err(|e| e.to_string())?,
        );
        let mapped = addr < 0x400;
        ensure!(
            (r_opc == 0) == mapped,
            "`{line}`: response code for address {addr:#x}"
        );
        if !mapped {
            failed += 1;
            continue;
        }
        let cur = shadow.entry(addr).or_insert(0);
        if f[1] == "W" {
            let mask = (0..4)
                .filter(|b| be >> b & 1 != 0)
                .fold(0u32, |m, b| m | 0xff << (8 * b));
            *cur = (*cur & !mask) | (data & mask);
        } else {
            ensure!(
                r_data == *cur,
                "`{line}`: read {r_data:#010x}, shadow {:#010x}",
                *cur
            );
        }
        ok += 1;
    }
    Ok((ok, failed))
}

fn register_correctness() -> Check {
    let mut cfg = RunConfig::new("reg_random_rw").txns(2000).seed(11);
    cfg.reg_words = 16;
    configure_for(&mut cfg);
    let o = run(&cfg)?;
    ensure!(
        o.summary.errors == 0,
        "{} scoreboard errors",
        o.summary.errors
    );
    ensure!(
        o.summary.transactions == 2000,
        "{} transactions",
        o.summary.transactions
    );
    let (ok, failed) = replay_against_shadow(&o.txn_logs[0])?;
    Ok(format!(
        "1000 write/read pairs on 16 registers, mirror audited per op, 0 mismatches; replay {ok} mapped + {failed} unmapped ops"
    ))
}

fn rise_cycle(o: &RunOutcome, signal: &str) -> Option<u64> {
    let h = o.hdl.as_ref()?;
    h.server
        .trace
        .iter()
        .find(|e| e.signal == signal && e.value == 1)
        .map(|e| e.cycle)
}

fn isp_equivalence() -> Check {
    let mut cfg = RunConfig::new("subsystem_chain").frames(20).seed(5);
    configure_for(&mut cfg);
    cfg.hdl.trace = true;
    let r = cfg.hdl.env.r as u64;
    let l = cfg.hdl.pipeline_latency as u64;
    ensure!(r == 3, "chain length {r}");
    let o = run(&cfg)?;
    ensure!(
        o.frames_out.len() == 20,
        "{} frames out",
        o.frames_out.len()
    );
    ensure!(
        o.frames_out.iter().all(|f| f.width <= 32 && f.height <= 32),
        "frame larger than 32x32"
    );
    ensure!(
        o.irq_counts.iter().all(|&c| c == 20),
        "irq counts {:?}",
        o.irq_counts
    );
    let accepted = o
        .hdl
        .as_ref()
        .and_then(|h| h.accepted[0].first().copied())
        .ok_or("no frame accepted")?;
    let first_in = rise_cycle(&o, "vin0.pixel_valid").ok_or("no input pixel in trace")?;
    let first_out = rise_cycle(&o, "vout0.pixel_valid").ok_or("no output pixel in trace")?;
    ensure!(
        first_in - accepted == DRIVE_OFFSET,
        "drive offset {}",
        first_in - accepted
    );
    let latency = first_out - accepted;
    ensure!(
        latency == r * l + DRIVE_OFFSET,
        "first-pixel latency {latency}, want {}",
        r * l + DRIVE_OFFSET
    );
    Ok(format!(
        "20 frames golden-equal, irq {:?}, first-pixel latency {latency} = {r}x{l} + {DRIVE_OFFSET}",
        o.irq_counts
    ))
}

fn performance() -> Check {
    let start = Instant::now();
    let base = bench_workload(10_000);
    ensure!(
        base.hdl.response_latency == 2,
        "response latency {}",
        base.hdl.response_latency
    );
    let res = bench(&base, &[0]).map_err(|e| e.to_string())?;
    let (ls, tx) = (&res.rows[0], &res.rows[1]);
    let (lt, tt) = (&res.traffic[0], &res.traffic[1]);
    ensure!(ls.mode == "lockstep" && tx.mode == "txn", "row order");
    ensure!(
        tx.transactions == 10_000,
        "{} transactions",
        tx.transactions
    );
    // One tick/ack pair per cycle, plus per-call traffic.
    ensure!(
        lt.link.sent_of(MsgType::CycleTick) == lt.cycles,
        "lockstep ticks {} for {} cycles",
        lt.link.sent_of(MsgType::CycleTick),
        lt.cycles
    );
    let ratio = lt.link.total() as f64 / (2.0 * lt.cycles as f64);
    ensure!(
        (1.0..1.1).contains(&ratio),
        "lockstep frames / 2*cycles = {ratio:.3}"
    );
    // Transactional: one call per transaction plus the shutdown.
    ensure!(
        tt.link.total_sent() == tt.transactions + 1,
        "txn frames sent {}",
        tt.link.total_sent()
    );
    ensure!(
        tt.link.total() <= 3 * tt.transactions + 4,
        "txn frames total {}",
        tt.link.total()
    );
    let t = start.elapsed();
    within(t, Duration::from_secs(300), "benchmark")?;
    ensure!(
        tx.speedup >= 10.0,
        "speedup {:.1}x < 10x (lockstep {:.2}s, txn {:.2}s)",
        tx.speedup,
        ls.wall_seconds,
        tx.wall_seconds
    );
    Ok(format!(
        "speedup {:.1}x (lockstep {:.2}s, txn {:.2}s, {} cycles); frames lockstep {} = {ratio:.3} x 2 x cycles, txn sent {} = txns + 1, total {}; {:.1}s",
        tx.speedup,
        ls.wall_seconds,
        tx.wall_seconds,
        ls.cycles,
        lt.link.total(),
        tt.link.total_sent(),
        tt.link.total(),
        t.as_secs_f64()
    ))
}

fn coverage_parity(outs: &[RunOutcome]) -> Check {
    let cov = outs[0].coverage.to_string();
    ensure!(
        outs.iter().all(|o| o.coverage.to_string() == cov),
        "register coverage differs across modes"
    );
    let mut video = Vec::new();
    for mode in [LinkMode::Lockstep, LinkMode::Transactional] {
        let mut cfg = RunConfig::new("subsystem_chain").mode(mode).seed(9);
        configure_for(&mut cfg);
        video.push(run(&cfg)?.coverage.to_string());
    }
    ensure!(video[0] == video[1], "video coverage differs across modes");
    let res = regress(&RunConfig::default()).map_err(|e| e.to_string())?;
    ensure!(res.exit_code() == 0, "regression failed: {:?}", res.runs);
    let hit = res.coverage.bins_hit();
    let pct = res.coverage.percent();
    ensure!(pct >= 90.0, "regression covers {hit}/{} bins", BINS.len());
    Ok(format!(
        "coverage identical across modes; regression hits {hit}/{} bins ({pct:.1}%)",
        BINS.len()
    ))
}

/// Untimed-side sources whose public surface must stay free of time and
/// pin primitives.
const HVL_SOURCES: [(&str, &str); 11] = [
    ("uvm/analysis.rs", include_str!("../src/uvm/analysis.rs")),
    ("uvm/component.rs", include_str!("../src/uvm/component.rs")),
    ("uvm/mod.rs", include_str!("../src/uvm/mod.rs")),
    ("uvm/registry.rs", include_str!("../src/uvm/registry.rs")),
    ("uvm/report.rs", include_str!("../src/uvm/report.rs")),
    ("uvm/sequencer.rs", include_str!("../src/uvm/sequencer.rs")),
    ("vip/reg_proxy.rs", include_str!("../src/vip/reg_proxy.rs")),
    (
        "vip/video_proxy.rs",
        include_str!("../src/vip/video_proxy.rs"),
    ),
    ("vip/regmodel.rs", include_str!("../src/vip/regmodel.rs")),
    (
        "vip/scoreboard.rs",
        include_str!("../src/vip/scoreboard.rs"),
    ),
    ("link/hvl.rs", include_str!("../src/link/hvl.rs")),
];

const FORBIDDEN: [&str; 14] = [
    "step", "tick", "delay", "sleep", "wait", "cycle", "time", "clock", "advance", "poke", "peek",
    "pin", "signal", "force",
];

/// The link calls that are allowed to move time on the other side.
const DIRECTIVES: [&str; 4] = ["xtf_call", "begin_call", "finish_call", "advance"];

fn public_fns(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| l.trim_start().strip_prefix("pub fn "))
        .map(|rest| rest.split(['(', '<']).next().unwrap_or("").to_string())
        .collect()
}

fn hvl_surface() -> Check {
    let mut manifest = Vec::new();
    for (file, src) in HVL_SOURCES {
        for bad in [
            "crate::kernel",
            "Kernel",
            "SignalId",
            "SimTime",
            "ProcessIo",
            "thread::sleep",
        ] {
            ensure!(!src.contains(bad), "{file} refers to `{bad}`");
        }
        for f in public_fns(src) {
            manifest.push(format!("{file}::{f}"));
            let allowed = file == "link/hvl.rs" && DIRECTIVES.contains(&f.as_str());
            if !allowed {
                if let Some(w) = FORBIDDEN.iter().find(|w| f.contains(*w)) {
                    // Reporting a count is not a time primitive.
                    ensure!(
                        f == "observe_cycles",
                        "{file}::{f} looks like a `{w}` primitive"
                    );
                }
            }
        }
    }
    let mut outside = 0;
    for mode in [LinkMode::Lockstep, LinkMode::Transactional] {
        for test in ["reg_smoke", "isp_frames"] {
            let mut cfg = RunConfig::new(test).mode(mode);
            configure_for(&mut cfg);
            let o = run(&cfg)?;
            let h = o.hdl.as_ref().ok_or("timed side report missing")?;
            outside += h.server.stats.cycles_outside_directives;
            ensure!(
                h.server.stats.directive_cycles == o.summary.cycles,
                "{test} {mode}: directive cycles {} vs run {}",
                h.server.stats.directive_cycles,
                o.summary.cycles
            );
        }
    }
    ensure!(
        outside == 0,
        "{outside} cycles advanced outside link directives"
    );
    Ok(format!(
        "{} public HVL functions checked; 0 cycles outside directives in 4 runs",
        manifest.len()
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, r: std::thread::Result<Check>| {
        let line = match r {
            Ok(Ok(detail)) => format!("criterion {n} {name}: PASS: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                format!("criterion {n} {name}: FAIL: {why}")
            }
            Err(_) => {
                failed += 1;
                format!("criterion {n} {name}: FAIL: panicked")
            }
        };
        println!("{line}");
    };
    let guard = |f: &dyn Fn() -> Check| catch_unwind(AssertUnwindSafe(f));

    report(1, "codec", guard(&codec_properties));
    report(2, "wire", guard(&wire_conformance));
    let four = catch_unwind(four_way).unwrap_or_else(|_| Err("panicked".into()));
    report(
        3,
        "cross-mode determinism",
        guard(&|| {
            four.as_ref()
                .map_err(Clone::clone)
                .and_then(|(o, t)| cross_mode_determinism(o, *t))
        }),
    );
    report(4, "register correctness", guard(&register_correctness));
    report(5, "isp equivalence", guard(&isp_equivalence));
    report(6, "performance", guard(&performance));
    report(
        7,
        "coverage parity",
        guard(&|| {
            four.as_ref()
                .map_err(Clone::clone)
                .and_then(|(o, _)| coverage_parity(o))
        }),
    );
    report(8, "untimed surface", guard(&hvl_surface));

    if failed == 0 {
        println!("acceptance: 8/8 PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 FAIL");
        ExitCode::FAILURE
    }
}
