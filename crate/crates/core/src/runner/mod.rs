//! Test runner: environment construction from an interface topology,
//! built-in tests, seeded stimulus, functional coverage, run orchestration
//! over either transport, and the synchronization-mode benchmark.
//!
//! Exit codes: 0 when every scoreboard is clean, 1 on a functional
//! mismatch, 2 on a usage or configuration error.

mod bench;
mod builtin;
mod config;
mod coverage;
mod env;
mod hdl_top;
mod run;
mod stimulus;

pub use bench::{bench, bench_workload, BenchResult, BenchRow, BenchTraffic, BENCH_BUS_GAP};
pub use builtin::{
    configure_for, plan_for, Expect, PlanTest, Step, TestPlan, BUILTIN_TESTS, MAX_FRAME_EDGE,
};
pub use config::{parse_flat, DutKind, EnvConfig, HdlConfig, HdlLaunch, RunConfig};
pub use coverage::{CoverageDb, BINS, MEDIUM_FRAME_MAX, SMALL_FRAME_MAX};
pub use env::{build_env, EnvHandles, TestFactory, TEST_TOP};
pub use hdl_top::{build_hdl, port_table, HdlProbes};
pub use run::{run_test, serve_listener, write_pgm, HdlSideReport, RunOutcome};
pub use stimulus::Stimulus;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("unknown test `{0}`")]
    UnknownTest(String),
    #[error("functional mismatch: {0}")]
    Mismatch(String),
    #[error("testbench: {0}")]
    Uvm(String),
    #[error("timed side: {0}")]
    Sim(String),
    #[error(transparent)]
    Link(#[from] crate::link::LinkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 2 for anything the user can fix in the command or config, else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Unsupported(_) | Self::UnknownTest(_) => 2,
            _ => 1,
        }
    }
}

/// Result of a regression over several tests.
#[derive(Debug)]
pub struct RegressionResult {
    /// `(test, verdict line, exit code)` per test.
    pub runs: Vec<(String, String, i32)>,
    pub coverage: CoverageDb,
}

impl RegressionResult {
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().map(|r| r.2).max().unwrap_or(0)
    }
}

/// Runs every built-in test with its default topology, merging coverage.
pub fn regress(base: &RunConfig) -> Result<RegressionResult, RunError> {
    let mut runs = Vec::new();
    let mut coverage = CoverageDb::new();
    for t in BUILTIN_TESTS {
        let mut r = base.clone();
        r.test = t.to_string();
        r.hdl.env = EnvConfig::default();
        configure_for(&mut r);
        if let Some(d) = &base.out_dir {
            r.out_dir = Some(d.join(t));
        }
        let o = run_test(&r)?;
        coverage.merge(&o.coverage);
        runs.push((t.to_string(), o.verdict(), o.exit_code()));
    }
    Ok(RegressionResult { runs, coverage })
}
