use std::fmt;

use super::component::Phase;
use super::UvmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Error,
    Fatal,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Info => "INFO",
            Severity::Error => "ERROR",
            Severity::Fatal => "FATAL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportEntry {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ReportEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.severity, self.path, self.message)
    }
}

#[derive(Debug, Default)]
pub struct Reporter {
    entries: Vec<ReportEntry>,
}

impl Reporter {
    pub fn log(&mut self, severity: Severity, path: &str, msg: impl Into<String>) {
        self.entries.push(ReportEntry {
            severity,
            path: path.to_string(),
            message: msg.into(),
        });
    }
}

/// Outcome of one phase-engine run.
#[derive(Debug, Default)]
pub struct ReportSummary {
    pub errors: u64,
    pub warnings: u64,
    pub transactions: u64,
    pub cycles: u64,
    pub run_rounds: u64,
    /// The error that aborted the engine and the phase it happened in.
    pub fatal: Option<(Phase, UvmError)>,
    pub log: Vec<ReportEntry>,
}

impl ReportSummary {
    pub(super) fn finish(&mut self, reporter: Reporter) {
        self.errors += reporter
            .entries
            .iter()
            .filter(|e| e.severity == Severity::Error)
            .count() as u64;
        self.log = reporter.entries;
    }

    pub fn passed(&self) -> bool {
        self.errors == 0 && self.fatal.is_none()
    }

    /// 0 clean, 2 when elaboration failed, 1 for any other failure.
    pub fn exit_code(&self) -> i32 {
        match &self.fatal {
            Some((Phase::Build | Phase::Connect, _)) => 2,
            Some(_) => 1,
            None if self.errors > 0 => 1,
            None => 0,
        }
    }
}

impl fmt::Display for ReportSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, errors={}, transactions={}, cycles={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.errors + u64::from(self.fatal.is_some()),
            self.transactions,
            self.cycles
        )
    }
}
