use std::io::Write;

use serde::Serialize;

use crate::link::hvl::LinkStats;
use crate::link::transport::TransportKind;
use crate::link::LinkMode;

use super::config::RunConfig;
use super::run::{run_test, RunOutcome};
use super::RunError;

/// Idle cycles after each register response in the benchmark workload, so
/// a transaction spans enough cycles for per-cycle synchronization cost to
/// show.
pub const BENCH_BUS_GAP: u32 = 36;

/// One cell of the benchmark matrix, in CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub gate_factor: u32,
    pub mode: String,
    pub cycles: u64,
    pub transactions: u64,
    pub wall_seconds: f64,
    /// Wall time of the lockstep cell with the same gate factor divided by
    /// this cell's.
    pub speedup: f64,
}

/// Link traffic of a cell, kept beside the CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchTraffic {
    /// Frames counted on the testbench side of the link.
    pub link: LinkStats,
    pub transactions: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub traffic: Vec<BenchTraffic>,
}

impl BenchResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| RunError::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table for the terminal.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>11} {:>9} {:>10} {:>12} {:>12} {:>8}\n",
            "gate_factor", "mode", "cycles", "transactions", "wall_seconds", "speedup"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:>11} {:>9} {:>10} {:>12} {:>12.4} {:>7.2}x\n",
                r.gate_factor, r.mode, r.cycles, r.transactions, r.wall_seconds, r.speedup
            ));
        }
        s
    }
}

/// Functional fingerprint of a run; every benchmark cell must agree.
fn fingerprint(o: &RunOutcome) -> (Vec<Vec<String>>, String, String) {
    (o.txn_logs.clone(), o.coverage.to_string(), o.verdict())
}

/// Runs `base` once per `(gate_factor, mode)` cell, lockstep first.
///
/// Fails if any cell fails its checks or differs functionally from the
/// first, since timing is only comparable between identical runs.
pub fn bench(base: &RunConfig, gate_factors: &[u32]) -> Result<BenchResult, RunError> {
    let mut rows = Vec::new();
    let mut traffic = Vec::new();
    let mut reference = None;
    for &g in gate_factors {
        let mut lockstep_wall = None;
        for mode in [LinkMode::Lockstep, LinkMode::Transactional] {
            let mut run = base.clone();
            run.hdl.gate_factor = g;
            run.hdl.mode = mode;
            let o = run_test(&run)?;
            if !o.passed() {
                return Err(RunError::Mismatch(format!(
                    "gate_factor={g} mode={mode}: {}",
                    o.verdict()
                )));
            }
            let fp = fingerprint(&o);
            match &reference {
                None => reference = Some(fp),
                Some(r) if *r != fp => {
                    return Err(RunError::Mismatch(format!(
                        "gate_factor={g} mode={mode} differs functionally from the first cell"
                    )))
                }
                Some(_) => {}
            }
            let wall = o.wall.as_secs_f64();
            let base_wall = *lockstep_wall.get_or_insert(wall);
            rows.push(BenchRow {
                gate_factor: g,
                mode: mode.to_string(),
                cycles: o.summary.cycles,
                transactions: o.summary.transactions,
                wall_seconds: wall,
                speedup: base_wall / wall,
            });
            traffic.push(BenchTraffic {
                link: o.link_stats,
                transactions: o.summary.transactions,
                cycles: o.summary.cycles,
            });
        }
    }
    Ok(BenchResult { rows, traffic })
}

/// The benchmark workload: random register traffic over a localhost socket.
pub fn bench_workload(txns: u64) -> RunConfig {
    let mut r = RunConfig::new("reg_random_rw")
        .transport(TransportKind::Socket)
        .txns(txns)
        .seed(1);
    r.hdl.bus_gap = BENCH_BUS_GAP;
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_columns() {
        let r = BenchResult {
            rows: vec![BenchRow {
                gate_factor: 0,
                mode: "lockstep".into(),
                cycles: 10,
                transactions: 2,
                wall_seconds: 0.5,
                speedup: 1.0,
            }],
            traffic: vec![],
        };
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "gate_factor,mode,cycles,transactions,wall_seconds,speedup\n0,lockstep,10,2,0.5,1.0\n"
        );
    }
}
