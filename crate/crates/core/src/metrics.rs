//! Per-slot metrics log and the CSV outputs of a run.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-parsing a CSV reproduces the exact bit pattern and re-exporting the
//! same log yields byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::handover::{EventKind, HandoverEvent};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed csv at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One (run, slot, UT) observation.
#[derive(Debug, Clone)]
pub struct RateRow {
    pub run: usize,
    pub slot: usize,
    pub ut: usize,
    /// Achievable DL rate this slot (bps/Hz)
    pub rate: f64,
    /// Whether the UT was admitted with its rate floor met
    pub served: bool,
    /// Association id (cluster in CF mode, SAP in baselines, -1 none)
    pub assoc: i64,
}

#[derive(Debug, Clone)]
pub struct EventRecord {
    pub run: usize,
    pub event: HandoverEvent,
}

/// Complete log of a (possibly multi-run) simulation.
#[derive(Debug, Clone)]
pub struct MetricsLog {
    pub num_runs: usize,
    pub horizon_slots: usize,
    pub num_uts: usize,
    pub slot_duration_s: f64,
    /// Rows in (run, slot, ut) order, dense
    pub rows: Vec<RateRow>,
    pub events: Vec<EventRecord>,
}

impl MetricsLog {
    /// Index of the dense row for (run, slot, ut).
    pub fn row_index(&self, run: usize, slot: usize, ut: usize) -> usize {
        let idx = (run * self.horizon_slots + slot) * self.num_uts + ut;
        debug_assert_eq!(
            (self.rows[idx].run, self.rows[idx].slot, self.rows[idx].ut),
            (run, slot, ut)
        );
        idx
    }

    /// Mean over (run, UT) of the UT's time-averaged rate (bps/Hz).
    pub fn avg_spectral_efficiency(&self) -> f64 {
        let mut total = 0.0;
        for run in 0..self.num_runs {
            for ut in 0..self.num_uts {
                let mut acc = 0.0;
                for slot in 0..self.horizon_slots {
                    acc += self.rows[self.row_index(run, slot, ut)].rate;
                }
                total += acc / self.horizon_slots as f64;
            }
        }
        total / (self.num_runs * self.num_uts) as f64
    }

    pub fn executed_handovers(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.event.kind == EventKind::Executed)
            .count()
    }
}

fn kind_from_str(s: &str) -> Option<EventKind> {
    match s {
        "request" => Some(EventKind::Request),
        "confirmed" => Some(EventKind::Confirmed),
        "executed" => Some(EventKind::Executed),
        "false_alarm_avoided" => Some(EventKind::FalseAlarmAvoided),
        _ => None,
    }
}

pub fn rates_csv(log: &MetricsLog) -> String {
    let mut out = String::from("run,slot,ut,rate,served,assoc\n");
    for row in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.run,
            row.slot,
            row.ut,
            row.rate,
            u8::from(row.served),
            row.assoc
        );
    }
    out
}

pub fn events_csv(log: &MetricsLog) -> String {
    let mut out = String::from("run,slot,ut,kind,from,to\n");
    for record in &log.events {
        let e = &record.event;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            record.run,
            e.slot,
            e.ut,
            e.kind.as_str(),
            e.from,
            e.to
        );
    }
    out
}

/// Rebuilds a log from its CSV representations (the aggregate-consistency
/// path: summary values recomputed from files must match the exported
/// summary).
pub fn parse_csv(
    rates: &str,
    events: &str,
    slot_duration_s: f64,
) -> Result<MetricsLog, MetricsError> {
    let mut rows = Vec::new();
    for (i, line) in rates.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(MetricsError::Parse {
                line: i + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse_err = |message: String| MetricsError::Parse {
            line: i + 1,
            message,
        };
        rows.push(RateRow {
            run: fields[0].parse().map_err(|e| parse_err(format!("run: {e}")))?,
            slot: fields[1].parse().map_err(|e| parse_err(format!("slot: {e}")))?,
            ut: fields[2].parse().map_err(|e| parse_err(format!("ut: {e}")))?,
            rate: fields[3].parse().map_err(|e| parse_err(format!("rate: {e}")))?,
            served: fields[4] == "1",
            assoc: fields[5].parse().map_err(|e| parse_err(format!("assoc: {e}")))?,
        });
    }
    let mut parsed_events = Vec::new();
    for (i, line) in events.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(MetricsError::Parse {
                line: i + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse_err = |message: String| MetricsError::Parse {
            line: i + 1,
            message,
        };
        parsed_events.push(EventRecord {
            run: fields[0].parse().map_err(|e| parse_err(format!("run: {e}")))?,
            event: HandoverEvent {
                slot: fields[1].parse().map_err(|e| parse_err(format!("slot: {e}")))?,
                ut: fields[2].parse().map_err(|e| parse_err(format!("ut: {e}")))?,
                kind: kind_from_str(fields[3]).ok_or_else(|| parse_err(format!(
                    "unknown event kind {}",
                    fields[3]
                )))?,
                from: fields[4].parse().map_err(|e| parse_err(format!("from: {e}")))?,
                to: fields[5].parse().map_err(|e| parse_err(format!("to: {e}")))?,
            },
        });
    }
    let num_runs = rows.iter().map(|r| r.run + 1).max().unwrap_or(0);
    let horizon_slots = rows.iter().map(|r| r.slot + 1).max().unwrap_or(0);
    let num_uts = rows.iter().map(|r| r.ut + 1).max().unwrap_or(0);
    Ok(MetricsLog {
        num_runs,
        horizon_slots,
        num_uts,
        slot_duration_s,
        rows,
        events: parsed_events,
    })
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mode: String,
    pub num_saps: usize,
    pub avg_se: f64,
    pub avg_service_time_s: f64,
    pub handover_rate: f64,
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("mode,M,avg_se,avg_service_time,handover_rate\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.mode, row.num_saps, row.avg_se, row.avg_service_time_s, row.handover_rate
        );
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), MetricsError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `rates.csv`, `events.csv`, `summary.csv` and `config.echo` into
/// `dir` (created if missing).
pub fn export(
    log: &MetricsLog,
    summary: &[SummaryRow],
    config_echo: &str,
    dir: &Path,
) -> Result<(), MetricsError> {
    fs::create_dir_all(dir).map_err(|source| MetricsError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(dir, "rates.csv", &rates_csv(log))?;
    write_file(dir, "events.csv", &events_csv(log))?;
    write_file(dir, "summary.csv", &summary_csv(summary))?;
    write_file(dir, "config.echo", config_echo)?;
    Ok(())
}
