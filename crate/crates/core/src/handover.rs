//! Per-UT association tracking and handover bookkeeping.
//!
//! In cell-free mode a UT stays with the serving cluster until the allocator
//! repeatedly fails to admit it; each failed slot raises a handover request,
//! and once the failure count reaches the confirmation threshold while the
//! trailing cluster sees the UT, the handover is confirmed and executed in
//! the same slot. A repeated failure without next-cluster visibility is a
//! false alarm avoided by the confirmation step. Baseline modes have no
//! request protocol: any re-association is an executed handover.

use thiserror::Error;

use crate::allocation::PowerSolution;
use crate::geometry::ClusterSnapshot;
use crate::metrics::MetricsLog;

/// Association id used in state, events and CSV output: the serving cluster
/// index in cell-free mode, the serving SAP index in baseline modes.
pub const UNASSOCIATED: i64 = -1;

#[derive(Debug, Error)]
pub enum HandoverError {
    #[error("metrics log is empty")]
    EmptyLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Request,
    Confirmed,
    Executed,
    FalseAlarmAvoided,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Request => "request",
            EventKind::Confirmed => "confirmed",
            EventKind::Executed => "executed",
            EventKind::FalseAlarmAvoided => "false_alarm_avoided",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HandoverEvent {
    pub slot: usize,
    pub ut: usize,
    pub kind: EventKind,
    pub from: i64,
    pub to: i64,
}

#[derive(Debug, Clone)]
pub struct UtState {
    pub serving: i64,
    pub consecutive_infeasible: u32,
    pub connected_since: usize,
    pub pending_request: bool,
}

#[derive(Debug, Clone)]
pub struct HandoverState {
    /// Consecutive infeasible slots needed before a handover can execute
    pub confirm_slots: u32,
    pub uts: Vec<UtState>,
}

impl HandoverState {
    /// Cell-free initial state: everyone served by cluster 0.
    pub fn new_cf(num_uts: usize, confirm_slots: u32) -> Self {
        Self {
            confirm_slots,
            uts: (0..num_uts)
                .map(|_| UtState {
                    serving: 0,
                    consecutive_infeasible: 0,
                    connected_since: 0,
                    pending_request: false,
                })
                .collect(),
        }
    }

    /// Baseline initial state: unassociated until the first allocation.
    pub fn new_baseline(num_uts: usize) -> Self {
        Self {
            confirm_slots: 0,
            uts: (0..num_uts)
                .map(|_| UtState {
                    serving: UNASSOCIATED,
                    consecutive_infeasible: 0,
                    connected_since: 0,
                    pending_request: false,
                })
                .collect(),
        }
    }

    /// UTs still in this cluster's allocation problem (cell-free mode).
    pub fn active_mask(&self) -> Vec<bool> {
        self.uts.iter().map(|s| s.serving == 0).collect()
    }
}

/// Advances the cell-free handover state by one slot. UTs already handed
/// over to the next cluster are left untouched.
pub fn update(
    state: &mut HandoverState,
    solution: &PowerSolution,
    snapshot: &ClusterSnapshot,
    t: usize,
) -> Vec<HandoverEvent> {
    let mut events = Vec::new();
    for (k, ut) in state.uts.iter_mut().enumerate() {
        if ut.serving != 0 {
            continue;
        }
        if solution.admitted[k] {
            ut.consecutive_infeasible = 0;
            ut.pending_request = false;
            continue;
        }
        ut.consecutive_infeasible += 1;
        ut.pending_request = true;
        events.push(HandoverEvent {
            slot: t,
            ut: k,
            kind: EventKind::Request,
            from: 0,
            to: 1,
        });
        if ut.consecutive_infeasible >= state.confirm_slots {
            if snapshot.next_cluster_visible[k] {
                events.push(HandoverEvent {
                    slot: t,
                    ut: k,
                    kind: EventKind::Confirmed,
                    from: 0,
                    to: 1,
                });
                events.push(HandoverEvent {
                    slot: t,
                    ut: k,
                    kind: EventKind::Executed,
                    from: 0,
                    to: 1,
                });
                ut.serving = 1;
                ut.connected_since = t;
                ut.consecutive_infeasible = 0;
                ut.pending_request = false;
            } else {
                events.push(HandoverEvent {
                    slot: t,
                    ut: k,
                    kind: EventKind::FalseAlarmAvoided,
                    from: 0,
                    to: 1,
                });
            }
        }
    }
    events
}

/// Advances baseline association state: an executed handover is emitted
/// whenever a UT that had a serving SAP moves to a different one (or loses
/// it). First-time attachment is not a handover.
pub fn update_baseline(
    state: &mut HandoverState,
    associations: &[Option<usize>],
    t: usize,
) -> Vec<HandoverEvent> {
    let mut events = Vec::new();
    for (k, ut) in state.uts.iter_mut().enumerate() {
        let new = associations[k].map_or(UNASSOCIATED, |m| m as i64);
        if new == ut.serving {
            continue;
        }
        if ut.serving != UNASSOCIATED {
            events.push(HandoverEvent {
                slot: t,
                ut: k,
                kind: EventKind::Executed,
                from: ut.serving,
                to: new,
            });
        }
        ut.serving = new;
        ut.connected_since = t;
    }
    events
}

/// Average service time (s) and executed-handover rate (events/UT/s) over a
/// complete log. Service intervals are the maximal runs of constant
/// association per (run, UT); completed and ongoing intervals pool together,
/// so each UT's interval lengths sum exactly to the horizon.
pub fn service_time_stats(log: &MetricsLog) -> Result<(f64, f64), HandoverError> {
    if log.rows.is_empty() {
        return Err(HandoverError::EmptyLog);
    }
    let mut intervals = 0usize;
    let mut total_slots = 0usize;
    for run in 0..log.num_runs {
        for ut in 0..log.num_uts {
            let mut prev: Option<i64> = None;
            for slot in 0..log.horizon_slots {
                let assoc = log.rows[log.row_index(run, slot, ut)].assoc;
                if prev != Some(assoc) {
                    intervals += 1;
                    prev = Some(assoc);
                }
                total_slots += 1;
            }
        }
    }
    let avg_service_s = log.slot_duration_s * total_slots as f64 / intervals as f64;

    let executed = log
        .events
        .iter()
        .filter(|e| e.event.kind == EventKind::Executed)
        .count();
    let ut_seconds =
        (log.num_runs * log.num_uts * log.horizon_slots) as f64 * log.slot_duration_s;
    Ok((avg_service_s, executed as f64 / ut_seconds))
}
