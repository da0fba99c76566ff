//! Slot-loop orchestration: geometry -> channel statistics -> allocation ->
//! handover -> metrics, over multiple seeded runs, plus the cluster-size
//! sweep behind the service-time and spectral-efficiency experiments.
//!
//! Runs are independent and execute in parallel; each one owns its RNG
//! lineage derived from `(seed, run, purpose)`, so results are identical
//! regardless of scheduling and the sweep pairs runs across modes and
//! cluster sizes by construction.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::allocation::{
    best_channel_allocate, ga_solve, max_serv_time_allocate, AllocationProblem, PowerSolution,
};
use crate::channel::large_scale;
use crate::config::{Mode, SimConfig};
use crate::geometry::{build_constellation, propagate, GeometryError};
use crate::handover::{self, HandoverState};
use crate::metrics::{self, EventRecord, MetricsError, MetricsLog, RateRow, SummaryRow};
use crate::rng::{self, purpose};
use crate::training::{assign_pilots, PilotPolicy};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Aggregates of one (mode, cluster size) cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub mode: Mode,
    pub num_saps: usize,
    pub avg_se: f64,
    pub avg_service_time_s: f64,
    pub handover_rate: f64,
}

/// All cells of a sweep plus their raw logs, in (sap_count, mode) order.
pub struct SweepOutcome {
    pub cells: Vec<(SweepCell, MetricsLog)>,
}

fn idle_solution(m: usize, k: usize) -> PowerSolution {
    PowerSolution {
        power: ndarray::Array2::zeros((m, k)),
        admitted: vec![false; k],
        objective: 0.0,
        rates: vec![0.0; k],
        feasible: true,
    }
}

fn run_single(
    config: &SimConfig,
    run: usize,
) -> Result<(Vec<RateRow>, Vec<EventRecord>), SimError> {
    let geom = config.geometry();
    let chan = config.channel();
    let frame = config.frame();
    let noise_var = config.noise_var_w();
    let (m, k) = (config.num_saps, config.num_uts);
    let run_label = run as u64;

    let pa = assign_pilots(k, config.tau_up, &PilotPolicy::RoundRobin, config.pilot_power_w());
    let initial = build_constellation(
        &geom,
        &mut rng::stream(config.seed, &[run_label, purpose::UT_POSITIONS]),
    )?;

    let mut state = match config.mode {
        Mode::CfJpahm => HandoverState::new_cf(k, config.handover_confirm_slots),
        _ => HandoverState::new_baseline(k),
    };
    let mut prev_assoc: Vec<Option<usize>> = vec![None; k];
    let mut rows = Vec::with_capacity(config.horizon_slots * k);
    let mut events = Vec::new();

    for t in 0..config.horizon_slots {
        let snapshot = propagate(&initial, &geom, t, config.slot_duration_s);
        // same stream every slot: shadowing is large-scale, fixed per run
        let ls = large_scale(
            &snapshot,
            &chan,
            &mut rng::stream(config.seed, &[run_label, purpose::SHADOWING]),
        );
        let active = match config.mode {
            Mode::CfJpahm => state.active_mask(),
            _ => vec![true; k],
        };
        let problem = AllocationProblem {
            ls: &ls,
            pa: &pa,
            noise_var,
            frame,
            active: active.clone(),
            r_min: vec![config.r_min_bps_hz; k],
            p_max: vec![config.p_max_w(); m],
            alpha: config.alpha,
        };

        let solution = match config.mode {
            Mode::CfJpahm => {
                if active.iter().any(|&a| a) {
                    let ga = config
                        .ga_params(rng::derive_seed(config.seed, &[run_label, purpose::GA, t as u64]));
                    ga_solve(&problem, &ga)
                } else {
                    idle_solution(m, k)
                }
            }
            Mode::BestChannel => best_channel_allocate(&problem),
            Mode::MaxServTime => max_serv_time_allocate(&problem, &prev_assoc),
        };

        let slot_events = match config.mode {
            Mode::CfJpahm => handover::update(&mut state, &solution, &snapshot, t),
            _ => {
                let assoc = solution.single_sap_association();
                let evs = handover::update_baseline(&mut state, &assoc, t);
                prev_assoc = assoc;
                evs
            }
        };
        events.extend(slot_events.into_iter().map(|event| EventRecord { run, event }));

        for ut in 0..k {
            rows.push(RateRow {
                run,
                slot: t,
                ut,
                rate: solution.rates[ut],
                served: solution.admitted[ut],
                assoc: state.uts[ut].serving,
            });
        }
    }

    Ok((rows, events))
}

/// Executes all runs of one configuration. Deterministic in `(config,
/// seed)`: per-run streams make the parallel schedule irrelevant.
pub fn run(config: &SimConfig) -> Result<MetricsLog, SimError> {
    let per_run: Vec<Result<(Vec<RateRow>, Vec<EventRecord>), SimError>> = (0..config.num_runs)
        .into_par_iter()
        .map(|r| run_single(config, r))
        .collect();

    let mut rows = Vec::new();
    let mut events = Vec::new();
    for outcome in per_run {
        let (r, e) = outcome?;
        rows.extend(r);
        events.extend(e);
    }
    Ok(MetricsLog {
        num_runs: config.num_runs,
        horizon_slots: config.horizon_slots,
        num_uts: config.num_uts,
        slot_duration_s: config.slot_duration_s,
        rows,
        events,
    })
}

/// Summarizes one log into its sweep cell.
pub fn summarize(log: &MetricsLog, mode: Mode, num_saps: usize) -> SweepCell {
    let (avg_service_time_s, handover_rate) =
        handover::service_time_stats(log).expect("non-empty log");
    SweepCell {
        mode,
        num_saps,
        avg_se: log.avg_spectral_efficiency(),
        avg_service_time_s,
        handover_rate,
    }
}

/// Runs every (cluster size, mode) cell on shared per-run seeds so modes
/// compare against identical terminals and shadowing.
pub fn sweep(config: &SimConfig, sap_counts: &[usize]) -> Result<SweepOutcome, SimError> {
    let mut cells = Vec::new();
    for &num_saps in sap_counts {
        for mode in Mode::ALL {
            let mut cell_config = config.clone();
            cell_config.num_saps = num_saps;
            cell_config.mode = mode;
            let log = run(&cell_config)?;
            let cell = summarize(&log, mode, num_saps);
            cells.push((cell, log));
        }
    }
    Ok(SweepOutcome { cells })
}

fn summary_row(cell: &SweepCell) -> SummaryRow {
    SummaryRow {
        mode: cell.mode.as_str().to_string(),
        num_saps: cell.num_saps,
        avg_se: cell.avg_se,
        avg_service_time_s: cell.avg_service_time_s,
        handover_rate: cell.handover_rate,
    }
}

/// Exports a single run's outputs into `dir`.
pub fn write_run_outputs(
    log: &MetricsLog,
    config: &SimConfig,
    dir: &Path,
) -> Result<(), SimError> {
    let cell = summarize(log, config.mode, config.num_saps);
    metrics::export(log, &[summary_row(&cell)], &config.echo(), dir)?;
    Ok(())
}

/// Exports one directory per sweep cell plus a combined `summary.csv` and
/// the resolved configuration at the top level.
pub fn write_sweep_outputs(
    outcome: &SweepOutcome,
    config: &SimConfig,
    dir: &Path,
) -> Result<(), SimError> {
    let mut summary = Vec::new();
    for (cell, log) in &outcome.cells {
        let mut cell_config = config.clone();
        cell_config.num_saps = cell.num_saps;
        cell_config.mode = cell.mode;
        let sub = dir.join(format!("{}_m{}", cell.mode.as_str(), cell.num_saps));
        metrics::export(log, &[summary_row(cell)], &cell_config.echo(), &sub)?;
        summary.push(summary_row(cell));
    }
    std::fs::create_dir_all(dir).map_err(|source| MetricsError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let summary_text = metrics::summary_csv(&summary);
    std::fs::write(dir.join("summary.csv"), summary_text).map_err(|source| MetricsError::Io {
        path: dir.join("summary.csv").display().to_string(),
        source,
    })?;
    std::fs::write(dir.join("config.echo"), config.echo()).map_err(|source| MetricsError::Io {
        path: dir.join("config.echo").display().to_string(),
        source,
    })?;
    Ok(())
}
