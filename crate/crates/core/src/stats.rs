//! Summary statistics over event logs: waiting-time series, per-label
//! counts, and the event-count distribution, written as JSON plus
//! plot-ready CSV tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{read_event_log, EventLogLine, LogHeader};

/// Waiting-time statistics at one event index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexStat {
    pub k: usize,
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean (0 when count < 2).
    pub sem: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub config_sha256: String,
    pub master_seed: u64,
    pub trajectories: usize,
    pub total_events: usize,
    pub mean_events_per_trajectory: f64,
    /// Mean waiting time pooled over all events (first waiting time counted
    /// from t0); absent for an empty log.
    pub overall_mean_inter_event: Option<f64>,
    pub per_label_counts: BTreeMap<String, usize>,
    /// event count -> number of trajectories (including quiet ones).
    pub event_count_distribution: BTreeMap<usize, usize>,
    pub mean_inter_event_by_index: Vec<IndexStat>,
}

/// Per-trajectory waiting-time rows (trajectory, k, dt) in log order.
pub type WaitingRows = Vec<(usize, usize, f64)>;

fn waiting_rows(header: &LogHeader, events: &[EventLogLine]) -> Result<WaitingRows> {
    let mut rows = Vec::with_capacity(events.len());
    let mut last: Option<(usize, usize, f64)> = None;
    for e in events {
        let prev_t = match last {
            Some((traj, k, t)) if traj == e.traj => {
                if e.k != k + 1 || e.t <= t {
                    return Err(Error::MalformedLog(format!(
                        "trajectory {}: event k={} at t={} does not follow k={} at t={}",
                        e.traj, e.k, e.t, k, t
                    )));
                }
                t
            }
            _ => {
                if e.k != 1 {
                    return Err(Error::MalformedLog(format!(
                        "trajectory {}: first event has k={}, expected 1",
                        e.traj, e.k
                    )));
                }
                header.t0
            }
        };
        rows.push((e.traj, e.k, e.t - prev_t));
        last = Some((e.traj, e.k, e.t));
    }
    Ok(rows)
}

/// Build the report from a parsed log.
pub fn stats_report(header: &LogHeader, events: &[EventLogLine]) -> Result<StatsReport> {
    let rows = waiting_rows(header, events)?;

    let mut per_label: BTreeMap<String, usize> = BTreeMap::new();
    for e in events {
        *per_label.entry(e.label.clone()).or_insert(0) += 1;
    }

    let mut per_traj_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in events {
        *per_traj_counts.entry(e.traj).or_insert(0) += 1;
    }
    let mut distribution: BTreeMap<usize, usize> = BTreeMap::new();
    let quiet = header.trajectories.saturating_sub(per_traj_counts.len());
    if quiet > 0 {
        distribution.insert(0, quiet);
    }
    for &c in per_traj_counts.values() {
        *distribution.entry(c).or_insert(0) += 1;
    }

    // Waiting-time moments grouped by event index.
    let mut by_index: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for &(_, k, dt) in &rows {
        let slot = by_index.entry(k).or_insert((0, 0.0, 0.0));
        slot.0 += 1;
        slot.1 += dt;
        slot.2 += dt * dt;
    }
    let mean_inter_event_by_index = by_index
        .into_iter()
        .map(|(k, (n, sum, sumsq))| {
            let mean = sum / n as f64;
            let sem = if n > 1 {
                let var = (sumsq - sum * sum / n as f64) / (n as f64 - 1.0);
                (var.max(0.0) / n as f64).sqrt()
            } else {
                0.0
            };
            IndexStat {
                k,
                count: n,
                mean,
                sem,
            }
        })
        .collect();

    let total_events = events.len();
    Ok(StatsReport {
        config_sha256: header.config_sha256.clone(),
        master_seed: header.master_seed,
        trajectories: header.trajectories,
        total_events,
        mean_events_per_trajectory: if header.trajectories > 0 {
            total_events as f64 / header.trajectories as f64
        } else {
            0.0
        },
        overall_mean_inter_event: if rows.is_empty() {
            None
        } else {
            Some(rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64)
        },
        per_label_counts: per_label,
        event_count_distribution: distribution,
        mean_inter_event_by_index,
    })
}

/// Read a log and write `report.json` plus CSV tables into `dir`.
pub fn write_stats_report(log_path: &Path, dir: &Path) -> Result<StatsReport> {
    let (header, events) = read_event_log(log_path)?;
    let report = stats_report(&header, &events)?;
    let rows = waiting_rows(&header, &events)?;
    std::fs::create_dir_all(dir)?;

    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json)?;

    let mut f = std::fs::File::create(dir.join("inter_event_times.csv"))?;
    writeln!(f, "trajectory,k,dt")?;
    for (traj, k, dt) in &rows {
        writeln!(f, "{traj},{k},{dt}")?;
    }

    let mut f = std::fs::File::create(dir.join("mean_inter_event_by_index.csv"))?;
    writeln!(f, "k,count,mean,sem")?;
    for s in &report.mean_inter_event_by_index {
        writeln!(f, "{},{},{},{}", s.k, s.count, s.mean, s.sem)?;
    }

    let mut f = std::fs::File::create(dir.join("label_counts.csv"))?;
    writeln!(f, "label,count")?;
    for (label, count) in &report.per_label_counts {
        writeln!(f, "{label},{count}")?;
    }

    let mut f = std::fs::File::create(dir.join("event_count_distribution.csv"))?;
    writeln!(f, "events,trajectories")?;
    for (events_n, trajs) in &report.event_count_distribution {
        writeln!(f, "{events_n},{trajs}")?;
    }

    Ok(report)
}
