//! JSON-Lines event logs.
//!
//! A log starts with one header object carrying the config digest and run
//! parameters, followed by one object per event ordered by
//! (trajectory, event index). Identical config and seed reproduce the file
//! byte for byte.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{RngStream, SimParams, Trajectory};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LogHeader {
    pub config_sha256: String,
    pub master_seed: u64,
    pub trajectories: usize,
    pub t0: f64,
    pub t_max: f64,
    pub step: f64,
    pub rng_algorithm: String,
}

impl LogHeader {
    pub fn new(config_sha256: &str, master_seed: u64, trajectories: usize, p: &SimParams) -> Self {
        Self {
            config_sha256: config_sha256.to_string(),
            master_seed,
            trajectories,
            t0: p.t0,
            t_max: p.t_max,
            step: p.step,
            rng_algorithm: RngStream::ALGORITHM.to_string(),
        }
    }
}

/// One event line: trajectory index, event index, time, transition, label,
/// optional state snapshot as [re, im] pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EventLogLine {
    pub traj: usize,
    pub k: usize,
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<[f64; 2]>>,
}

/// Write the header plus one line per event, ordered by (trajectory, k).
/// Returns the number of event lines.
pub fn write_event_log(
    trajectories: &[Trajectory],
    header: &LogHeader,
    path: &Path,
) -> Result<usize> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, header).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(b"\n")?;
    let mut count = 0usize;
    for (i, traj) in trajectories.iter().enumerate() {
        for e in &traj.events {
            let line = EventLogLine {
                traj: i,
                k: e.index,
                t: e.time,
                from: e.from,
                to: e.to,
                label: e.label.clone(),
                state: e.state.as_ref().map(|s| {
                    s.iter().map(|z| [z.re, z.im]).collect()
                }),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::Config(e.to_string()))?;
            w.write_all(b"\n")?;
            count += 1;
        }
    }
    w.flush()?;
    Ok(count)
}

/// Read a log back. All malformed lines are reported together with their
/// line numbers.
pub fn read_event_log(path: &Path) -> Result<(LogHeader, Vec<EventLogLine>)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::MalformedLog("empty file (missing header)".into()))??;
    let header: LogHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::MalformedLog(format!("line 1 (header): {e}")))?;
    let mut events = Vec::new();
    let mut bad = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EventLogLine>(&line) {
            Ok(e) => events.push(e),
            Err(e) => bad.push(format!("line {}: {e}", idx + 2)),
        }
    }
    if !bad.is_empty() {
        return Err(Error::MalformedLog(bad.join("; ")));
    }
    Ok((header, events))
}
