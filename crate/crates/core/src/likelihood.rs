//! Exact event-history densities.
//!
//! The joint density of the first `n` events `(a_1, t_1), ..., (a_n, t_n)`
//! starting from a normalized state in sector `a_0` at `t_0` is the squared
//! norm of the alternating product
//!
//! ```text
//! G_{a_n a_{n-1}}(t_n) W_{a_{n-1}}(t_n, t_{n-1}) ... G_{a_1 a_0}(t_1) W_{a_0}(t_1, t_0) psi_0
//! ```
//!
//! where each `W` is the between-event propagator. These products are the
//! analytical oracle that simulated event logs are tested against. A jump
//! pair with no registered channel acts as the zero operator, so histories
//! through missing channels have density zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::model::{EventModel, ModelKind, SectorId};
use crate::propagator::evolve;
use crate::trajectory::EventRecord;

/// Fixed Simpson subdivision used for windowed probabilities.
pub const SIMPSON_SUBDIVISIONS: usize = 64;

/// One recorded step of a history: the jump into `to` at `time`, optionally
/// narrowed to a labelled channel (required when several channels share the
/// sector pair, e.g. in reduced models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub time: f64,
    pub to: SectorId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Argument list of a joint-density evaluation.
///
/// With `end_time` set, the product picks up a trailing no-event factor
/// `W(end_time, t_n)`: the density then refers to "these events and nothing
/// afterwards until `end_time`".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHistory {
    pub start_sector: SectorId,
    pub start_time: f64,
    #[serde(default)]
    pub steps: Vec<HistoryStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
}

impl EventHistory {
    pub fn new(start_sector: SectorId, start_time: f64) -> Self {
        Self {
            start_sector,
            start_time,
            steps: Vec::new(),
            end_time: None,
        }
    }

    pub fn then(mut self, time: f64, to: SectorId, label: Option<&str>) -> Self {
        self.steps.push(HistoryStep {
            time,
            to,
            label: label.map(str::to_owned),
        });
        self
    }

    pub fn until(mut self, end_time: f64) -> Self {
        self.end_time = Some(end_time);
        self
    }

    pub fn num_events(&self) -> usize {
        self.steps.len()
    }

    /// Times strictly increasing, sectors in range, and (for
    /// sector-resolved models) consecutive sectors different.
    fn validate(&self, m: &EventModel) -> Result<()> {
        if self.start_sector >= m.num_sectors() {
            return Err(Error::UnknownSector(self.start_sector));
        }
        let mut t = self.start_time;
        let mut alpha = self.start_sector;
        for (k, s) in self.steps.iter().enumerate() {
            if !(s.time > t) {
                return Err(Error::InvalidHistory(format!(
                    "event times must increase strictly (step {k}: {} after {t})",
                    s.time
                )));
            }
            if s.to >= m.num_sectors() {
                return Err(Error::InvalidHistory(format!(
                    "step {k} targets unknown sector {}",
                    s.to
                )));
            }
            if m.kind() == ModelKind::SectorResolved && s.to == alpha {
                return Err(Error::InvalidHistory(format!(
                    "step {k} repeats sector {alpha}; an event must change the sector"
                )));
            }
            t = s.time;
            alpha = s.to;
        }
        if let Some(end) = self.end_time {
            if end < t {
                return Err(Error::InvalidHistory(format!(
                    "end_time {end} precedes the last event at {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Apply the alternating operator product of the history to `psi0`
/// (normalized, living in the start sector). The result lives in the last
/// sector of the history; its squared norm is the joint density.
pub fn kn_apply(m: &EventModel, h: &EventHistory, psi0: &CVector, step: f64) -> Result<CVector> {
    h.validate(m)?;
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "kn_apply requires a normalized state (norm = {})",
            psi0.norm()
        )));
    }
    if psi0.len() != m.dim(h.start_sector)? {
        return Err(Error::Shape(format!(
            "state length {} does not match sector {} dimension {}",
            psi0.len(),
            h.start_sector,
            m.dim(h.start_sector)?
        )));
    }
    let mut alpha = h.start_sector;
    let mut t = h.start_time;
    let mut psi = psi0.clone();
    let mut record: Vec<EventRecord> = Vec::new();
    for s in &h.steps {
        psi = evolve(m, alpha, &psi, t, s.time, step, &record)?.state;
        match m.resolve_channel(alpha, s.to, s.label.as_deref()) {
            Ok(idx) => {
                psi = m.channel_matrix(idx, s.time, &record)?.apply(&psi)?;
                record.push(EventRecord {
                    index: record.len() + 1,
                    time: s.time,
                    from: alpha,
                    to: s.to,
                    label: m.channel(idx).label.clone(),
                    state: None,
                });
            }
            // Unregistered transitions carry the zero operator.
            Err(Error::NoChannel { .. }) => {
                psi = CVector::zeros(m.dim(s.to)?);
                record.push(EventRecord {
                    index: record.len() + 1,
                    time: s.time,
                    from: alpha,
                    to: s.to,
                    label: s.label.clone().unwrap_or_default(),
                    state: None,
                });
            }
            Err(e) => return Err(e),
        }
        alpha = s.to;
        t = s.time;
    }
    if let Some(end) = h.end_time {
        psi = evolve(m, alpha, &psi, t, end, step, &record)?.state;
    }
    Ok(psi)
}

/// Joint density of the history: the squared norm of [`kn_apply`]. Carries
/// units of (1/time)^n for n events.
pub fn joint_density(m: &EventModel, h: &EventHistory, psi0: &CVector, step: f64) -> Result<f64> {
    Ok(kn_apply(m, h, psi0, step)?.norm_sq())
}

/// Probability of no event in `[t0, t_end]` starting from a normalized
/// state in `alpha`: the squared norm of the propagated state.
pub fn no_event_probability(
    m: &EventModel,
    alpha: SectorId,
    psi0: &CVector,
    t0: f64,
    t_end: f64,
    step: f64,
) -> Result<f64> {
    if t_end < t0 {
        return Err(Error::InvalidArgument(format!(
            "no_event_probability: t_end = {t_end} precedes t0 = {t0}"
        )));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "no_event_probability requires a normalized state (norm = {})",
            psi0.norm()
        )));
    }
    let s = evolve(m, alpha, psi0, t0, t_end, step, &[])?.survival;
    Ok(s.clamp(0.0, 1.0))
}

/// Marginal distribution of the first event over (channel, time bin),
/// irrespective of later events: per-bin Simpson integrals of the
/// single-event density, plus the no-event mass over the whole window.
/// The masses and the quiet term always total 1 up to quadrature error.
#[derive(Debug, Clone)]
pub struct FirstEventDistribution {
    pub bin_edges: Vec<f64>,
    /// (target sector, label) per channel leaving the start sector.
    pub channels: Vec<(SectorId, String)>,
    /// masses[channel][bin]
    pub masses: Vec<Vec<f64>>,
    pub quiet: f64,
}

impl FirstEventDistribution {
    pub fn total(&self) -> f64 {
        self.quiet
            + self
                .masses
                .iter()
                .flat_map(|per_bin| per_bin.iter())
                .sum::<f64>()
    }
}

/// First-event time/channel distribution over the given bins.
pub fn first_event_distribution(
    m: &EventModel,
    alpha0: SectorId,
    psi0: &CVector,
    t0: f64,
    bin_edges: &[f64],
    step: f64,
) -> Result<FirstEventDistribution> {
    if bin_edges.len() < 2
        || bin_edges.windows(2).any(|w| w[0] >= w[1])
        || (bin_edges[0] - t0).abs() > 1e-12
    {
        return Err(Error::InvalidArgument(
            "bin edges must strictly increase starting at t0".into(),
        ));
    }
    let t_end = bin_edges[bin_edges.len() - 1];
    let n_bins = bin_edges.len() - 1;
    let channels: Vec<(SectorId, String)> = m
        .channels_from(alpha0)
        .iter()
        .map(|&i| (m.channel(i).to, m.channel(i).label.clone()))
        .collect();
    let channel_ids = m.channels_from(alpha0).to_vec();
    let mut masses = vec![vec![0.0; n_bins]; channels.len()];
    let mut t_run = t0;
    let mut psi_run = psi0.normalized()?;
    for bin in 0..n_bins {
        let (lo, hi) = (bin_edges[bin], bin_edges[bin + 1]);
        let mut accums: Vec<SimpsonAccum> =
            channel_ids.iter().map(|_| SimpsonAccum::new(lo, hi)).collect();
        let h = (hi - lo) / SIMPSON_SUBDIVISIONS as f64;
        for k in 0..=SIMPSON_SUBDIVISIONS {
            let t1 = if k == SIMPSON_SUBDIVISIONS { hi } else { lo + k as f64 * h };
            psi_run = evolve(m, alpha0, &psi_run, t_run, t1, step, &[])?.state;
            t_run = t1;
            for (ci, &c) in channel_ids.iter().enumerate() {
                let g = m.channel_matrix(c, t1, &[])?;
                accums[ci].push(g.apply(&psi_run)?.norm_sq());
            }
        }
        for (ci, acc) in accums.iter().enumerate() {
            masses[ci][bin] = acc.value();
        }
    }
    let quiet = no_event_probability(m, alpha0, psi0, t0, t_end, step)?;
    Ok(FirstEventDistribution {
        bin_edges: bin_edges.to_vec(),
        channels,
        masses,
        quiet,
    })
}

/// One exclusive outcome of a windowed table: the event sequence (target
/// sector and label per event), the time bin of each event, and its
/// probability including the trailing quiet factor to the window end. The
/// empty sequence is the all-quiet outcome.
#[derive(Debug, Clone)]
pub struct WindowedOutcome {
    pub sequence: Vec<(SectorId, String)>,
    pub bins: Vec<usize>,
    pub probability: f64,
}

/// Exhaustive table of windowed outcomes up to a fixed number of events.
#[derive(Debug, Clone)]
pub struct WindowedTable {
    pub bin_edges: Vec<f64>,
    pub outcomes: Vec<WindowedOutcome>,
}

impl WindowedTable {
    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn quiet_probability(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| o.sequence.is_empty())
            .map(|o| o.probability)
            .sum()
    }
}

struct SimpsonAccum {
    h: f64,
    sum: f64,
    idx: usize,
}

impl SimpsonAccum {
    fn new(lo: f64, hi: f64) -> Self {
        Self {
            h: (hi - lo) / SIMPSON_SUBDIVISIONS as f64,
            sum: 0.0,
            idx: 0,
        }
    }

    fn weight(&self) -> f64 {
        if self.idx == 0 || self.idx == SIMPSON_SUBDIVISIONS {
            1.0
        } else if self.idx % 2 == 1 {
            4.0
        } else {
            2.0
        }
    }

    fn push(&mut self, value: f64) {
        self.sum += self.weight() * value;
        self.idx += 1;
    }

    fn value(&self) -> f64 {
        self.sum * self.h / 3.0
    }
}

/// Exclusive probabilities of "exactly these events, in these time bins,
/// then quiet until the window end", for event counts up to `max_events`
/// (at most 2; higher orders are not integrated).
///
/// `bin_edges` must partition `[t0, t_end]`. Each bin integral uses
/// composite Simpson with [`SIMPSON_SUBDIVISIONS`] subdivisions; the
/// trailing no-event factor is evaluated by the propagator inside the
/// integrand. For models whose histories cannot exceed `max_events` events
/// the table totals 1 up to quadrature error.
pub fn windowed_event_probability(
    m: &EventModel,
    alpha0: SectorId,
    psi0: &CVector,
    t0: f64,
    t_end: f64,
    bin_edges: &[f64],
    max_events: usize,
    step: f64,
) -> Result<WindowedTable> {
    if max_events > 2 {
        return Err(Error::InvalidArgument(format!(
            "windowed probabilities support at most 2 events, requested {max_events}"
        )));
    }
    if bin_edges.len() < 2
        || bin_edges.windows(2).any(|w| w[0] >= w[1])
        || (bin_edges[0] - t0).abs() > 1e-12
        || (bin_edges[bin_edges.len() - 1] - t_end).abs() > 1e-12
    {
        return Err(Error::InvalidArgument(
            "bin edges must strictly increase from t0 to t_end".into(),
        ));
    }
    let n_bins = bin_edges.len() - 1;
    let mut outcomes = Vec::new();

    // All-quiet outcome.
    outcomes.push(WindowedOutcome {
        sequence: Vec::new(),
        bins: Vec::new(),
        probability: no_event_probability(m, alpha0, psi0, t0, t_end, step)?,
    });

    if max_events == 0 {
        return Ok(WindowedTable {
            bin_edges: bin_edges.to_vec(),
            outcomes,
        });
    }

    let first_channels = m.channels_from(alpha0).to_vec();
    let mut one_masses = vec![vec![0.0; n_bins]; first_channels.len()];
    let mut two_masses: Vec<Vec<Vec<Vec<f64>>>> = Vec::new(); // [c1][bin1][c2][bin2]
    if max_events >= 2 {
        for &c1 in &first_channels {
            let to1 = m.channel(c1).to;
            let inner = vec![vec![vec![0.0; n_bins]; m.channels_from(to1).len()]; n_bins];
            two_masses.push(inner);
        }
    }

    // Sweep t1 across all bins once, carrying the propagated state.
    let mut t_run = t0;
    let mut psi_run = psi0.normalized()?;
    for bin1 in 0..n_bins {
        let (lo, hi) = (bin_edges[bin1], bin_edges[bin1 + 1]);
        let mut accums: Vec<SimpsonAccum> = first_channels
            .iter()
            .map(|_| SimpsonAccum::new(lo, hi))
            .collect();
        let h1 = (hi - lo) / SIMPSON_SUBDIVISIONS as f64;
        for k in 0..=SIMPSON_SUBDIVISIONS {
            let t1 = if k == SIMPSON_SUBDIVISIONS { hi } else { lo + k as f64 * h1 };
            psi_run = evolve(m, alpha0, &psi_run, t_run, t1, step, &[])?.state;
            t_run = t1;
            for (ci, &c1) in first_channels.iter().enumerate() {
                let g1 = m.channel_matrix(c1, t1, &[])?;
                let phi1 = g1.apply(&psi_run)?;
                let to1 = m.channel(c1).to;
                let record1 = [EventRecord {
                    index: 1,
                    time: t1,
                    from: alpha0,
                    to: to1,
                    label: m.channel(c1).label.clone(),
                    state: None,
                }];
                // Exactly one event: quiet from t1 to the end.
                let outer_weight = accums[ci].weight();
                let quiet = evolve(m, to1, &phi1, t1, t_end, step, &record1)?.survival;
                accums[ci].push(quiet);

                if max_events >= 2 && phi1.norm_sq() > 0.0 {
                    let second_channels = m.channels_from(to1).to_vec();
                    for bin2 in bin1..n_bins {
                        let lo2 = bin_edges[bin2].max(t1);
                        let hi2 = bin_edges[bin2 + 1];
                        if hi2 <= lo2 {
                            continue;
                        }
                        let mut inner_acc: Vec<SimpsonAccum> = second_channels
                            .iter()
                            .map(|_| SimpsonAccum::new(lo2, hi2))
                            .collect();
                        let h2 = (hi2 - lo2) / SIMPSON_SUBDIVISIONS as f64;
                        let mut t2_run = t1;
                        let mut w_run = phi1.clone();
                        for k2 in 0..=SIMPSON_SUBDIVISIONS {
                            let t2 = if k2 == SIMPSON_SUBDIVISIONS {
                                hi2
                            } else {
                                lo2 + k2 as f64 * h2
                            };
                            w_run = evolve(m, to1, &w_run, t2_run, t2, step, &record1)?.state;
                            t2_run = t2;
                            for (cj, &c2) in second_channels.iter().enumerate() {
                                let g2 = m.channel_matrix(c2, t2, &record1)?;
                                let phi2 = g2.apply(&w_run)?;
                                let to2 = m.channel(c2).to;
                                let record2 = [
                                    record1[0].clone(),
                                    EventRecord {
                                        index: 2,
                                        time: t2,
                                        from: to1,
                                        to: to2,
                                        label: m.channel(c2).label.clone(),
                                        state: None,
                                    },
                                ];
                                let quiet2 =
                                    evolve(m, to2, &phi2, t2, t_end, step, &record2)?.survival;
                                inner_acc[cj].push(quiet2);
                            }
                        }
                        for (cj, acc) in inner_acc.iter().enumerate() {
                            // Weight of the outer Simpson point applies to
                            // the whole inner integral.
                            let outer_w = outer_weight * h1 / 3.0;
                            two_masses[ci][bin1][cj][bin2] += outer_w * acc.value();
                        }
                    }
                }
            }
        }
        for (ci, acc) in accums.iter().enumerate() {
            one_masses[ci][bin1] = acc.value();
        }
    }

    for (ci, &c1) in first_channels.iter().enumerate() {
        let c = m.channel(c1);
        for bin1 in 0..n_bins {
            outcomes.push(WindowedOutcome {
                sequence: vec![(c.to, c.label.clone())],
                bins: vec![bin1],
                probability: one_masses[ci][bin1],
            });
        }
    }
    if max_events >= 2 {
        for (ci, &c1) in first_channels.iter().enumerate() {
            let to1 = m.channel(c1).to;
            let label1 = m.channel(c1).label.clone();
            for bin1 in 0..n_bins {
                for (cj, &c2) in m.channels_from(to1).to_vec().iter().enumerate() {
                    let c2ref = m.channel(c2);
                    for bin2 in bin1..n_bins {
                        outcomes.push(WindowedOutcome {
                            sequence: vec![
                                (to1, label1.clone()),
                                (c2ref.to, c2ref.label.clone()),
                            ],
                            bins: vec![bin1, bin2],
                            probability: two_masses[ci][bin1][cj][bin2],
                        });
                    }
                }
            }
        }
    }

    Ok(WindowedTable {
        bin_edges: bin_edges.to_vec(),
        outcomes,
    })
}
