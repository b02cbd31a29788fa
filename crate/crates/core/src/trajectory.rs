//! The piecewise-deterministic jump process.
//!
//! One trajectory repeats four moves until the horizon or the event budget
//! is reached:
//!
//! 1. draw `r` uniform in (0, 1];
//! 2. propagate the normalized state until its squared norm reaches `r`
//!    (no such time before `t_max` means the trajectory ends event-free);
//! 3. pick the jump channel with probability proportional to `|G psi|^2`;
//! 4. apply the channel operator, normalize, record the event, continue
//!    from the new sector.
//!
//! Everything is deterministic given `(model, initial state, seed, step)`:
//! the random stream is ChaCha12 keyed by the master seed with the 64-bit
//! ChaCha stream id set to the trajectory index, and uniform deviates are
//! built from the top 53 bits of each 64-bit draw.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::DirectSumDensity;
use crate::linalg::CVector;
use crate::model::{EventModel, SectorId};
use crate::propagator::{evolve, find_jump_time, JumpSearch};

/// One recorded event: the transition `from -> to` under `label` at `time`.
#[derive(Debug, Clone)]
pub struct EventRecord {
    /// 1-based position within its trajectory.
    pub index: usize,
    pub time: f64,
    pub from: SectorId,
    pub to: SectorId,
    pub label: String,
    /// Post-jump state, kept only when snapshots are enabled.
    pub state: Option<CVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    EventBudget,
}

/// A complete sample path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub master_seed: u64,
    pub stream: u64,
    pub initial_sector: SectorId,
    pub initial_state: CVector,
    pub events: Vec<EventRecord>,
    pub final_sector: SectorId,
    /// Normalized state at `t_end`.
    pub final_state: CVector,
    pub t_end: f64,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    /// Waiting times between consecutive events, the first measured from
    /// `t0`.
    pub fn inter_event_times(&self, t0: f64) -> Vec<f64> {
        let mut prev = t0;
        self.events
            .iter()
            .map(|e| {
                let dt = e.time - prev;
                prev = e.time;
                dt
            })
            .collect()
    }
}

/// Reproducible uniform stream: ChaCha12 keyed by the master seed, one
/// independent stream per trajectory index. The same
/// `(seed, stream, draw index)` produces the same value on any platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
    master_seed: u64,
    stream: u64,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha12";

    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        Self {
            rng,
            master_seed,
            stream,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform deviate in [0, 1): the top 53 bits of one 64-bit draw.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Normalized probability of one jump channel.
#[derive(Debug, Clone)]
pub struct JumpWeight {
    /// Channel index into [`EventModel::channels`].
    pub channel: usize,
    pub to: SectorId,
    pub label: String,
    pub p: f64,
}

/// Distribution over the jump channels leaving the current sector,
/// ordered by (target sector, label).
#[derive(Debug, Clone)]
pub struct JumpDistribution {
    pub entries: Vec<JumpWeight>,
    /// Unnormalized total weight `<psi, Lambda psi>` of the normalized
    /// input state.
    pub total_weight: f64,
}

impl JumpDistribution {
    /// Total probability of jumping into sector `to`.
    pub fn probability_to(&self, to: SectorId) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.to == to)
            .map(|e| e.p)
            .sum()
    }
}

/// Jump-target distribution `p_c = |G_c psi|^2 / sum_c' |G_c' psi|^2`.
pub fn jump_distribution(
    model: &EventModel,
    alpha: SectorId,
    psi: &CVector,
    t: f64,
    history: &[EventRecord],
) -> Result<JumpDistribution> {
    let nsq = psi.norm_sq();
    if nsq <= 1e-300 {
        return Err(Error::ZeroState);
    }
    let mut entries = Vec::new();
    let mut total = 0.0;
    for &idx in model.channels_from(alpha) {
        let g = model.channel_matrix(idx, t, history)?;
        let w = g.apply(psi)?.norm_sq() / nsq;
        total += w;
        let c = model.channel(idx);
        entries.push(JumpWeight {
            channel: idx,
            to: c.to,
            label: c.label.clone(),
            p: w,
        });
    }
    if total <= 0.0 {
        return Err(Error::ZeroJumpWeight { t });
    }
    for e in &mut entries {
        e.p /= total;
    }
    Ok(JumpDistribution {
        entries,
        total_weight: total,
    })
}

/// Apply one channel operator and normalize: `G psi / |G psi|`.
pub fn apply_jump_channel(
    model: &EventModel,
    channel: usize,
    psi: &CVector,
    t: f64,
    history: &[EventRecord],
) -> Result<CVector> {
    let g = model.channel_matrix(channel, t, history)?;
    let phi = g.apply(psi)?;
    let norm = phi.norm();
    if norm <= 1e-14 {
        return Err(Error::AnnihilatedState { t, norm });
    }
    Ok(phi.scale((1.0 / norm).into()))
}

/// Apply the unique jump `from -> to` (label used to disambiguate when
/// several channels share the pair).
pub fn apply_jump(
    model: &EventModel,
    from: SectorId,
    to: SectorId,
    psi: &CVector,
    t: f64,
    history: &[EventRecord],
) -> Result<CVector> {
    let idx = model.resolve_channel(from, to, None)?;
    apply_jump_channel(model, idx, psi, t, history)
}

/// Shared run parameters.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub t0: f64,
    pub t_max: f64,
    pub step: f64,
    pub event_budget: usize,
    pub snapshot_states: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_max: 10.0,
            step: 1e-3,
            event_budget: 1_000_000,
            snapshot_states: false,
        }
    }
}

/// Normalized state captured at one probe time (the pre-jump state if the
/// probe coincides with an event time).
#[derive(Debug, Clone)]
pub struct ProbeState {
    pub t: f64,
    pub sector: SectorId,
    pub state: CVector,
}

fn capture_probes(
    model: &EventModel,
    alpha: SectorId,
    leg_start: f64,
    leg_state: &CVector,
    window_end: f64,
    step: f64,
    history: &[EventRecord],
    probes: &[f64],
    probe_idx: &mut usize,
    out: &mut Vec<ProbeState>,
) -> Result<()> {
    let mut t_run = leg_start;
    let mut psi_run = leg_state.clone();
    while *probe_idx < probes.len() && probes[*probe_idx] <= window_end {
        let tau = probes[*probe_idx];
        let res = evolve(model, alpha, &psi_run, t_run, tau, step, history)?;
        psi_run = res.state;
        t_run = tau;
        out.push(ProbeState {
            t: tau,
            sector: alpha,
            state: psi_run.normalized()?,
        });
        *probe_idx += 1;
    }
    Ok(())
}

/// Run one trajectory, additionally recording the normalized state at each
/// probe time (`probes` must be sorted and lie within `[t0, t_max]`).
pub fn run_trajectory_probed(
    model: &EventModel,
    init_sector: SectorId,
    init_state: &CVector,
    params: &SimParams,
    rng: &mut RngStream,
    probes: &[f64],
) -> Result<(Trajectory, Vec<ProbeState>)> {
    if (init_state.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "initial state must be normalized (norm = {})",
            init_state.norm()
        )));
    }
    if init_state.len() != model.dim(init_sector)? {
        return Err(Error::Shape(format!(
            "initial state has length {}, sector {} has dimension {}",
            init_state.len(),
            init_sector,
            model.dim(init_sector)?
        )));
    }

    let mut alpha = init_sector;
    let mut psi = init_state.normalized()?;
    let mut t = params.t0;
    let mut events: Vec<EventRecord> = Vec::new();
    let mut probe_states = Vec::new();
    let mut probe_idx = 0usize;

    let (final_sector, final_state, t_end, terminated_by) = loop {
        let r = 1.0 - rng.uniform(); // in (0, 1]
        let search = find_jump_time(model, alpha, &psi, t, r, params.t_max, params.step, &events)
            .map_err(|e| trajectory_context(e, rng, events.len(), t))?;
        match search {
            JumpSearch::NoJump { state } => {
                capture_probes(
                    model,
                    alpha,
                    t,
                    &psi,
                    params.t_max,
                    params.step,
                    &events,
                    probes,
                    &mut probe_idx,
                    &mut probe_states,
                )?;
                break (alpha, state.normalized()?, params.t_max, Termination::Horizon);
            }
            JumpSearch::Jump { t: t_jump, state } => {
                capture_probes(
                    model,
                    alpha,
                    t,
                    &psi,
                    t_jump,
                    params.step,
                    &events,
                    probes,
                    &mut probe_idx,
                    &mut probe_states,
                )?;
                let psi_at = state.normalized()?;
                let dist = jump_distribution(model, alpha, &psi_at, t_jump, &events)
                    .map_err(|e| trajectory_context(e, rng, events.len(), t_jump))?;
                if dist.total_weight < 1e-14 {
                    return Err(Error::NumericalDegeneracy(format!(
                        "jump weight {:.3e} at t = {t_jump} in sector {alpha} \
                         (stream {}): the survival threshold crossed with an \
                         effectively zero rate; reduce the step or check the model",
                        dist.total_weight,
                        rng.stream()
                    )));
                }
                let u = rng.uniform();
                let mut cum = 0.0;
                let mut chosen = dist.entries.len() - 1;
                for (i, e) in dist.entries.iter().enumerate() {
                    cum += e.p;
                    if u < cum {
                        chosen = i;
                        break;
                    }
                }
                let entry = &dist.entries[chosen];
                let psi_new = apply_jump_channel(model, entry.channel, &psi_at, t_jump, &events)?;
                events.push(EventRecord {
                    index: events.len() + 1,
                    time: t_jump,
                    from: alpha,
                    to: entry.to,
                    label: entry.label.clone(),
                    state: params.snapshot_states.then(|| psi_new.clone()),
                });
                alpha = entry.to;
                psi = psi_new;
                t = t_jump;
                if events.len() >= params.event_budget {
                    break (alpha, psi, t_jump, Termination::EventBudget);
                }
            }
        }
    };

    Ok((
        Trajectory {
            master_seed: rng.master_seed(),
            stream: rng.stream(),
            initial_sector: init_sector,
            initial_state: init_state.clone(),
            events,
            final_sector,
            final_state,
            t_end,
            terminated_by,
        },
        probe_states,
    ))
}

fn trajectory_context(e: Error, rng: &RngStream, n_events: usize, t: f64) -> Error {
    match e {
        Error::NumericalDegeneracy(msg) => Error::NumericalDegeneracy(format!(
            "{msg} (stream {}, after {n_events} events, t = {t})",
            rng.stream()
        )),
        other => other,
    }
}

/// Run one trajectory to the horizon or the event budget.
pub fn run_trajectory(
    model: &EventModel,
    init_sector: SectorId,
    init_state: &CVector,
    params: &SimParams,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    run_trajectory_probed(model, init_sector, init_state, params, rng, &[]).map(|(t, _)| t)
}

/// Density snapshot of an ensemble at one probe time.
#[derive(Debug, Clone)]
pub struct ProbeDensity {
    pub t: f64,
    pub density: DirectSumDensity,
}

/// Merged output of an ensemble run. Merging happens in trajectory-index
/// order, so the summary does not depend on worker scheduling.
#[derive(Debug)]
pub struct EnsembleSummary {
    pub trajectories: Vec<Trajectory>,
    pub probe_densities: Vec<ProbeDensity>,
    pub event_count_histogram: BTreeMap<usize, usize>,
    /// Flattened waiting-time samples (first waiting time measured from
    /// `t0`).
    pub inter_event_times: Vec<f64>,
}

/// Run `n` trajectories on independent streams `0..n` derived from
/// `master_seed` and average the sector-blocked projectors at each probe
/// time.
pub fn run_ensemble(
    model: &EventModel,
    init_sector: SectorId,
    init_state: &CVector,
    n: usize,
    probe_times: &[f64],
    params: &SimParams,
    master_seed: u64,
) -> Result<EnsembleSummary> {
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    let mut probes = probe_times.to_vec();
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if probes
        .iter()
        .any(|&p| p < params.t0 || p > params.t_max || !p.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "probe times must lie within [{}, {}]",
            params.t0, params.t_max
        )));
    }

    let results: Vec<(Trajectory, Vec<ProbeState>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(master_seed, i as u64);
            run_trajectory_probed(model, init_sector, init_state, params, &mut rng, &probes)
        })
        .collect::<Result<Vec<_>>>()?;

    let dims = model.dims();
    let weight = 1.0 / n as f64;
    let mut probe_densities: Vec<ProbeDensity> = probes
        .iter()
        .map(|&t| ProbeDensity {
            t,
            density: DirectSumDensity::zeros(&dims),
        })
        .collect();
    let mut histogram = BTreeMap::new();
    let mut inter_event = Vec::new();

    for (traj, states) in &results {
        if states.len() != probes.len() {
            return Err(Error::NumericalDegeneracy(format!(
                "trajectory on stream {} ended (event budget) before probe time {}",
                traj.stream,
                probes[states.len()]
            )));
        }
        for (slot, probe) in probe_densities.iter_mut().zip(states) {
            slot.density
                .add_weighted_projector(probe.sector, &probe.state, weight);
        }
        *histogram.entry(traj.events.len()).or_insert(0) += 1;
        inter_event.extend(traj.inter_event_times(params.t0));
    }

    Ok(EnsembleSummary {
        trajectories: results.into_iter().map(|(t, _)| t).collect(),
        probe_densities,
        event_count_histogram: histogram,
        inter_event_times: inter_event,
    })
}
