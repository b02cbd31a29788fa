//! Model definition: sectors, Hamiltonians, jump channels, and the derived
//! quantities built from them.
//!
//! A model couples a finite family of Hilbert-space sectors (each with its
//! own dimension) through jump channels `from -> to` carrying an operator
//! `G` of shape `dim(to) x dim(from)`. From these the total-rate operator
//! `Lambda_alpha = sum_channels G† G` and the effective non-Hermitian
//! generator `-i H_alpha - Lambda_alpha / 2` are derived; everything else in
//! the crate (step integration, jump sampling, master equation, event
//! densities) is expressed in terms of those two.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, HERMITICITY_TOL};
use crate::trajectory::EventRecord;

pub type SectorId = usize;

/// One sector: an index, its Hilbert-space dimension, and a display label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorSpec {
    pub id: SectorId,
    pub dim: usize,
    pub label: String,
}

impl SectorSpec {
    pub fn new(id: SectorId, dim: usize, label: impl Into<String>) -> Self {
        Self {
            id,
            dim,
            label: label.into(),
        }
    }
}

type HistoryFn = dyn Fn(f64, &[EventRecord]) -> CMatrix + Send + Sync;

/// Source of an operator that may vary with time or with the events
/// observed so far.
///
/// Callback providers must be pure: the same `(t, history)` must always
/// produce the same matrix, or trajectories stop being reproducible from
/// `(config, seed)`. They must also be continuous in `t` between events;
/// time-discontinuities are only supported through declared piecewise
/// breakpoints, which the integrators never step across.
#[derive(Clone)]
pub enum OperatorProvider {
    Constant(CMatrix),
    PiecewiseConstant {
        /// Strictly increasing; matrix `k` applies on
        /// `[breakpoints[k-1], breakpoints[k])`.
        breakpoints: Vec<f64>,
        matrices: Vec<CMatrix>,
    },
    HistoryDependent(Arc<HistoryFn>),
}

impl fmt::Debug for OperatorProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => write!(f, "Constant({}x{})", m.rows(), m.cols()),
            Self::PiecewiseConstant { breakpoints, .. } => {
                write!(f, "PiecewiseConstant({} breakpoints)", breakpoints.len())
            }
            Self::HistoryDependent(_) => write!(f, "HistoryDependent(..)"),
        }
    }
}

impl OperatorProvider {
    pub fn constant(m: CMatrix) -> Self {
        Self::Constant(m)
    }

    pub fn history_dependent<F>(f: F) -> Self
    where
        F: Fn(f64, &[EventRecord]) -> CMatrix + Send + Sync + 'static,
    {
        Self::HistoryDependent(Arc::new(f))
    }

    /// Evaluate at time `t` (right-continuous at piecewise breakpoints).
    pub fn eval(&self, t: f64, history: &[EventRecord]) -> CMatrix {
        self.eval_hinted(t, t, history)
    }

    /// Evaluate at `t`, selecting the piecewise interval containing
    /// `interval_hint` instead of `t`. The integrators pass the midpoint of
    /// the current step so that stage evaluations at a segment boundary pick
    /// up the segment's own matrix.
    pub(crate) fn eval_hinted(&self, t: f64, interval_hint: f64, history: &[EventRecord]) -> CMatrix {
        match self {
            Self::Constant(m) => m.clone(),
            Self::PiecewiseConstant {
                breakpoints,
                matrices,
            } => {
                let k = breakpoints.partition_point(|b| *b <= interval_hint);
                matrices[k].clone()
            }
            Self::HistoryDependent(f) => f(t, history),
        }
    }

    /// Declared time-discontinuities.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::PiecewiseConstant { breakpoints, .. } => breakpoints,
            _ => &[],
        }
    }

    /// True when the produced matrix cannot change within one breakpoint
    /// segment (lets integrators evaluate the generator once per segment).
    pub fn is_segment_constant(&self) -> bool {
        !matches!(self, Self::HistoryDependent(_))
    }

    /// Matrices that can be inspected without running the dynamics.
    fn samples(&self) -> Vec<CMatrix> {
        match self {
            Self::Constant(m) => vec![m.clone()],
            Self::PiecewiseConstant { matrices, .. } => matrices.clone(),
            Self::HistoryDependent(f) => vec![f(0.0, &[])],
        }
    }
}

/// One jump channel: applying `op` realizes the transition `from -> to`,
/// recorded under `label`.
#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub from: SectorId,
    pub to: SectorId,
    pub label: String,
    pub op: OperatorProvider,
}

impl JumpChannel {
    pub fn new(from: SectorId, to: SectorId, label: impl Into<String>, op: OperatorProvider) -> Self {
        Self {
            from,
            to,
            label: label.into(),
            op,
        }
    }

    pub fn constant(from: SectorId, to: SectorId, label: impl Into<String>, g: CMatrix) -> Self {
        Self::new(from, to, label, OperatorProvider::Constant(g))
    }
}

/// How events are identified in this model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// An event is a change of sector; self-channels are forbidden.
    SectorResolved,
    /// Single effective sector; events are identified by channel label, so
    /// self-channels are allowed (and required to carry distinct labels).
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySectorSet,
    BadSectorIds(String),
    BadSectorDim { sector: SectorId },
    MissingHamiltonian { sector: SectorId },
    HamiltonianShape { sector: SectorId, detail: String },
    NonHermitianHamiltonian { sector: SectorId, deviation: f64 },
    DiagonalJump { sector: SectorId },
    JumpShape { channel: String, detail: String },
    UnknownJumpSector { channel: String },
    BadBreakpoints { what: String },
    NonFiniteEntries { what: String },
    DuplicateChannel { what: String },
    ReducedLabel { what: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptySectorSet => write!(f, "empty sector set"),
            Self::BadSectorIds(d) => write!(f, "sector ids must be 0..n-1: {d}"),
            Self::BadSectorDim { sector } => write!(f, "sector {sector} has dimension 0"),
            Self::MissingHamiltonian { sector } => {
                write!(f, "no Hamiltonian provided for sector {sector}")
            }
            Self::HamiltonianShape { sector, detail } => {
                write!(f, "Hamiltonian of sector {sector}: {detail}")
            }
            Self::NonHermitianHamiltonian { sector, deviation } => write!(
                f,
                "non-Hermitian Hamiltonian in sector {sector} (relative deviation {deviation:.3e})"
            ),
            Self::DiagonalJump { sector } => {
                write!(f, "diagonal jump {sector} -> {sector} is forbidden")
            }
            Self::JumpShape { channel, detail } => write!(f, "jump {channel}: {detail}"),
            Self::UnknownJumpSector { channel } => {
                write!(f, "jump {channel} references an unknown sector")
            }
            Self::BadBreakpoints { what } => {
                write!(f, "{what}: breakpoints must be strictly increasing and finite")
            }
            Self::NonFiniteEntries { what } => write!(f, "{what}: non-finite matrix entries"),
            Self::DuplicateChannel { what } => write!(f, "duplicate jump channel {what}"),
            Self::ReducedLabel { what } => write!(f, "{what}"),
        }
    }
}

/// Outcome of structural validation; valid iff no violations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "valid")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// The full model: sectors, Hamiltonian providers, jump channels.
///
/// Immutable after construction; construction validates all structural
/// rules and fails with the complete violation report otherwise.
#[derive(Debug, Clone)]
pub struct EventModel {
    sectors: Vec<SectorSpec>,
    hamiltonians: Vec<OperatorProvider>,
    channels: Vec<JumpChannel>,
    channels_from: Vec<Vec<usize>>,
    channels_into: Vec<Vec<usize>>,
    kind: ModelKind,
}

impl EventModel {
    /// Build and validate a sector-resolved model. `hamiltonians[alpha]` is
    /// the provider for sector `alpha`.
    pub fn new(
        sectors: Vec<SectorSpec>,
        hamiltonians: Vec<OperatorProvider>,
        jumps: Vec<JumpChannel>,
    ) -> Result<Self> {
        Self::assemble(sectors, hamiltonians, jumps, ModelKind::SectorResolved)
    }

    /// Build a reduced (single effective sector, label-keyed) model.
    pub fn new_reduced(
        dim: usize,
        hamiltonian: OperatorProvider,
        jumps: Vec<JumpChannel>,
    ) -> Result<Self> {
        Self::assemble(
            vec![SectorSpec::new(0, dim, "reduced")],
            vec![hamiltonian],
            jumps,
            ModelKind::Reduced,
        )
    }

    fn assemble(
        sectors: Vec<SectorSpec>,
        hamiltonians: Vec<OperatorProvider>,
        jumps: Vec<JumpChannel>,
        kind: ModelKind,
    ) -> Result<Self> {
        let mut channels = jumps;
        channels.sort_by(|a, b| {
            (a.from, a.to, a.label.as_str()).cmp(&(b.from, b.to, b.label.as_str()))
        });
        let n = sectors.len();
        let mut channels_from = vec![Vec::new(); n];
        let mut channels_into = vec![Vec::new(); n];
        for (i, c) in channels.iter().enumerate() {
            if c.from < n {
                channels_from[c.from].push(i);
            }
            if c.to < n {
                channels_into[c.to].push(i);
            }
        }
        let model = Self {
            sectors,
            hamiltonians,
            channels,
            channels_from,
            channels_into,
            kind,
        };
        let report = model.validate();
        if report.is_valid() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// Structural validation: shapes, Hermiticity of Hamiltonian samples,
    /// breakpoint ordering, and the no-self-jump rule (sector-resolved
    /// models only). Returns all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.sectors.is_empty() {
            v.push(Violation::EmptySectorSet);
            return ValidationReport { violations: v };
        }
        for (i, s) in self.sectors.iter().enumerate() {
            if s.id != i {
                v.push(Violation::BadSectorIds(format!(
                    "position {i} holds id {}",
                    s.id
                )));
            }
            if s.dim == 0 {
                v.push(Violation::BadSectorDim { sector: s.id });
            }
        }
        let n = self.sectors.len();
        for alpha in 0..n {
            let Some(h) = self.hamiltonians.get(alpha) else {
                v.push(Violation::MissingHamiltonian { sector: alpha });
                continue;
            };
            if let Err(what) = check_breakpoints(h) {
                v.push(Violation::BadBreakpoints {
                    what: format!("Hamiltonian of sector {alpha} ({what})"),
                });
            }
            let d = self.sectors[alpha].dim;
            for m in h.samples() {
                if m.rows() != d || m.cols() != d {
                    v.push(Violation::HamiltonianShape {
                        sector: alpha,
                        detail: format!("expected {d}x{d}, got {}x{}", m.rows(), m.cols()),
                    });
                    continue;
                }
                if !m.is_finite() {
                    v.push(Violation::NonFiniteEntries {
                        what: format!("Hamiltonian of sector {alpha}"),
                    });
                }
                let dev = m.hermitian_deviation();
                if dev > HERMITICITY_TOL * m.max_abs() {
                    v.push(Violation::NonHermitianHamiltonian {
                        sector: alpha,
                        deviation: dev / m.max_abs(),
                    });
                }
            }
        }
        if self.hamiltonians.len() > n {
            v.push(Violation::BadSectorIds(format!(
                "{} Hamiltonians for {n} sectors",
                self.hamiltonians.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.channels {
            let name = format!("{} -> {} ({:?})", c.from, c.to, c.label);
            if c.from >= n || c.to >= n {
                v.push(Violation::UnknownJumpSector { channel: name });
                continue;
            }
            if self.kind == ModelKind::SectorResolved && c.from == c.to {
                v.push(Violation::DiagonalJump { sector: c.from });
            }
            if self.kind == ModelKind::Reduced && c.label.is_empty() {
                v.push(Violation::ReducedLabel {
                    what: format!("reduced channel {name} must carry a label"),
                });
            }
            if !seen.insert((c.from, c.to, c.label.clone())) {
                v.push(Violation::DuplicateChannel { what: name.clone() });
            }
            if let Err(what) = check_breakpoints(&c.op) {
                v.push(Violation::BadBreakpoints {
                    what: format!("jump {name} ({what})"),
                });
            }
            let (d_from, d_to) = (self.sectors[c.from].dim, self.sectors[c.to].dim);
            for m in c.op.samples() {
                if m.rows() != d_to || m.cols() != d_from {
                    v.push(Violation::JumpShape {
                        channel: name.clone(),
                        detail: format!("expected {d_to}x{d_from}, got {}x{}", m.rows(), m.cols()),
                    });
                }
                if !m.is_finite() {
                    v.push(Violation::NonFiniteEntries {
                        what: format!("jump {name}"),
                    });
                }
            }
        }
        ValidationReport { violations: v }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn is_reduced(&self) -> bool {
        self.kind == ModelKind::Reduced
    }

    pub fn num_sectors(&self) -> usize {
        self.sectors.len()
    }

    pub fn sectors(&self) -> &[SectorSpec] {
        &self.sectors
    }

    pub fn dim(&self, alpha: SectorId) -> Result<usize> {
        self.sectors
            .get(alpha)
            .map(|s| s.dim)
            .ok_or(Error::UnknownSector(alpha))
    }

    pub fn dims(&self) -> Vec<usize> {
        self.sectors.iter().map(|s| s.dim).collect()
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &JumpChannel {
        &self.channels[idx]
    }

    /// Channel indices leaving `alpha`, ordered by (target sector, label).
    pub fn channels_from(&self, alpha: SectorId) -> &[usize] {
        &self.channels_from[alpha]
    }

    /// Channel indices arriving at `alpha`.
    pub fn channels_into(&self, alpha: SectorId) -> &[usize] {
        &self.channels_into[alpha]
    }

    /// Find the unique channel `from -> to`, optionally narrowed by label.
    pub fn resolve_channel(
        &self,
        from: SectorId,
        to: SectorId,
        label: Option<&str>,
    ) -> Result<usize> {
        let matches: Vec<usize> = self
            .channels_from
            .get(from)
            .ok_or(Error::UnknownSector(from))?
            .iter()
            .copied()
            .filter(|&i| {
                let c = &self.channels[i];
                c.to == to && label.is_none_or(|l| c.label == l)
            })
            .collect();
        match matches.len() {
            0 => Err(Error::NoChannel {
                from,
                to,
                label: label.map(str::to_owned),
            }),
            1 => Ok(matches[0]),
            _ => Err(Error::AmbiguousChannel { from, to }),
        }
    }

    pub fn hamiltonian(&self, alpha: SectorId, t: f64, history: &[EventRecord]) -> Result<CMatrix> {
        self.hamiltonian_hinted(alpha, t, t, history)
    }

    pub(crate) fn hamiltonian_hinted(
        &self,
        alpha: SectorId,
        t: f64,
        hint: f64,
        history: &[EventRecord],
    ) -> Result<CMatrix> {
        let d = self.dim(alpha)?;
        let h = self.hamiltonians[alpha].eval_hinted(t, hint, history);
        if h.rows() != d || h.cols() != d {
            return Err(Error::Shape(format!(
                "Hamiltonian provider for sector {alpha} returned {}x{}, expected {d}x{d}",
                h.rows(),
                h.cols()
            )));
        }
        Ok(h)
    }

    pub fn channel_matrix(&self, idx: usize, t: f64, history: &[EventRecord]) -> Result<CMatrix> {
        self.channel_matrix_hinted(idx, t, t, history)
    }

    pub(crate) fn channel_matrix_hinted(
        &self,
        idx: usize,
        t: f64,
        hint: f64,
        history: &[EventRecord],
    ) -> Result<CMatrix> {
        let c = &self.channels[idx];
        let g = c.op.eval_hinted(t, hint, history);
        let (d_from, d_to) = (self.dim(c.from)?, self.dim(c.to)?);
        if g.rows() != d_to || g.cols() != d_from {
            return Err(Error::Shape(format!(
                "jump provider {} -> {} returned {}x{}, expected {}x{}",
                c.from,
                c.to,
                g.rows(),
                g.cols(),
                d_to,
                d_from
            )));
        }
        Ok(g)
    }

    /// Total-rate operator of sector `alpha`: the sum of G† G over all
    /// channels leaving it. Hermitian and positive semidefinite.
    pub fn lambda_of(&self, alpha: SectorId, t: f64, history: &[EventRecord]) -> Result<CMatrix> {
        self.lambda_hinted(alpha, t, t, history)
    }

    pub(crate) fn lambda_hinted(
        &self,
        alpha: SectorId,
        t: f64,
        hint: f64,
        history: &[EventRecord],
    ) -> Result<CMatrix> {
        let d = self.dim(alpha)?;
        let mut lambda = CMatrix::zeros(d, d);
        for &idx in &self.channels_from[alpha] {
            let g = self.channel_matrix_hinted(idx, t, hint, history)?;
            lambda.add_assign_scaled(Complex64::new(1.0, 0.0), &g.gram());
        }
        Ok(lambda)
    }

    /// Effective non-Hermitian generator `-i H - Lambda / 2` driving the
    /// between-event evolution.
    pub fn effective_generator(
        &self,
        alpha: SectorId,
        t: f64,
        history: &[EventRecord],
    ) -> Result<CMatrix> {
        self.effective_generator_hinted(alpha, t, t, history)
    }

    pub(crate) fn effective_generator_hinted(
        &self,
        alpha: SectorId,
        t: f64,
        hint: f64,
        history: &[EventRecord],
    ) -> Result<CMatrix> {
        let h = self.hamiltonian_hinted(alpha, t, hint, history)?;
        let lambda = self.lambda_hinted(alpha, t, hint, history)?;
        let mut a = h.scale(Complex64::new(0.0, -1.0));
        a.add_assign_scaled(Complex64::new(-0.5, 0.0), &lambda);
        Ok(a)
    }

    /// Instantaneous event rate of the normalized state:
    /// `<psi, Lambda psi> / <psi, psi>`.
    pub fn total_rate(
        &self,
        alpha: SectorId,
        psi: &CVector,
        t: f64,
        history: &[EventRecord],
    ) -> Result<f64> {
        let nsq = psi.norm_sq();
        if nsq <= 1e-300 {
            return Err(Error::ZeroState);
        }
        let lambda = self.lambda_of(alpha, t, history)?;
        let rate = psi.inner(&lambda.apply(psi)?).re / nsq;
        Ok(rate.max(0.0))
    }

    /// Declared breakpoints of every provider relevant to sector `alpha`
    /// that fall strictly inside `(t0, t1)`, sorted and deduplicated.
    pub fn sector_breakpoints(&self, alpha: SectorId, t0: f64, t1: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self.hamiltonians[alpha]
            .breakpoints()
            .iter()
            .chain(
                self.channels_from[alpha]
                    .iter()
                    .flat_map(|&i| self.channels[i].op.breakpoints().iter()),
            )
            .copied()
            .filter(|&b| b > t0 && b < t1)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    /// Breakpoints of every provider in the model inside `(t0, t1)`.
    pub fn all_breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .hamiltonians
            .iter()
            .chain(self.channels.iter().map(|c| &c.op))
            .flat_map(|p| p.breakpoints().iter())
            .copied()
            .filter(|&b| b > t0 && b < t1)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    /// True when the generator of sector `alpha` cannot vary within one
    /// breakpoint segment.
    pub fn sector_is_segment_constant(&self, alpha: SectorId) -> bool {
        self.hamiltonians[alpha].is_segment_constant()
            && self.channels_from[alpha]
                .iter()
                .all(|&i| self.channels[i].op.is_segment_constant())
    }

    /// True when no provider in the model is history- or time-callback
    /// driven.
    pub fn is_segment_constant(&self) -> bool {
        (0..self.num_sectors()).all(|a| self.sector_is_segment_constant(a))
    }
}

fn check_breakpoints(p: &OperatorProvider) -> std::result::Result<(), String> {
    if let OperatorProvider::PiecewiseConstant {
        breakpoints,
        matrices,
    } = p
    {
        if matrices.len() != breakpoints.len() + 1 {
            return Err(format!(
                "{} matrices for {} breakpoints",
                matrices.len(),
                breakpoints.len()
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err("non-finite breakpoint".into());
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err("not strictly increasing".into());
        }
    }
    Ok(())
}
