//! Master-equation integration for the direct-sum density.
//!
//! The ensemble average of the jump process evolves block-wise as
//!
//! ```text
//! d rho_a / dt = -i [H_a, rho_a]
//!                + sum over channels (b -> a) of  G rho_b G†
//!                - 1/2 { Lambda_a, rho_a }
//! ```
//!
//! which conserves the total trace and (being of Lindblad form) preserves
//! positivity. The integrator here is the statistical oracle that ensemble
//! averages of trajectories are tested against. No renormalization is
//! applied during integration: trace drift is a measured error signal, and
//! exceeding its tolerance is reported as a failure rather than hidden.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue_hermitian, CMatrix, CVector};
use crate::model::{EventModel, SectorId};
use crate::trajectory::EventRecord;

/// Trace-conservation tolerance for horizons up to ~10 time units.
pub const TRACE_TOL: f64 = 1e-8;
/// Positivity slack absorbing integration error.
pub const POSITIVITY_TOL: f64 = -1e-8;
/// Hermiticity tolerance for density blocks.
pub const DENSITY_HERMITICITY_TOL: f64 = 1e-10;

/// Family of per-sector density blocks with total trace 1.
#[derive(Debug, Clone)]
pub struct DirectSumDensity {
    blocks: Vec<CMatrix>,
}

impl DirectSumDensity {
    pub fn new(blocks: Vec<CMatrix>) -> Self {
        assert!(!blocks.is_empty(), "density needs at least one block");
        assert!(blocks.iter().all(|b| b.is_square()));
        Self { blocks }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims.iter().map(|&d| CMatrix::zeros(d, d)).collect())
    }

    /// Pure state concentrated in one sector: `|psi><psi|` in that block,
    /// zero elsewhere.
    pub fn pure(dims: &[usize], sector: SectorId, psi: &CVector) -> Result<Self> {
        if sector >= dims.len() {
            return Err(Error::UnknownSector(sector));
        }
        if psi.len() != dims[sector] {
            return Err(Error::Shape(format!(
                "state length {} does not match sector dimension {}",
                psi.len(),
                dims[sector]
            )));
        }
        let normalized = psi.normalized()?;
        let mut rho = Self::zeros(dims);
        rho.blocks[sector] = normalized.outer(&normalized);
        Ok(rho)
    }

    pub fn num_sectors(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, alpha: SectorId) -> &CMatrix {
        &self.blocks[alpha]
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace().re).sum()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.hermitian_deviation())
            .fold(0.0, f64::max)
    }

    pub fn min_block_eigenvalue(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for b in &self.blocks {
            min = min.min(min_eigenvalue_hermitian(b)?);
        }
        Ok(min)
    }

    /// Frobenius distance treating the family as one block-diagonal matrix.
    pub fn frobenius_distance(&self, other: &DirectSumDensity) -> f64 {
        assert_eq!(self.blocks.len(), other.blocks.len());
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                a.sub(b)
                    .expect("matching block shapes")
                    .frobenius_norm()
                    .powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// self[sector] += w |psi><psi| (ensemble accumulation).
    pub fn add_weighted_projector(&mut self, sector: SectorId, psi: &CVector, w: f64) {
        let proj = psi.outer(psi);
        self.blocks[sector].add_assign_scaled(Complex64::new(w, 0.0), &proj);
    }

    /// self += c * other, blockwise.
    pub fn add_assign_scaled(&mut self, c: f64, other: &DirectSumDensity) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_assign_scaled(Complex64::new(c, 0.0), b);
        }
    }

    /// Check the density invariants: Hermitian blocks, near-positive
    /// spectrum, total trace 1.
    pub fn validate(&self) -> Result<()> {
        let dev = self.hermitian_deviation();
        if dev > DENSITY_HERMITICITY_TOL {
            return Err(Error::IntegrationFailure(format!(
                "density block Hermiticity deviation {dev:.3e} exceeds {DENSITY_HERMITICITY_TOL:.1e}"
            )));
        }
        let min = self.min_block_eigenvalue()?;
        if min < POSITIVITY_TOL {
            return Err(Error::IntegrationFailure(format!(
                "density block eigenvalue {min:.3e} below {POSITIVITY_TOL:.1e}"
            )));
        }
        let tr = self.total_trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::IntegrationFailure(format!(
                "total trace {tr} drifted beyond {TRACE_TOL:.1e}"
            )));
        }
        Ok(())
    }
}

/// All provider matrices needed for one right-hand-side evaluation.
struct OpsAt {
    hams: Vec<CMatrix>,
    lambdas: Vec<CMatrix>,
    /// (from, to, G) per channel.
    gs: Vec<(SectorId, SectorId, CMatrix)>,
}

fn eval_ops(m: &EventModel, t: f64, hint: f64, history: &[EventRecord]) -> Result<OpsAt> {
    let n = m.num_sectors();
    let mut hams = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    for alpha in 0..n {
        hams.push(m.hamiltonian_hinted(alpha, t, hint, history)?);
        lambdas.push(m.lambda_hinted(alpha, t, hint, history)?);
    }
    let mut gs = Vec::with_capacity(m.channels().len());
    for (idx, c) in m.channels().iter().enumerate() {
        gs.push((c.from, c.to, m.channel_matrix_hinted(idx, t, hint, history)?));
    }
    Ok(OpsAt { hams, lambdas, gs })
}

fn rhs_with_ops(ops: &OpsAt, rho: &DirectSumDensity) -> Result<DirectSumDensity> {
    let n = rho.num_sectors();
    let mut out = Vec::with_capacity(n);
    let minus_i = Complex64::new(0.0, -1.0);
    let plus_i = Complex64::new(0.0, 1.0);
    let half = Complex64::new(-0.5, 0.0);
    for alpha in 0..n {
        let r = rho.block(alpha);
        let h = &ops.hams[alpha];
        let l = &ops.lambdas[alpha];
        // -i [H, rho] - 1/2 {Lambda, rho}
        let mut d = h.mul(r)?.scale(minus_i);
        d.add_assign_scaled(plus_i, &r.mul(h)?);
        d.add_assign_scaled(half, &l.mul(r)?);
        d.add_assign_scaled(half, &r.mul(l)?);
        out.push(d);
    }
    for (from, to, g) in &ops.gs {
        let fed = g.mul(rho.block(*from))?.mul(&g.adjoint())?;
        out[*to].add_assign_scaled(Complex64::new(1.0, 0.0), &fed);
    }
    Ok(DirectSumDensity::new(out))
}

fn check_density_shape(m: &EventModel, rho: &DirectSumDensity) -> Result<()> {
    if rho.num_sectors() != m.num_sectors() {
        return Err(Error::Shape(format!(
            "density has {} blocks, model has {} sectors",
            rho.num_sectors(),
            m.num_sectors()
        )));
    }
    for (alpha, b) in rho.blocks().iter().enumerate() {
        let d = m.dim(alpha)?;
        if b.rows() != d {
            return Err(Error::Shape(format!(
                "density block {alpha} is {}x{}, sector dimension is {d}",
                b.rows(),
                b.cols()
            )));
        }
    }
    Ok(())
}

/// Right-hand side of the master equation. The sum of block traces of the
/// result vanishes identically (trace conservation).
pub fn lindblad_rhs(
    m: &EventModel,
    rho: &DirectSumDensity,
    t: f64,
    history: &[EventRecord],
) -> Result<DirectSumDensity> {
    check_density_shape(m, rho)?;
    let ops = eval_ops(m, t, t, history)?;
    rhs_with_ops(&ops, rho)
}

/// RK4 integration of the master equation from `t0` to `t1`.
///
/// The input must satisfy the density invariants; the output is validated
/// against them (trace drift within [`TRACE_TOL`], block positivity within
/// [`POSITIVITY_TOL`]) and violations surface as
/// [`Error::IntegrationFailure`]. Positivity is only checked at the end of
/// the requested interval, not at interior steps.
pub fn integrate_master(
    m: &EventModel,
    rho0: &DirectSumDensity,
    t0: f64,
    t1: f64,
    step: f64,
    history: &[EventRecord],
) -> Result<DirectSumDensity> {
    check_density_shape(m, rho0)?;
    rho0.validate()?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!(
            "integration interval reversed: t0 = {t0}, t1 = {t1}"
        )));
    }

    let mut rho = rho0.clone();
    let mut t = t0;
    let mut boundaries = m.all_breakpoints(t0, t1);
    boundaries.push(t1);
    let segment_constant = m.is_segment_constant();
    for seg_end in boundaries {
        if seg_end <= t {
            continue;
        }
        let hint = 0.5 * (t + seg_end);
        let fixed = if segment_constant {
            Some(eval_ops(m, hint, hint, history)?)
        } else {
            None
        };
        let len = seg_end - t;
        let n = (len / step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let eval = |tau: f64, state: &DirectSumDensity| -> Result<DirectSumDensity> {
                match &fixed {
                    Some(ops) => rhs_with_ops(ops, state),
                    None => rhs_with_ops(&eval_ops(m, tau, hint, history)?, state),
                }
            };
            let k1 = eval(t, &rho)?;
            let mut y = rho.clone();
            y.add_assign_scaled(0.5 * h, &k1);
            let k2 = eval(t + 0.5 * h, &y)?;
            let mut y = rho.clone();
            y.add_assign_scaled(0.5 * h, &k2);
            let k3 = eval(t + 0.5 * h, &y)?;
            let mut y = rho.clone();
            y.add_assign_scaled(h, &k3);
            let k4 = eval(t + h, &y)?;
            rho.add_assign_scaled(h / 6.0, &k1);
            rho.add_assign_scaled(h / 3.0, &k2);
            rho.add_assign_scaled(h / 3.0, &k3);
            rho.add_assign_scaled(h / 6.0, &k4);
            t = if k + 1 == n { seg_end } else { t + h };
        }
    }
    rho.validate().map_err(|e| match e {
        Error::IntegrationFailure(msg) => Error::IntegrationFailure(format!(
            "after integrating [{t0}, {t1}] at step {step}: {msg}"
        )),
        other => other,
    })?;
    Ok(rho)
}

/// Integrate and return the density at each probe time (probes must be
/// sorted ascending, all >= t0).
pub fn integrate_master_probed(
    m: &EventModel,
    rho0: &DirectSumDensity,
    t0: f64,
    probes: &[f64],
    step: f64,
    history: &[EventRecord],
) -> Result<Vec<(f64, DirectSumDensity)>> {
    let mut out = Vec::with_capacity(probes.len());
    let mut rho = rho0.clone();
    let mut t = t0;
    for &tau in probes {
        if tau < t {
            return Err(Error::InvalidArgument(
                "probe times must be sorted and >= t0".into(),
            ));
        }
        rho = integrate_master(m, &rho, t, tau, step, history)?;
        t = tau;
        out.push((tau, rho.clone()));
    }
    Ok(out)
}

/// Sum the blocks of a density whose sectors all share one dimension.
pub fn sum_sectors(rho: &DirectSumDensity) -> Result<CMatrix> {
    let d = rho.block(0).rows();
    if rho.blocks().iter().any(|b| b.rows() != d) {
        return Err(Error::Shape(
            "sum_sectors requires all sector dimensions equal".into(),
        ));
    }
    let mut sum = CMatrix::zeros(d, d);
    for b in rho.blocks() {
        sum.add_assign_scaled(Complex64::new(1.0, 0.0), b);
    }
    Ok(sum)
}
