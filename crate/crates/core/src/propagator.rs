//! Deterministic between-event evolution.
//!
//! Integrates `psi' = A(t) psi` with `A = -i H - Lambda/2` by classical
//! fixed-step RK4. Because `Lambda` is positive semidefinite the squared
//! norm of the solution decreases monotonically; `find_jump_time` exploits
//! this to locate the first time the squared norm crosses a random
//! threshold `r`, which is the waiting-time sampling rule of the jump
//! process.
//!
//! Steps never straddle declared piecewise breakpoints: integration is
//! split into breakpoint segments and the step is shrunk to fit each
//! segment exactly. Within a segment, providers that cannot vary with time
//! are evaluated once.

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::model::{EventModel, SectorId};
use crate::trajectory::EventRecord;

/// Absolute time tolerance of the jump-time bisection.
pub const JUMP_TIME_TOL: f64 = 1e-10;

/// Unnormalized state at the end of a propagation leg.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub state: CVector,
    pub t_end: f64,
    /// Squared norm of `state`: the no-event survival probability of the
    /// leg when the input state was normalized.
    pub survival: f64,
}

/// Outcome of the threshold search.
#[derive(Debug, Clone)]
pub enum JumpSearch {
    /// The squared norm reached `r` at `t`; `state` is the unnormalized
    /// state there.
    Jump { t: f64, state: CVector },
    /// The threshold was not reached by `t_max`; `state` is the
    /// unnormalized state at `t_max`.
    NoJump { state: CVector },
}

/// Generator of one breakpoint segment, pre-evaluated when possible.
enum SegmentGen<'a> {
    Fixed(CMatrix),
    Varying {
        model: &'a EventModel,
        alpha: SectorId,
        hint: f64,
        history: &'a [EventRecord],
    },
}

impl SegmentGen<'_> {
    fn new<'a>(
        model: &'a EventModel,
        alpha: SectorId,
        seg_start: f64,
        seg_end: f64,
        history: &'a [EventRecord],
    ) -> Result<SegmentGen<'a>> {
        let hint = 0.5 * (seg_start + seg_end);
        if model.sector_is_segment_constant(alpha) {
            Ok(SegmentGen::Fixed(model.effective_generator_hinted(
                alpha, hint, hint, history,
            )?))
        } else {
            Ok(SegmentGen::Varying {
                model,
                alpha,
                hint,
                history,
            })
        }
    }

    /// A vanishing generator keeps the state constant over the whole
    /// segment (zero rate, no Hamiltonian), so stepping can be skipped.
    fn is_zero(&self) -> bool {
        matches!(self, SegmentGen::Fixed(a) if a.max_abs() == 0.0)
    }

    fn rk4_step(&self, t: f64, h: f64, psi: &CVector) -> Result<CVector> {
        let half = 0.5 * h;
        let (k1, k2, k3, k4) = match self {
            SegmentGen::Fixed(a) => {
                let k1 = a.apply(psi)?;
                let mut y = psi.clone();
                y.add_scaled(half.into(), &k1);
                let k2 = a.apply(&y)?;
                let mut y = psi.clone();
                y.add_scaled(half.into(), &k2);
                let k3 = a.apply(&y)?;
                let mut y = psi.clone();
                y.add_scaled(h.into(), &k3);
                let k4 = a.apply(&y)?;
                (k1, k2, k3, k4)
            }
            SegmentGen::Varying {
                model,
                alpha,
                hint,
                history,
            } => {
                let a0 = model.effective_generator_hinted(*alpha, t, *hint, history)?;
                let am = model.effective_generator_hinted(*alpha, t + half, *hint, history)?;
                let a1 = model.effective_generator_hinted(*alpha, t + h, *hint, history)?;
                let k1 = a0.apply(psi)?;
                let mut y = psi.clone();
                y.add_scaled(half.into(), &k1);
                let k2 = am.apply(&y)?;
                let mut y = psi.clone();
                y.add_scaled(half.into(), &k2);
                let k3 = am.apply(&y)?;
                let mut y = psi.clone();
                y.add_scaled(h.into(), &k3);
                let k4 = a1.apply(&y)?;
                (k1, k2, k3, k4)
            }
        };
        let sixth = h / 6.0;
        let mut out = psi.clone();
        out.add_scaled(sixth.into(), &k1);
        out.add_scaled((2.0 * sixth).into(), &k2);
        out.add_scaled((2.0 * sixth).into(), &k3);
        out.add_scaled(sixth.into(), &k4);
        Ok(out)
    }
}

fn check_leg(t0: f64, t1: f64, step: f64) -> Result<()> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {step}")));
    }
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!(
            "propagation interval reversed: t0 = {t0}, t1 = {t1}"
        )));
    }
    Ok(())
}

/// Propagate the (possibly unnormalized) state from `t0` to `t1`,
/// calling `observe(t, psi)` at `t0` and after every accepted step.
pub(crate) fn evolve_observed(
    model: &EventModel,
    alpha: SectorId,
    psi0: &CVector,
    t0: f64,
    t1: f64,
    step: f64,
    history: &[EventRecord],
    mut observe: impl FnMut(f64, &CVector),
) -> Result<PropagationResult> {
    check_leg(t0, t1, step)?;
    let mut psi = psi0.clone();
    let mut t = t0;
    observe(t, &psi);
    let mut boundaries = model.sector_breakpoints(alpha, t0, t1);
    boundaries.push(t1);
    for seg_end in boundaries {
        if seg_end <= t {
            continue;
        }
        let gen = SegmentGen::new(model, alpha, t, seg_end, history)?;
        if gen.is_zero() {
            t = seg_end;
            observe(t, &psi);
            continue;
        }
        let len = seg_end - t;
        let n = (len / step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            psi = gen.rk4_step(t, h, &psi)?;
            t = if k + 1 == n { seg_end } else { t + h };
            observe(t, &psi);
        }
    }
    let survival = psi.norm_sq();
    Ok(PropagationResult {
        state: psi,
        t_end: t1,
        survival,
    })
}

/// Between-event propagation: returns the unnormalized state at `t1` and
/// its squared norm.
pub fn evolve(
    model: &EventModel,
    alpha: SectorId,
    psi0: &CVector,
    t0: f64,
    t1: f64,
    step: f64,
    history: &[EventRecord],
) -> Result<PropagationResult> {
    evolve_observed(model, alpha, psi0, t0, t1, step, history, |_, _| {})
}

/// Locate the first `t <= t_max` at which the squared norm of the
/// propagated state reaches the threshold `r in (0, 1]`.
///
/// The crossing is detected on the step grid (the squared norm decreases
/// monotonically, so the first step whose endpoint falls strictly below
/// `r` brackets it) and then refined by bisection, re-integrating from the
/// bracketing step's start. The returned time is accurate to
/// [`JUMP_TIME_TOL`]. Flat stretches (zero rate) never cross; a survival
/// that only asymptotes to `r` is a no-jump.
pub fn find_jump_time(
    model: &EventModel,
    alpha: SectorId,
    psi0: &CVector,
    t0: f64,
    r: f64,
    t_max: f64,
    step: f64,
    history: &[EventRecord],
) -> Result<JumpSearch> {
    check_leg(t0, t_max, step)?;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1], got {r}"
        )));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "find_jump_time requires a normalized state (norm = {})",
            psi0.norm()
        )));
    }

    let mut psi = psi0.clone();
    let mut t = t0;
    let mut boundaries = model.sector_breakpoints(alpha, t0, t_max);
    boundaries.push(t_max);
    for seg_end in boundaries {
        if seg_end <= t {
            continue;
        }
        let gen = SegmentGen::new(model, alpha, t, seg_end, history)?;
        if gen.is_zero() {
            // Constant state, constant survival: no crossing possible here.
            t = seg_end;
            continue;
        }
        let len = seg_end - t;
        let n = (len / step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let t_next = if k + 1 == n { seg_end } else { t + h };
            let next = gen.rk4_step(t, t_next - t, &psi)?;
            if next.norm_sq() < r {
                // Bisect inside [t, t_next], always restarting from psi(t).
                let (mut lo, mut hi) = (t, t_next);
                while hi - lo > JUMP_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    let trial = gen.rk4_step(t, mid - t, &psi)?;
                    if trial.norm_sq() < r {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t_jump = 0.5 * (lo + hi);
                let state = gen.rk4_step(t, t_jump - t, &psi)?;
                return Ok(JumpSearch::Jump { t: t_jump, state });
            }
            psi = next;
            t = t_next;
        }
    }
    Ok(JumpSearch::NoJump { state: psi })
}
