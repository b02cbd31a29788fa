//! Prebuilt models: the localization lattice (Gaussian collapse operators
//! on a periodic ring with a hopping Hamiltonian), a non-commuting spin
//! model, a momentum-weighted variant with a state-dependent event rate,
//! and small scalar reference models used throughout the tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{lindblad_rhs, DirectSumDensity};
use crate::linalg::{pauli_x, pauli_y, pauli_z, CMatrix, CVector};
use crate::model::{EventModel, JumpChannel, OperatorProvider, SectorSpec};
use crate::trajectory::Trajectory;

/// Single-sector model with label-keyed jump operators: all Hilbert spaces
/// identified, events recorded by label instead of by sector change.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    dim: usize,
    hamiltonian: OperatorProvider,
    jumps: Vec<(String, OperatorProvider)>,
}

impl ReducedModel {
    pub fn new(
        dim: usize,
        hamiltonian: OperatorProvider,
        jumps: Vec<(String, OperatorProvider)>,
    ) -> Result<Self> {
        if jumps.is_empty() {
            return Err(Error::InvalidArgument(
                "a reduced model needs at least one jump operator".into(),
            ));
        }
        let model = Self {
            dim,
            hamiltonian,
            jumps,
        };
        // Validate eagerly through the runner construction.
        model.build_runner()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> Vec<&str> {
        self.jumps.iter().map(|(l, _)| l.as_str()).collect()
    }

    fn build_runner(&self) -> Result<EventModel> {
        EventModel::new_reduced(
            self.dim,
            self.hamiltonian.clone(),
            self.jumps
                .iter()
                .map(|(label, op)| JumpChannel::new(0, 0, label.clone(), op.clone()))
                .collect(),
        )
    }

    /// The runnable single-sector form accepted by the trajectory, master
    /// equation, and likelihood machinery.
    pub fn as_event_model(&self) -> EventModel {
        self.build_runner().expect("validated at construction")
    }

    /// Equivalent sector-resolved form: two copies of the Hilbert space
    /// with every jump operator wired both ways between them. Summing the
    /// two density blocks (or relabelling histories by parity) recovers the
    /// reduced dynamics exactly; used as the dual route in consistency
    /// tests.
    pub fn explicit_two_sector(&self) -> EventModel {
        let mut channels = Vec::new();
        for (label, op) in &self.jumps {
            channels.push(JumpChannel::new(0, 1, label.clone(), op.clone()));
            channels.push(JumpChannel::new(1, 0, label.clone(), op.clone()));
        }
        EventModel::new(
            vec![
                SectorSpec::new(0, self.dim, "even"),
                SectorSpec::new(1, self.dim, "odd"),
            ],
            vec![self.hamiltonian.clone(), self.hamiltonian.clone()],
            channels,
        )
        .expect("two-sector mirror of a validated reduced model")
    }
}

/// Initial-state descriptor for lattice models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Uniform,
    Site(usize),
}

/// Periodic-ring localization model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrwLatticeConfig {
    /// Ring sites, >= 4.
    pub sites: usize,
    /// Lattice spacing.
    #[serde(default = "one")]
    pub spacing: f64,
    /// Collapse width.
    pub sigma: f64,
    /// Total event rate (the rate operator is this times the identity).
    pub lambda: f64,
    /// Hopping amplitude: H = -J (shift + shift†).
    pub hopping: f64,
    #[serde(default)]
    pub initial: InitialState,
}

fn one() -> f64 {
    1.0
}

impl GrwLatticeConfig {
    fn validate(&self) -> Result<()> {
        if self.sites < 4 {
            return Err(Error::InvalidArgument(format!(
                "ring needs at least 4 sites, got {}",
                self.sites
            )));
        }
        if !(self.sigma > 0.0) || !(self.lambda > 0.0) || !(self.spacing > 0.0) {
            return Err(Error::InvalidArgument(
                "sigma, lambda, and spacing must be positive".into(),
            ));
        }
        if let InitialState::Site(k) = self.initial {
            if k >= self.sites {
                return Err(Error::InvalidArgument(format!(
                    "initial site {k} outside ring of {} sites",
                    self.sites
                )));
            }
        }
        Ok(())
    }

    /// Normalized initial state described by the config.
    pub fn initial_state(&self) -> CVector {
        match self.initial {
            InitialState::Uniform => {
                let amp = 1.0 / (self.sites as f64).sqrt();
                CVector::from_real(&vec![amp; self.sites])
            }
            InitialState::Site(k) => CVector::basis(self.sites, k),
        }
    }
}

/// Ring distance between sites `x` and `a` in units of the spacing.
fn ring_distance(x: usize, a: usize, sites: usize) -> f64 {
    let d = x.abs_diff(a);
    d.min(sites - d) as f64
}

/// Nearest-neighbour hopping Hamiltonian on the ring: -J (S + S†).
pub fn hopping_hamiltonian(sites: usize, j: f64) -> CMatrix {
    let mut h = CMatrix::zeros(sites, sites);
    for x in 0..sites {
        let next = (x + 1) % sites;
        h.set(x, next, Complex64::new(-j, 0.0));
        h.set(next, x, Complex64::new(-j, 0.0));
    }
    h
}

fn site_label(a: usize) -> String {
    format!("x{a}")
}

/// Gaussian collapse operators on the ring.
///
/// `G_a = sqrt(lambda) g_a / sqrt(Z)` with `g_a(x) = exp(-d(x,a)^2 / (4 sigma^2))`
/// and `Z` the site-independent circulant normalizer, so that
/// `sum_a G_a† G_a = lambda * identity` exactly up to round-off. Each `G_a`
/// is a non-negative diagonal matrix, and `G_a^2` is the per-site rate
/// operator of the underlying localization model.
pub fn build_grw_lattice(c: &GrwLatticeConfig) -> Result<ReducedModel> {
    c.validate()?;
    let m = c.sites;
    let z: f64 = (0..m)
        .map(|x| {
            let d = ring_distance(x, 0, m) * c.spacing;
            (-d * d / (2.0 * c.sigma * c.sigma)).exp()
        })
        .sum();
    let scale = (c.lambda / z).sqrt();
    let jumps = (0..m)
        .map(|a| {
            let diag: Vec<f64> = (0..m)
                .map(|x| {
                    let d = ring_distance(x, a, m) * c.spacing;
                    scale * (-d * d / (4.0 * c.sigma * c.sigma)).exp()
                })
                .collect();
            (
                site_label(a),
                OperatorProvider::constant(CMatrix::diag_real(&diag)),
            )
        })
        .collect();
    ReducedModel::new(
        m,
        OperatorProvider::constant(hopping_hamiltonian(m, c.hopping)),
        jumps,
    )
}

/// Spin-1/2 model with projector jump operators along the given Bloch axes.
/// The operators of distinct non-parallel axes do not commute; construction
/// fails if every pair commutes.
pub fn build_noncommuting_spin(rates: &[f64], axes: &[[f64; 3]]) -> Result<ReducedModel> {
    if axes.len() < 2 || rates.len() != axes.len() {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 axes with one rate each, got {} axes and {} rates",
            axes.len(),
            rates.len()
        )));
    }
    if rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("rates must be positive".into()));
    }
    let mut ops = Vec::new();
    for (k, axis) in axes.iter().enumerate() {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidArgument(format!("axis {k} is zero")));
        }
        let n = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
        // P = (I + n . sigma) / 2, G = sqrt(rate) P.
        let mut p = CMatrix::identity(2);
        p.add_assign_scaled(Complex64::new(n[0], 0.0), &pauli_x());
        p.add_assign_scaled(Complex64::new(n[1], 0.0), &pauli_y());
        p.add_assign_scaled(Complex64::new(n[2], 0.0), &pauli_z());
        let g = p.scale_re(0.5 * rates[k].sqrt());
        ops.push(g);
    }
    let mut max_comm = 0.0f64;
    for i in 0..ops.len() {
        for j in (i + 1)..ops.len() {
            let comm = ops[i]
                .mul(&ops[j])
                .unwrap()
                .sub(&ops[j].mul(&ops[i]).unwrap())
                .unwrap();
            max_comm = max_comm.max(comm.frobenius_norm());
        }
    }
    if max_comm < 1e-12 {
        return Err(Error::InvalidArgument(
            "degenerate axes: all jump operators commute".into(),
        ));
    }
    ReducedModel::new(
        2,
        OperatorProvider::constant(CMatrix::zeros(2, 2)),
        ops.into_iter()
            .enumerate()
            .map(|(k, g)| (format!("axis{k}"), OperatorProvider::constant(g)))
            .collect(),
    )
}

/// Downward shift of the kinetic weight. Its spectrum becomes
/// `[-shift, 2-shift]`, which makes the symmetrized operators indefinite
/// even when the Gaussian factors are broad.
const MOMENTUM_WEIGHT_SHIFT: f64 = 0.2;

/// Localization operators weighted by the kinetic energy: each site's
/// Gaussian is symmetrized with `(2I - S - S†)/2 - shift*I`, a function of
/// the shift operators. The resulting Hermitian operators are indefinite
/// and mutually non-commuting, and the total rate operator is no longer
/// proportional to the identity: high-kinetic-energy states jump faster,
/// and each localization kick raises the kinetic energy, so the mean event
/// rate grows along a trajectory.
///
/// Normalization: `lambda` fixes the rate averaged over the maximally
/// mixed state.
pub fn build_momentum_weighted(c: &GrwLatticeConfig) -> Result<ReducedModel> {
    c.validate()?;
    let m = c.sites;
    // Kinetic factor (2I - S - S†)/2 - shift*I = (1 - shift)I + H_hop/(2J) for J = 1.
    let mut kin = CMatrix::identity(m).scale_re(1.0 - MOMENTUM_WEIGHT_SHIFT);
    kin.add_assign_scaled(Complex64::new(0.5, 0.0), &hopping_hamiltonian(m, 1.0));
    let mut raw = Vec::with_capacity(m);
    for a in 0..m {
        let diag: Vec<f64> = (0..m)
            .map(|x| {
                let d = ring_distance(x, a, m) * c.spacing;
                (-d * d / (4.0 * c.sigma * c.sigma)).exp()
            })
            .collect();
        let g = CMatrix::diag_real(&diag);
        let mut sym = g.mul(&kin).unwrap();
        sym.add_assign_scaled(Complex64::new(1.0, 0.0), &kin.mul(&g).unwrap());
        raw.push(sym.scale_re(0.5));
    }
    let total: f64 = raw.iter().map(|r| r.gram().trace().re).sum();
    let scale = (c.lambda * m as f64 / total).sqrt();
    ReducedModel::new(
        m,
        OperatorProvider::constant(hopping_hamiltonian(m, c.hopping)),
        raw.into_iter()
            .enumerate()
            .map(|(a, r)| {
                (
                    site_label(a),
                    OperatorProvider::constant(r.scale_re(scale)),
                )
            })
            .collect(),
    )
}

/// Two scalar sectors with one decay channel of amplitude `g`
/// (event-time density `g^2 exp(-g^2 t)`).
pub fn two_sector_scalar(g: f64) -> EventModel {
    EventModel::new(
        vec![SectorSpec::new(0, 1, "live"), SectorSpec::new(1, 1, "dead")],
        vec![
            OperatorProvider::constant(CMatrix::zeros(1, 1)),
            OperatorProvider::constant(CMatrix::zeros(1, 1)),
        ],
        vec![JumpChannel::constant(0, 1, "decay", CMatrix::diag_real(&[g]))],
    )
    .expect("static model")
}

/// Driven qubit with one decay channel into a second sector:
/// H = sigma_x / 2, rate operator diag(gamma, 0).
pub fn qubit_decay(gamma: f64) -> EventModel {
    let g = CMatrix::from_real_rows(&[&[0.0, 0.0], &[gamma.sqrt(), 0.0]]);
    EventModel::new(
        vec![SectorSpec::new(0, 2, "sys"), SectorSpec::new(1, 2, "env")],
        vec![
            OperatorProvider::constant(pauli_x().scale_re(0.5)),
            OperatorProvider::constant(CMatrix::zeros(2, 2)),
        ],
        vec![JumpChannel::constant(0, 1, "decay", g)],
    )
    .expect("static model")
}

/// Energy observable helper for lattice models: expectation values along
/// trajectories and the master-equation growth-rate prediction.
#[derive(Debug, Clone)]
pub struct EnergyProbe {
    h: CMatrix,
}

impl EnergyProbe {
    pub fn new(h: CMatrix) -> Self {
        assert!(h.is_square());
        Self { h }
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    /// <psi| H |psi> / <psi|psi>.
    pub fn expectation(&self, psi: &CVector) -> f64 {
        psi.inner(&self.h.apply(psi).expect("dimension fixed at build"))
            .re
            / psi.norm_sq()
    }

    /// tr(H rho) summed over equal-dimension blocks.
    pub fn density_expectation(&self, rho: &DirectSumDensity) -> Result<f64> {
        let mut total = 0.0;
        for b in rho.blocks() {
            total += self.h.mul(b)?.trace().re;
        }
        Ok(total)
    }

    /// Master-equation growth rate tr(H d(rho)/dt) at the given density.
    pub fn predicted_rate(&self, m: &EventModel, rho: &DirectSumDensity, t: f64) -> Result<f64> {
        let d = lindblad_rhs(m, rho, t, &[])?;
        self.density_expectation(&d)
    }

    /// (event index, time, post-jump energy) series of one trajectory;
    /// requires snapshots to have been recorded.
    pub fn per_event_series(&self, traj: &Trajectory) -> Result<Vec<(usize, f64, f64)>> {
        traj.events
            .iter()
            .map(|e| {
                let state = e.state.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(
                        "per-event energies need snapshot_states = true".into(),
                    )
                })?;
                Ok((e.index, e.time, self.expectation(state)))
            })
            .collect()
    }
}

/// Energy probe for a ring config (hopping Hamiltonian).
pub fn build_energy_probe(c: &GrwLatticeConfig) -> Result<EnergyProbe> {
    c.validate()?;
    Ok(EnergyProbe::new(hopping_hamiltonian(c.sites, c.hopping)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{joint_density, EventHistory};
    use crate::lindblad::{integrate_master, sum_sectors};
    use crate::linalg::min_eigenvalue_hermitian;
    use crate::trajectory::{apply_jump_channel, run_trajectory, RngStream, SimParams};

    fn grw8() -> GrwLatticeConfig {
        GrwLatticeConfig {
            sites: 8,
            spacing: 1.0,
            sigma: 1.0,
            lambda: 1.0,
            hopping: 1.0,
            initial: InitialState::Uniform,
        }
    }

    #[test]
    fn grw_rate_operator_is_lambda_identity() {
        let model = build_grw_lattice(&grw8()).unwrap().as_event_model();
        let lambda = model.lambda_of(0, 0.0, &[]).unwrap();
        let dev = lambda
            .sub(&CMatrix::identity(8))
            .unwrap()
            .max_abs();
        assert!(dev <= 1e-12, "deviation from identity {dev:.3e}");
    }

    #[test]
    fn grw_total_rate_is_state_independent() {
        let cfg = grw8();
        let model = build_grw_lattice(&cfg).unwrap().as_event_model();
        for psi in [
            cfg.initial_state(),
            CVector::basis(8, 3),
            CVector::from_real(&[0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5]),
        ] {
            let r = model.total_rate(0, &psi, 0.0, &[]).unwrap();
            assert!((r - cfg.lambda).abs() < 1e-12, "rate {r}");
        }
    }

    #[test]
    fn grw_collapse_squares_to_site_rate() {
        // G_a G_a must equal the diagonal site-rate operator
        // lambda g_a^2 / Z entry by entry.
        let cfg = grw8();
        let reduced = build_grw_lattice(&cfg).unwrap();
        let model = reduced.as_event_model();
        for (idx, channel) in model.channels().iter().enumerate() {
            let g = model.channel_matrix(idx, 0.0, &[]).unwrap();
            let square = g.mul(&g).unwrap();
            let gram = g.gram();
            // G is Hermitian non-negative diagonal, so G^2 = G†G.
            assert!(square.sub(&gram).unwrap().max_abs() <= 1e-12);
            assert!(
                min_eigenvalue_hermitian(&g).unwrap() >= -1e-15,
                "channel {} not non-negative",
                channel.label
            );
        }
    }

    #[test]
    fn grw_posterior_is_gaussian_with_matching_width() {
        let cfg = GrwLatticeConfig {
            sites: 16,
            ..grw8()
        };
        let model = build_grw_lattice(&cfg).unwrap().as_event_model();
        let uniform = cfg.initial_state();
        let a = 5usize;
        let idx = model.resolve_channel(0, 0, Some(&site_label(a))).unwrap();
        let post = apply_jump_channel(&model, idx, &uniform, 0.0, &[]).unwrap();
        // |psi'(x)|^2 proportional to exp(-d^2 / (2 sigma^2)).
        let mut ratio = None;
        for x in 0..16 {
            let d = ring_distance(x, a, 16);
            let expected = (-d * d / (2.0 * cfg.sigma * cfg.sigma)).exp();
            let got = post[x].norm_sqr();
            match ratio {
                None => ratio = Some(got / expected),
                Some(r) => assert!((got / expected - r).abs() < 1e-12 * r),
            }
        }
        // Circular variance close to sigma^2.
        let var: f64 = (0..16)
            .map(|x| {
                let d = ring_distance(x, a, 16) * cfg.spacing;
                d * d * post[x].norm_sqr()
            })
            .sum();
        assert!(
            (var - cfg.sigma * cfg.sigma).abs() < 0.2 * cfg.sigma * cfg.sigma,
            "posterior variance {var}"
        );
    }

    #[test]
    fn grw_config_validation() {
        let mut c = grw8();
        c.sites = 3;
        assert!(build_grw_lattice(&c).is_err());
        let mut c = grw8();
        c.sigma = 0.0;
        assert!(build_grw_lattice(&c).is_err());
        let mut c = grw8();
        c.initial = InitialState::Site(12);
        assert!(build_grw_lattice(&c).is_err());
    }

    #[test]
    fn reduced_scalar_matches_two_sector_event_density() {
        let reduced = ReducedModel::new(
            1,
            OperatorProvider::constant(CMatrix::zeros(1, 1)),
            vec![(
                "decay".to_string(),
                OperatorProvider::constant(CMatrix::diag_real(&[1.0])),
            )],
        )
        .unwrap();
        let runner = reduced.as_event_model();
        let chain = two_sector_scalar(1.0);
        let psi = CVector::from_real(&[1.0]);
        for t in [0.3, 1.0, 2.7] {
            let reduced_hist = EventHistory::new(0, 0.0).then(t, 0, Some("decay"));
            let chain_hist = EventHistory::new(0, 0.0).then(t, 1, None);
            let a = joint_density(&runner, &reduced_hist, &psi, 1e-3).unwrap();
            let b = joint_density(&chain, &chain_hist, &psi, 1e-3).unwrap();
            assert!((a - b).abs() <= 1e-10, "densities differ at t = {t}");
        }
    }

    #[test]
    fn grw_has_one_label_per_site() {
        let reduced = build_grw_lattice(&grw8()).unwrap();
        assert_eq!(reduced.labels().len(), 8);
        let runner = reduced.as_event_model();
        assert_eq!(runner.num_sectors(), 1);
        assert_eq!(runner.channels().len(), 8);
    }

    #[test]
    fn reduced_and_explicit_two_sector_densities_match() {
        let cfg = GrwLatticeConfig {
            sites: 6,
            ..grw8()
        };
        let reduced = build_grw_lattice(&cfg).unwrap();
        let runner = reduced.as_event_model();
        let explicit = reduced.explicit_two_sector();
        let psi = cfg.initial_state();
        // One- and two-event histories with matched labels; the explicit
        // construction alternates sectors 0 -> 1 -> 0.
        let h1r = EventHistory::new(0, 0.0).then(0.8, 0, Some("x2"));
        let h1e = EventHistory::new(0, 0.0).then(0.8, 1, Some("x2"));
        let d1r = joint_density(&runner, &h1r, &psi, 1e-3).unwrap();
        let d1e = joint_density(&explicit, &h1e, &psi, 1e-3).unwrap();
        assert!((d1r - d1e).abs() <= 1e-10, "{d1r} vs {d1e}");

        let h2r = EventHistory::new(0, 0.0)
            .then(0.8, 0, Some("x2"))
            .then(1.7, 0, Some("x5"));
        let h2e = EventHistory::new(0, 0.0)
            .then(0.8, 1, Some("x2"))
            .then(1.7, 0, Some("x5"));
        let d2r = joint_density(&runner, &h2r, &psi, 1e-3).unwrap();
        let d2e = joint_density(&explicit, &h2e, &psi, 1e-3).unwrap();
        assert!((d2r - d2e).abs() <= 1e-10, "{d2r} vs {d2e}");
    }

    #[test]
    fn reduced_and_explicit_master_equations_match() {
        let cfg = GrwLatticeConfig {
            sites: 6,
            ..grw8()
        };
        let reduced = build_grw_lattice(&cfg).unwrap();
        let runner = reduced.as_event_model();
        let explicit = reduced.explicit_two_sector();
        let psi = cfg.initial_state();
        let rho_r = DirectSumDensity::pure(&[6], 0, &psi).unwrap();
        let rho_e = DirectSumDensity::pure(&[6, 6], 0, &psi).unwrap();
        let out_r = integrate_master(&runner, &rho_r, 0.0, 1.0, 1e-3, &[]).unwrap();
        let out_e = integrate_master(&explicit, &rho_e, 0.0, 1.0, 1e-3, &[]).unwrap();
        let summed = sum_sectors(&out_e).unwrap();
        let diff = summed.sub(out_r.block(0)).unwrap().max_abs();
        assert!(diff <= 1e-8, "max entry difference {diff:.3e}");
    }

    #[test]
    fn spin_projectors_do_not_commute() {
        let reduced =
            build_noncommuting_spin(&[1.0, 1.0], &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let model = reduced.as_event_model();
        let g1 = model.channel_matrix(0, 0.0, &[]).unwrap();
        let g2 = model.channel_matrix(1, 0.0, &[]).unwrap();
        let comm = g1.mul(&g2).unwrap().sub(&g2.mul(&g1).unwrap()).unwrap();
        // |[P_x, P_z]| = 1/2 spectrally, 1/sqrt(2) in Frobenius norm.
        assert!(comm.frobenius_norm() > 0.4, "{}", comm.frobenius_norm());
    }

    #[test]
    fn spin_degenerate_axes_rejected() {
        assert!(build_noncommuting_spin(&[1.0], &[[0.0, 0.0, 1.0]]).is_err());
        assert!(
            build_noncommuting_spin(&[1.0, 1.0], &[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]).is_err()
        );
        assert!(build_noncommuting_spin(&[1.0, 1.0], &[[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn spin_trajectory_stays_on_bloch_sphere() {
        let reduced =
            build_noncommuting_spin(&[1.0, 1.3], &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let model = reduced.as_event_model();
        let params = SimParams {
            t_max: 1e9,
            step: 1e-2,
            event_budget: 2000,
            snapshot_states: true,
            ..SimParams::default()
        };
        let mut rng = RngStream::new(21, 0);
        let psi0 = CVector::from_real(&[1.0, 0.0]);
        let traj = run_trajectory(&model, 0, &psi0, &params, &mut rng).unwrap();
        assert_eq!(traj.events.len(), 2000);
        for e in &traj.events {
            let s = e.state.as_ref().unwrap();
            assert!((s.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn momentum_weighted_rate_depends_on_state() {
        let reduced = build_momentum_weighted(&grw8()).unwrap();
        let model = reduced.as_event_model();
        let lambda = model.lambda_of(0, 0.0, &[]).unwrap();
        // Not proportional to the identity.
        let tr = lambda.trace().re / 8.0;
        let dev = lambda
            .sub(&CMatrix::identity(8).scale_re(tr))
            .unwrap()
            .max_abs();
        assert!(dev > 1e-3, "rate operator too close to identity: {dev:.3e}");
        // Average rate over the maximally mixed state equals lambda.
        assert!((tr - grw8().lambda).abs() < 1e-12);
    }

    #[test]
    fn momentum_weighted_operators_are_indefinite_and_noncommuting() {
        let reduced = build_momentum_weighted(&grw8()).unwrap();
        let model = reduced.as_event_model();
        let g0 = model.channel_matrix(0, 0.0, &[]).unwrap();
        let g3 = model.channel_matrix(3, 0.0, &[]).unwrap();
        let min = min_eigenvalue_hermitian(&g0).unwrap();
        assert!(min < -1e-3, "expected an indefinite operator, min eig {min}");
        let comm = g0.mul(&g3).unwrap().sub(&g3.mul(&g0).unwrap()).unwrap();
        assert!(comm.frobenius_norm() > 0.1);
    }

    #[test]
    fn energy_probe_constant_for_closed_ring() {
        let cfg = grw8();
        let probe = build_energy_probe(&cfg).unwrap();
        // Hopping-only model: no jump channels, energy must stay put.
        let closed = EventModel::new(
            vec![SectorSpec::new(0, 8, "ring")],
            vec![OperatorProvider::constant(hopping_hamiltonian(8, 1.0))],
            vec![],
        )
        .unwrap();
        let psi0 = CVector::basis(8, 2);
        let e0 = probe.expectation(&psi0);
        let res = crate::propagator::evolve(&closed, 0, &psi0, 0.0, 2.0, 1e-3, &[]).unwrap();
        let e1 = probe.expectation(&res.state);
        assert!((e0 - e1).abs() < 1e-9, "energy drifted {e0} -> {e1}");
    }

    #[test]
    fn energy_probe_reports_positive_heating_from_ground_state() {
        let cfg = grw8();
        let probe = build_energy_probe(&cfg).unwrap();
        let model = build_grw_lattice(&cfg).unwrap().as_event_model();
        let rho = DirectSumDensity::pure(&[8], 0, &cfg.initial_state()).unwrap();
        let rate = probe.predicted_rate(&model, &rho, 0.0).unwrap();
        assert!(rate > 0.0, "expected heating, got {rate}");
    }
}
