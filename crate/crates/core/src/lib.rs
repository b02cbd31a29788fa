//! Piecewise-deterministic quantum jump processes over sector-indexed
//! Hilbert spaces.
//!
//! A model couples a finite set of Hilbert-space sectors through jump
//! operators. Between events the state flows under the non-Hermitian
//! generator `-i H - Lambda/2`; events happen when the decaying squared
//! norm crosses a uniform random threshold, and each event applies one
//! jump operator, normalizes, and may move the state to another sector
//! (of possibly different dimension). The crate provides
//!
//! - the trajectory sampler ([`trajectory`]) with reproducible seeded
//!   ensembles,
//! - the master-equation integrator ([`lindblad`]) whose solution the
//!   ensemble average must reproduce,
//! - exact event-history densities ([`likelihood`]) as the analytical
//!   oracle for simulated event logs,
//! - prebuilt models ([`zoo`]): a Gaussian localization lattice on a
//!   periodic ring, a non-commuting spin model, and a momentum-weighted
//!   variant with a growing event rate,
//! - JSON config parsing, JSON-Lines event logs, and log statistics
//!   ([`config`], [`eventlog`], [`stats`]).

pub mod config;
pub mod error;
pub mod eventlog;
pub mod likelihood;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod propagator;
pub mod stats;
pub mod trajectory;
pub mod zoo;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use model::{EventModel, SectorId};
