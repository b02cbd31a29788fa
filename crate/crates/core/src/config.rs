//! JSON configuration: model definition (built-in by name or explicit
//! matrices) plus the run block.
//!
//! Matrices are written as row lists of `[re, im]` pairs. A jump or
//! Hamiltonian entry is either a plain matrix or a piecewise-constant
//! provider `{ "breakpoints": [...], "matrices": [...] }`. Parsing builds
//! and fully validates the model; nothing partial is ever returned.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::model::{EventModel, JumpChannel, OperatorProvider, SectorId, SectorSpec};
use crate::trajectory::SimParams;
use crate::zoo::{self, GrwLatticeConfig};

pub type MatrixDef = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_def(def: &MatrixDef) -> Result<CMatrix> {
    if def.is_empty() || def[0].is_empty() {
        return Err(Error::Config("matrix must have positive shape".into()));
    }
    let cols = def[0].len();
    if def.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    CMatrix::from_rows(
        def.iter()
            .map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            .collect(),
    )
    .map_err(|e| Error::Config(e.to_string()))
}

pub fn matrix_to_def(m: &CMatrix) -> MatrixDef {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let z = m.get(i, j);
                    [z.re, z.im]
                })
                .collect()
        })
        .collect()
}

/// Constant matrix or piecewise-constant schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProviderDef {
    Matrix(MatrixDef),
    Piecewise {
        breakpoints: Vec<f64>,
        matrices: Vec<MatrixDef>,
    },
}

impl ProviderDef {
    fn build(&self) -> Result<OperatorProvider> {
        Ok(match self {
            Self::Matrix(def) => OperatorProvider::Constant(matrix_from_def(def)?),
            Self::Piecewise {
                breakpoints,
                matrices,
            } => OperatorProvider::PiecewiseConstant {
                breakpoints: breakpoints.clone(),
                matrices: matrices
                    .iter()
                    .map(matrix_from_def)
                    .collect::<Result<Vec<_>>>()?,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorDef {
    pub id: SectorId,
    pub dim: usize,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpDef {
    pub from: SectorId,
    pub to: SectorId,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<MatrixDef>>,
}

impl JumpDef {
    fn provider(&self) -> Result<OperatorProvider> {
        match (&self.matrix, &self.breakpoints, &self.matrices) {
            (Some(m), None, None) => ProviderDef::Matrix(m.clone()).build(),
            (None, Some(b), Some(ms)) => ProviderDef::Piecewise {
                breakpoints: b.clone(),
                matrices: ms.clone(),
            }
            .build(),
            _ => Err(Error::Config(format!(
                "jump {} -> {} needs either \"matrix\" or \"breakpoints\"+\"matrices\"",
                self.from, self.to
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialDef {
    pub sector: SectorId,
    /// Amplitudes as [re, im] pairs; normalized on load.
    pub state: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitModelDef {
    pub sectors: Vec<SectorDef>,
    /// Keyed by sector id.
    pub hamiltonians: BTreeMap<usize, ProviderDef>,
    #[serde(default)]
    pub jumps: Vec<JumpDef>,
    pub initial: InitialDef,
}

/// Built-in models addressable by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinModelDef {
    GrwLattice(GrwLatticeConfig),
    TwoSectorScalar { g: f64 },
    NoncommutingSpin { rates: Vec<f64>, axes: Vec<[f64; 3]> },
    MomentumWeighted(GrwLatticeConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSection {
    Builtin(BuiltinModelDef),
    Explicit(ExplicitModelDef),
}

fn default_t_max() -> f64 {
    10.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_trajectories() -> usize {
    1000
}
fn default_budget() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_budget")]
    pub event_budget: usize,
    #[serde(default)]
    pub probe_times: Vec<f64>,
    #[serde(default)]
    pub snapshot_states: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_max: default_t_max(),
            step: default_step(),
            seed: 0,
            trajectories: default_trajectories(),
            event_budget: default_budget(),
            probe_times: Vec::new(),
            snapshot_states: false,
        }
    }
}

impl RunSection {
    pub fn sim_params(&self) -> SimParams {
        SimParams {
            t0: self.t0,
            t_max: self.t_max,
            step: self.step,
            event_budget: self.event_budget,
            snapshot_states: self.snapshot_states,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
}

/// Fully validated result of parsing one config.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub config: ModelConfig,
    pub model: EventModel,
    pub init_sector: SectorId,
    pub init_state: CVector,
    /// Digest of the raw config bytes; embedded in output headers so logs
    /// are self-identifying.
    pub config_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_explicit(def: &ExplicitModelDef) -> Result<(EventModel, SectorId, CVector)> {
    let sectors: Vec<SectorSpec> = def
        .sectors
        .iter()
        .map(|s| SectorSpec::new(s.id, s.dim, s.label.clone()))
        .collect();
    let mut hams = Vec::with_capacity(sectors.len());
    for s in &def.sectors {
        let p = def.hamiltonians.get(&s.id).ok_or_else(|| {
            Error::Config(format!("no Hamiltonian entry for sector {}", s.id))
        })?;
        hams.push(p.build()?);
    }
    for id in def.hamiltonians.keys() {
        if !def.sectors.iter().any(|s| s.id == *id) {
            return Err(Error::Config(format!(
                "Hamiltonian references unknown sector {id}"
            )));
        }
    }
    let jumps = def
        .jumps
        .iter()
        .map(|j| {
            if !def.sectors.iter().any(|s| s.id == j.from) {
                return Err(Error::Config(format!(
                    "jump references unknown sector {}",
                    j.from
                )));
            }
            if !def.sectors.iter().any(|s| s.id == j.to) {
                return Err(Error::Config(format!(
                    "jump references unknown sector {}",
                    j.to
                )));
            }
            Ok(JumpChannel::new(j.from, j.to, j.label.clone(), j.provider()?))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = EventModel::new(sectors, hams, jumps)?;
    let amps: Vec<Complex64> = def
        .initial
        .state
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect();
    if amps.is_empty() {
        return Err(Error::Config("initial state must be non-empty".into()));
    }
    let state = CVector::new(amps)
        .normalized()
        .map_err(|_| Error::Config("initial state has zero norm".into()))?;
    if state.len() != model.dim(def.initial.sector)? {
        return Err(Error::Config(format!(
            "initial state length {} does not match sector {} dimension {}",
            state.len(),
            def.initial.sector,
            model.dim(def.initial.sector)?
        )));
    }
    Ok((model, def.initial.sector, state))
}

fn build_builtin(def: &BuiltinModelDef) -> Result<(EventModel, SectorId, CVector)> {
    match def {
        BuiltinModelDef::GrwLattice(c) => {
            let reduced = zoo::build_grw_lattice(c)?;
            Ok((reduced.as_event_model(), 0, c.initial_state()))
        }
        BuiltinModelDef::MomentumWeighted(c) => {
            let reduced = zoo::build_momentum_weighted(c)?;
            Ok((reduced.as_event_model(), 0, c.initial_state()))
        }
        BuiltinModelDef::TwoSectorScalar { g } => Ok((
            zoo::two_sector_scalar(*g),
            0,
            CVector::from_real(&[1.0]),
        )),
        BuiltinModelDef::NoncommutingSpin { rates, axes } => {
            let reduced = zoo::build_noncommuting_spin(rates, axes)?;
            Ok((reduced.as_event_model(), 0, CVector::from_real(&[1.0, 0.0])))
        }
    }
}

/// Parse and validate a config from raw JSON text.
pub fn parse_config_str(raw: &str) -> Result<LoadedModel> {
    let config: ModelConfig =
        serde_json::from_str(raw).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    if !(config.run.step > 0.0) {
        return Err(Error::Config("run.step must be positive".into()));
    }
    if config.run.t_max < config.run.t0 {
        return Err(Error::Config("run.t_max must be >= run.t0".into()));
    }
    let (model, init_sector, init_state) = match &config.model {
        ModelSection::Explicit(def) => build_explicit(def)?,
        ModelSection::Builtin(def) => build_builtin(def)?,
    };
    Ok(LoadedModel {
        config,
        model,
        init_sector,
        init_state,
        config_sha256: sha256_hex(raw.as_bytes()),
    })
}

/// Parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<LoadedModel> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&raw)
}

/// Serialize a config back to canonical JSON.
pub fn write_config(config: &ModelConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serialization is infallible")
}
