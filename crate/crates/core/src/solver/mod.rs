//! Finite-difference discretisation and the semi-implicit time stepper.
//!
//! One step solves `(Id + 𝒜) U^{m+1} = U^m + 𝒴^m` for the edge samples and
//! then updates `S`, `I`, `R` at every vertex in closed form. The vertex
//! infection at the new time level is eliminated from the exchange rows, so
//! the linear system involves edge samples only.

mod grid;
mod linear;
mod peaks;
mod simulate;
mod system;

pub use grid::{discretize, discretize_uniform, EdgeGrid, Grid};
pub use linear::Csr;
pub use peaks::{detect_peaks, PeakReport, VertexPeak};
pub use simulate::{simulate, Sample, SimulationOptions, Snapshot, Trajectory};
pub use system::{assemble, dt_stability_bound, step, DiscreteSystem};

use crate::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("edge `{edge}` gets only {points} grid points; at least 3 are needed")]
    ResolutionTooCoarse { edge: String, points: usize },
    #[error("edge `{edge}`: grid spacing {dx} must be positive and finite")]
    InvalidResolution { edge: String, dx: f64 },
    #[error("time step {0} must be positive and finite")]
    InvalidTimeStep(f64),
    #[error("final time {0} must be positive and finite")]
    InvalidHorizon(f64),
    #[error("time step {dt} is not below the stability bound {bound}")]
    UnstableDt { dt: f64, bound: f64 },
    #[error("implicit operator is singular")]
    SingularSystem,
    #[error("non-finite state at step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Edge samples and vertex populations at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub step: usize,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SystemState {
    pub fn new(u: Vec<f64>, s: Vec<f64>, i: Vec<f64>, r: Vec<f64>) -> Self {
        Self { t: 0.0, step: 0, u, s, i, r }
    }

    pub fn vertex_mass(&self) -> f64 {
        self.s.iter().chain(&self.i).chain(&self.r).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.u.iter().chain(&self.s).chain(&self.i).chain(&self.r).copied().fold(f64::INFINITY, f64::min)
    }
}

/// `trap(U) + Σ_v (S_v + I_v + R_v)`.
pub fn discrete_mass(grid: &Grid, state: &SystemState) -> f64 {
    grid.trap(&state.u) + state.vertex_mass()
}
