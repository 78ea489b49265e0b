//! SIR epidemics on compact metric graphs.
//!
//! Susceptible, infected and removed populations live at the vertices and
//! follow SIR dynamics. Infected individuals travelling between vertices are
//! a density on the edges obeying the heat equation, coupled to the vertices
//! through Robin exchange conditions. The solver advances the system with a
//! semi-implicit scheme that conserves the discrete total mass exactly and
//! preserves positivity below an explicit time-step bound.

pub mod asymptotics;
pub mod coupling;
pub mod graph;
pub mod lambert;
pub mod model;
pub mod scenarios;
pub mod solver;

pub use coupling::{
    coupling_matrices, validate_hypotheses, CouplingError, CouplingMatrices, CouplingRecord, CouplingSet,
    ValidationMode, ValidationReport, VertexCoupling, Violation, ViolationKind,
};
pub use graph::{build_graph, Edge, EdgeEnd, EdgeSpec, GraphError, GraphSpec, Incidence, MetricGraph};
pub use lambert::{lambert_w, lambert_w0, lambert_wm1, Branch, LambertError};
pub use model::{EdgeProfile, EpidemicParams, InitialData, MassLedger, ModelError, ReproductionNumbers};
pub use scenarios::{build_preset, evaluate_schedule, Preset, PresetError, Scenario, Schedule};
pub use solver::{
    assemble, detect_peaks, discrete_mass, discretize, dt_stability_bound, simulate, step, DiscreteSystem, Grid,
    PeakReport, SimulationOptions, SolverError, SystemState, Trajectory,
};
