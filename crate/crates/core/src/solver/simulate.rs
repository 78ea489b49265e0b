use super::peaks::PeakReport;
use super::system::assemble;
use super::{discrete_mass, Grid, SolverError, SystemState};
use crate::coupling::CouplingSet;
use crate::graph::MetricGraph;
use crate::model::{EpidemicParams, InitialData};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Store the edge field every this many steps; 0 stores none.
    pub record_every: usize,
    /// Store vertex scalars every this many steps. The first and last steps are always kept.
    pub scalar_every: usize,
    pub stop_at_steady_state: bool,
    /// Stop once `Σ I + trap(U)` falls below this fraction of `M⁰`.
    pub steady_tolerance: f64,
    pub allow_unstable_dt: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 100.0,
            record_every: 0,
            scalar_every: 1,
            stop_at_steady_state: false,
            steady_tolerance: 1e-10,
            allow_unstable_dt: false,
        }
    }
}

/// Vertex scalars at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub edge_mass: f64,
    pub total_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vertex_ids: Vec<String>,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub initial: SystemState,
    pub final_state: SystemState,
    pub m0: f64,
    /// `max_m |M^m - M⁰|`
    pub max_mass_drift: f64,
    /// `max_m |M^{m+1} - M^m|`
    pub max_step_mass_change: f64,
    /// Smallest entry of any state, over every step.
    pub min_entry: f64,
    /// `∫ I_v dt`, accumulated with the scheme's own quadrature.
    pub cumulative_infected: Vec<f64>,
    /// `∫ Σ_e α_e u_e(v) dt` per vertex.
    pub edge_inflow: Vec<f64>,
    /// `∫ λ̄_v I_v dt` per vertex.
    pub vertex_outflow: Vec<f64>,
    /// Peaks over every step, not just the recorded samples.
    pub peaks: PeakReport,
    pub steps: usize,
    pub steady_state_reached: bool,
    pub refactorizations: usize,
    pub stability_bound: f64,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.final_state.t
    }
}

fn sample(grid: &Grid, state: &SystemState) -> Sample {
    let edge_mass = grid.trap(&state.u);
    Sample {
        t: state.t,
        s: state.s.clone(),
        i: state.i.clone(),
        r: state.r.clone(),
        edge_mass,
        total_mass: edge_mass + state.vertex_mass(),
    }
}

/// Runs the scheme from the initial data up to `t_end`, or earlier when the
/// steady-state stop is enabled and reached.
pub fn simulate(
    graph: &MetricGraph,
    couplings: &CouplingSet,
    params: &EpidemicParams,
    initial: &InitialData,
    grid: &Grid,
    options: &SimulationOptions,
) -> Result<Trajectory, SolverError> {
    if !(options.t_end > 0.0 && options.t_end.is_finite()) {
        return Err(SolverError::InvalidHorizon(options.t_end));
    }
    params.validate(graph)?;
    initial.validate(graph)?;
    let u0 = initial.edge_samples(graph, grid, couplings)?;
    let nv = graph.vertex_count();
    let mut state = SystemState::new(u0, initial.s.clone(), initial.i.clone(), vec![0.0; nv]);
    let m0 = discrete_mass(grid, &state);

    let mut system = assemble(graph, grid, couplings, params, options.dt, options.allow_unstable_dt)?;
    let total_steps = ((options.t_end / options.dt) - 1e-9).ceil().max(1.0) as usize;
    let scalar_every = options.scalar_every.max(1);

    let initial_state = state.clone();
    let mut samples = vec![sample(grid, &state)];
    let mut snapshots = Vec::new();
    if options.record_every > 0 {
        snapshots.push(Snapshot { t: 0.0, u: state.u.clone() });
    }
    let mut peaks = PeakReport::start(0.0, &state.i);
    let mut cumulative_infected = vec![0.0; nv];
    let mut edge_inflow = vec![0.0; nv];
    let mut vertex_outflow = vec![0.0; nv];
    let mut max_mass_drift = 0.0f64;
    let mut max_step_mass_change = 0.0f64;
    let mut min_entry = state.min_entry();
    let mut previous_mass = m0;
    let mut steady = false;
    let dt = options.dt;

    for m in 1..=total_steps {
        system.advance(&mut state)?;
        let current = system.current_couplings();
        for v in 0..nv {
            let c = current.vertex(v);
            let inflow: f64 = (0..c.degree()).map(|l| c.alpha[l] * state.u[grid.sigma(v, l)]).sum();
            cumulative_infected[v] += dt * state.i[v];
            edge_inflow[v] += dt * inflow;
            vertex_outflow[v] += dt * c.lambda_bar() * state.i[v];
        }
        let edge_mass = grid.trap(&state.u);
        let mass = edge_mass + state.vertex_mass();
        max_mass_drift = max_mass_drift.max((mass - m0).abs());
        max_step_mass_change = max_step_mass_change.max((mass - previous_mass).abs());
        previous_mass = mass;
        min_entry = min_entry.min(state.min_entry());
        peaks.observe(state.t, &state.i);

        steady = options.stop_at_steady_state
            && state.i.iter().sum::<f64>() + edge_mass < options.steady_tolerance * m0;
        let last = m == total_steps || steady;
        if m % scalar_every == 0 || last {
            samples.push(sample(grid, &state));
        }
        if options.record_every > 0 && (m % options.record_every == 0 || last) {
            snapshots.push(Snapshot { t: state.t, u: state.u.clone() });
        }
        if steady {
            break;
        }
    }

    Ok(Trajectory {
        vertex_ids: graph.vertex_ids().to_vec(),
        samples,
        snapshots,
        initial: initial_state,
        steps: state.step,
        final_state: state,
        m0,
        max_mass_drift,
        max_step_mass_change,
        min_entry,
        cumulative_infected,
        edge_inflow,
        vertex_outflow,
        peaks,
        steady_state_reached: steady,
        refactorizations: system.refactorizations(),
        stability_bound: system.stability_bound(),
    })
}
