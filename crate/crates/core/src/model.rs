//! Epidemic parameters, initial data and the quantities derived from them.

use crate::coupling::CouplingSet;
use crate::graph::{EdgeEnd, MetricGraph};
use crate::scenarios::{evaluate_schedule, Schedule};
use crate::solver::{discrete_mass, Grid, SystemState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("{what} at vertex `{vertex}` must be positive and finite, got {value}")]
    NonPositiveParameter { what: &'static str, vertex: String, value: f64 },
    #[error("invalid schedule at vertex `{vertex}`: {reason}")]
    InvalidSchedule { vertex: String, reason: String },
    #[error("initial {what} at vertex `{vertex}` is invalid: {value}")]
    InvalidInitial { what: &'static str, vertex: String, value: f64 },
    #[error("edge `{edge}`: {reason}")]
    InvalidProfile { edge: String, reason: String },
    #[error("edge `{edge}`: expected {expected} samples, got {got}")]
    SampleCount { edge: String, expected: usize, got: usize },
    #[error("total initial mass must be positive, got {0}")]
    NonPositiveMass(f64),
}

/// Contact and removal rates per vertex, with optional time dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicParams {
    pub tau: Vec<Schedule>,
    pub eta: Vec<f64>,
    /// Multiplier applied to every α, λ and ν at the vertex.
    pub exchange: Vec<Schedule>,
}

impl EpidemicParams {
    pub fn new(tau: Vec<f64>, eta: Vec<f64>) -> Self {
        let n = tau.len();
        Self {
            tau: tau.into_iter().map(Schedule::Constant).collect(),
            eta,
            exchange: vec![Schedule::Constant(1.0); n],
        }
    }

    pub fn uniform(vertices: usize, tau: f64, eta: f64) -> Self {
        Self::new(vec![tau; vertices], vec![eta; vertices])
    }

    pub fn vertex_count(&self) -> usize {
        self.eta.len()
    }

    pub fn tau_at(&self, v: usize, t: f64) -> f64 {
        evaluate_schedule(&self.tau[v], t)
    }

    pub fn exchange_at(&self, v: usize, t: f64) -> f64 {
        evaluate_schedule(&self.exchange[v], t)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.tau.iter().chain(&self.exchange).any(|s| !matches!(s, Schedule::Constant(_)))
    }

    pub fn exchange_is_time_dependent(&self) -> bool {
        self.exchange.iter().any(|s| !matches!(s, Schedule::Constant(_)))
    }

    /// Couplings with exchange multipliers at time `t` applied.
    pub fn couplings_at(&self, base: &CouplingSet, t: f64) -> CouplingSet {
        let mut out = base.clone();
        for v in 0..out.len() {
            let f = self.exchange_at(v, t);
            if f != 1.0 {
                *out.vertex_mut(v) = base.vertex(v).scaled(f);
            }
        }
        out
    }

    pub fn validate(&self, graph: &MetricGraph) -> Result<(), ModelError> {
        let n = graph.vertex_count();
        for (what, len) in [("tau", self.tau.len()), ("eta", self.eta.len()), ("exchange", self.exchange.len())] {
            if len != n {
                return Err(ModelError::Shape { what, expected: n, got: len });
            }
        }
        for v in 0..n {
            let vertex = graph.vertex_id(v).to_string();
            let eta = self.eta[v];
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(ModelError::NonPositiveParameter { what: "eta", vertex, value: eta });
            }
            let tau0 = evaluate_schedule(&self.tau[v], 0.0);
            if !(tau0 > 0.0 && tau0.is_finite()) {
                return Err(ModelError::NonPositiveParameter { what: "tau", vertex, value: tau0 });
            }
            if let Err(reason) = self.tau[v].validate() {
                return Err(ModelError::InvalidSchedule { vertex, reason });
            }
            if let Err(reason) = self.exchange[v].validate() {
                return Err(ModelError::InvalidSchedule { vertex, reason });
            }
            if let Schedule::LockdownSigmoid { base, target, .. } = self.tau[v] {
                if !(target > 0.0 && target < base) {
                    return Err(ModelError::InvalidSchedule {
                        vertex,
                        reason: format!("lockdown rate {target} must lie in (0, {base})"),
                    });
                }
            }
            if evaluate_schedule(&self.exchange[v], 0.0) > 1.0 {
                return Err(ModelError::InvalidSchedule {
                    vertex,
                    reason: "exchange multiplier may not exceed 1".into(),
                });
            }
        }
        Ok(())
    }
}

/// Initial infected density on one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "profile", content = "values")]
pub enum EdgeProfile {
    Zero,
    /// `u(x) = (λ I / α) exp(-α' x² / (2 d ℓ))`, with `λ`, `α` and `I` taken
    /// at the `x = 0` vertex and `α'` at the `x = ℓ` vertex. It satisfies the
    /// exchange condition at both ends of an edge between two leaves when the
    /// far vertex carries no infection.
    BoundaryLayer,
    /// Raw values on the edge grid, ordered from `x = 0`.
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub edges: Vec<EdgeProfile>,
}

impl InitialData {
    pub fn new(s: Vec<f64>, i: Vec<f64>, edges: Vec<EdgeProfile>) -> Self {
        Self { s, i, edges }
    }

    /// Checks shapes and signs. Returns warnings for admissible but unusual data.
    pub fn validate(&self, graph: &MetricGraph) -> Result<Vec<String>, ModelError> {
        let n = graph.vertex_count();
        if self.s.len() != n {
            return Err(ModelError::Shape { what: "initial S", expected: n, got: self.s.len() });
        }
        if self.i.len() != n {
            return Err(ModelError::Shape { what: "initial I", expected: n, got: self.i.len() });
        }
        if self.edges.len() != graph.edge_count() {
            return Err(ModelError::Shape {
                what: "edge profiles",
                expected: graph.edge_count(),
                got: self.edges.len(),
            });
        }
        for v in 0..n {
            let vertex = graph.vertex_id(v).to_string();
            if !(self.s[v] > 0.0 && self.s[v].is_finite()) {
                return Err(ModelError::InvalidInitial { what: "S", vertex, value: self.s[v] });
            }
            if !(self.i[v] >= 0.0 && self.i[v].is_finite()) {
                return Err(ModelError::InvalidInitial { what: "I", vertex, value: self.i[v] });
            }
        }
        let mut any_edge_infection = false;
        for (e, profile) in self.edges.iter().enumerate() {
            match profile {
                EdgeProfile::Samples(values) => {
                    if let Some(bad) = values.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                        return Err(ModelError::InvalidProfile {
                            edge: graph.edge(e).id.clone(),
                            reason: format!("sample {bad} is negative or not finite"),
                        });
                    }
                    any_edge_infection |= values.iter().any(|&x| x > 0.0);
                }
                EdgeProfile::BoundaryLayer => {
                    let edge = graph.edge(e);
                    if edge.diffusivity <= 0.0 {
                        return Err(ModelError::InvalidProfile {
                            edge: edge.id.clone(),
                            reason: "boundary layer needs positive diffusivity".into(),
                        });
                    }
                    any_edge_infection |= self.i[edge.from] > 0.0;
                }
                EdgeProfile::Zero => {}
            }
        }
        let mut warnings = Vec::new();
        if self.i.iter().all(|&x| x == 0.0) && !any_edge_infection {
            warnings.push("no initial infection: the state is an equilibrium".to_string());
        }
        Ok(warnings)
    }

    /// Edge samples on the grid, in global index order.
    pub fn edge_samples(&self, graph: &MetricGraph, grid: &Grid, couplings: &CouplingSet) -> Result<Vec<f64>, ModelError> {
        let mut u = vec![0.0; grid.size()];
        for (e, profile) in self.edges.iter().enumerate() {
            let eg = grid.edge(e);
            let slot = &mut u[eg.offset..eg.offset + eg.points];
            match profile {
                EdgeProfile::Zero => {}
                EdgeProfile::Samples(values) => {
                    if values.len() != eg.points {
                        return Err(ModelError::SampleCount {
                            edge: graph.edge(e).id.clone(),
                            expected: eg.points,
                            got: values.len(),
                        });
                    }
                    slot.copy_from_slice(values);
                }
                EdgeProfile::BoundaryLayer => {
                    let (amplitude, rate) = self.boundary_layer_shape(graph, couplings, e)?;
                    for (i, x) in slot.iter_mut().enumerate() {
                        let xi = i as f64 * eg.dx;
                        *x = amplitude * (-rate * xi * xi).exp();
                    }
                }
            }
        }
        Ok(u)
    }

    /// `(amplitude, rate)` with `u(x) = amplitude · exp(-rate · x²)`.
    pub fn boundary_layer_shape(
        &self,
        graph: &MetricGraph,
        couplings: &CouplingSet,
        e: usize,
    ) -> Result<(f64, f64), ModelError> {
        let edge = graph.edge(e);
        let k0 = graph.local_index(edge.from, e).expect("edge is incident to its endpoints");
        let k1 = graph.local_index(edge.to, e).expect("edge is incident to its endpoints");
        let alpha0 = couplings.vertex(edge.from).alpha[k0];
        let lambda0 = couplings.vertex(edge.from).lambda[k0];
        let alpha1 = couplings.vertex(edge.to).alpha[k1];
        if !(alpha0 > 0.0) || edge.diffusivity <= 0.0 {
            return Err(ModelError::InvalidProfile {
                edge: edge.id.clone(),
                reason: "boundary layer needs positive α at x = 0 and positive diffusivity".into(),
            });
        }
        let amplitude = lambda0 * self.i[edge.from] / alpha0;
        let rate = alpha1 / (2.0 * edge.diffusivity * edge.length);
        Ok((amplitude, rate))
    }
}

/// `∫_0^ℓ a·exp(-r x²) dx` by composite Simpson.
pub fn gaussian_integral(amplitude: f64, rate: f64, length: f64) -> f64 {
    const PANELS: usize = 4096;
    let h = length / PANELS as f64;
    let f = |x: f64| (-rate * x * x).exp();
    let mut sum = f(0.0) + f(length);
    for k in 1..PANELS {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    amplitude * sum * h / 3.0
}

/// Total mass `trap(U⁰) + Σ_v (S_v⁰ + I_v⁰)`, with the solver's quadrature.
pub fn initial_mass(
    graph: &MetricGraph,
    grid: &Grid,
    couplings: &CouplingSet,
    initial: &InitialData,
) -> Result<f64, ModelError> {
    let u = initial.edge_samples(graph, grid, couplings)?;
    let zeros = vec![0.0; initial.s.len()];
    let m0 = discrete_mass(grid, &SystemState::new(u, initial.s.clone(), initial.i.clone(), zeros));
    if !(m0 > 0.0) {
        return Err(ModelError::NonPositiveMass(m0));
    }
    Ok(m0)
}

/// Max-norm per vertex of `d ∂_n u + K u - Λ I` at `t = 0`.
///
/// The normal derivative uses the second-order one-sided difference.
pub fn check_bc_compatibility(
    graph: &MetricGraph,
    couplings: &CouplingSet,
    grid: &Grid,
    initial: &InitialData,
) -> Result<Vec<f64>, ModelError> {
    let u = initial.edge_samples(graph, grid, couplings)?;
    let mut out = vec![0.0; graph.vertex_count()];
    for (v, slot) in out.iter_mut().enumerate() {
        let c = couplings.vertex(v);
        let incident = graph.incident(v);
        let at_vertex: Vec<f64> = (0..incident.len()).map(|k| u[grid.sigma(v, k)]).collect();
        for (k, inc) in incident.iter().enumerate() {
            let edge = graph.edge(inc.edge);
            let eg = grid.edge(inc.edge);
            let (u0, u1, u2) = match inc.end {
                EdgeEnd::Start => (u[eg.offset], u[eg.offset + 1], u[eg.offset + 2]),
                EdgeEnd::End => {
                    let last = eg.offset + eg.points - 1;
                    (u[last], u[last - 1], u[last - 2])
                }
            };
            // Outward derivative: -u'(0) at the start, u'(ℓ) at the end.
            let dn = (3.0 * u0 - 4.0 * u1 + u2) / (2.0 * eg.dx);
            let ku: f64 = (0..incident.len()).map(|l| c.k_entry(k, l) * at_vertex[l]).sum();
            let r = edge.diffusivity * dn + ku - c.lambda[k] * initial.i[v];
            *slot = f64::max(*slot, r.abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproductionNumbers {
    /// `M⁰ τ / η`
    pub basic: f64,
    /// `S⁰ τ / η`
    pub effective: f64,
}

pub fn reproduction_numbers(params: &EpidemicParams, initial: &InitialData, m0: f64) -> Vec<ReproductionNumbers> {
    (0..params.vertex_count())
        .map(|v| {
            let ratio = params.tau_at(v, 0.0) / params.eta[v];
            ReproductionNumbers { basic: m0 * ratio, effective: initial.s[v] * ratio }
        })
        .collect()
}

/// Split of the total mass into its edge and vertex parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub m0: f64,
    pub edge_mass: f64,
    pub vertex_mass: f64,
}

impl MassLedger {
    pub fn total(&self) -> f64 {
        self.edge_mass + self.vertex_mass
    }

    pub fn drift(&self) -> f64 {
        (self.total() - self.m0).abs()
    }
}
