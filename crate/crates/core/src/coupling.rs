//! Per-vertex exchange coefficients and the matrices built from them.
//!
//! At a vertex with incident edges `e_1..e_δ`:
//! `A = diag(α)`, `N_ii = Σ_{j≠i} ν_{e_i→e_j}`, `N_ij = -ν_{e_j→e_i}`,
//! `K = A + N`, `Λ = (λ_e)`, `D = diag(d_e)` and `λ̄ = Σ λ_e`.
//! `ν_{e→e'}` is the rate at which the density on `e` crosses onto `e'`.

use crate::graph::MetricGraph;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("coupling references unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("coupling references unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("edge `{edge}` is not incident to vertex `{vertex}`")]
    NotIncident { vertex: String, edge: String },
    #[error("no coupling given for edge `{edge}` at vertex `{vertex}`")]
    Missing { vertex: String, edge: String },
    #[error("duplicate coupling for edge `{edge}` at vertex `{vertex}`")]
    Duplicate { vertex: String, edge: String },
    #[error("vertex `{vertex}`: expected {expected} incident coefficients, got {got}")]
    Shape { vertex: String, expected: usize, got: usize },
}

/// Exchange coefficients at one vertex, indexed by local incident-edge position.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCoupling {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `nu[i][j]` is `ν_{e_i→e_j}`; the diagonal is ignored.
    pub nu: Vec<Vec<f64>>,
}

impl VertexCoupling {
    pub fn new(alpha: Vec<f64>, lambda: Vec<f64>, nu: Vec<Vec<f64>>) -> Self {
        Self { alpha, lambda, nu }
    }

    /// Same α, λ on every incident edge and the same ν between every ordered pair.
    pub fn uniform(degree: usize, alpha: f64, lambda: f64, nu: f64) -> Self {
        let nu = (0..degree)
            .map(|i| (0..degree).map(|j| if i == j { 0.0 } else { nu }).collect())
            .collect();
        Self { alpha: vec![alpha; degree], lambda: vec![lambda; degree], nu }
    }

    pub fn degree(&self) -> usize {
        self.alpha.len()
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// `Σ_{j≠k} ν_{e_k→e_j}`
    pub fn nu_out(&self, k: usize) -> f64 {
        (0..self.degree()).filter(|&j| j != k).map(|j| self.nu[k][j]).sum()
    }

    /// `Σ_{j≠k} ν_{e_j→e_k}`
    pub fn nu_in(&self, k: usize) -> f64 {
        (0..self.degree()).filter(|&j| j != k).map(|j| self.nu[j][k]).sum()
    }

    /// Entry `(k, l)` of `K_v = A_v + N_v`.
    pub fn k_entry(&self, k: usize, l: usize) -> f64 {
        if k == l {
            self.alpha[k] + self.nu_out(k)
        } else {
            -self.nu[l][k]
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.degree();
        (0..n).all(|i| (0..n).all(|j| i == j || (self.nu[i][j] - self.nu[j][i]).abs() <= tol))
    }

    /// Multiplies every α, λ and ν by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha.iter().map(|a| a * factor).collect(),
            lambda: self.lambda.iter().map(|l| l * factor).collect(),
            nu: self.nu.iter().map(|row| row.iter().map(|x| x * factor).collect()).collect(),
        }
    }
}

/// Dense per-vertex matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub a: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub d: DMatrix<f64>,
    pub lambda_bar: f64,
}

/// Builds `(A_v, N_v, K_v, Λ_v, D_v, λ̄_v)` for one vertex.
pub fn coupling_matrices(coupling: &VertexCoupling, diffusivities: &[f64]) -> CouplingMatrices {
    let n = coupling.degree();
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(&coupling.alpha));
    let nmat = DMatrix::from_fn(n, n, |i, j| if i == j { coupling.nu_out(i) } else { -coupling.nu[j][i] });
    let k = &a + &nmat;
    CouplingMatrices {
        a,
        n: nmat,
        k,
        lambda: DVector::from_column_slice(&coupling.lambda),
        d: DMatrix::from_diagonal(&DVector::from_column_slice(diffusivities)),
        lambda_bar: coupling.lambda_bar(),
    }
}

/// Declarative coupling record keyed by (vertex, edge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub alpha: f64,
    pub lambda: f64,
    /// Transfer rates from this edge onto the other edges at the same vertex.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nu: BTreeMap<String, f64>,
}

/// Couplings for every vertex of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    vertices: Vec<VertexCoupling>,
}

impl CouplingSet {
    pub fn new(graph: &MetricGraph, vertices: Vec<VertexCoupling>) -> Result<Self, CouplingError> {
        if vertices.len() != graph.vertex_count() {
            return Err(CouplingError::Shape {
                vertex: "<all>".into(),
                expected: graph.vertex_count(),
                got: vertices.len(),
            });
        }
        for (v, c) in vertices.iter().enumerate() {
            let expected = graph.degree(v);
            let bad = c.alpha.len() != expected
                || c.lambda.len() != expected
                || c.nu.len() != expected
                || c.nu.iter().any(|row| row.len() != expected);
            if bad {
                return Err(CouplingError::Shape {
                    vertex: graph.vertex_id(v).to_string(),
                    expected,
                    got: c.alpha.len(),
                });
            }
        }
        Ok(Self { vertices })
    }

    pub fn uniform(graph: &MetricGraph, alpha: f64, lambda: f64, nu: f64) -> Self {
        Self {
            vertices: (0..graph.vertex_count())
                .map(|v| VertexCoupling::uniform(graph.degree(v), alpha, lambda, nu))
                .collect(),
        }
    }

    /// Builds couplings from records keyed by vertex id, then edge id.
    pub fn from_records(
        graph: &MetricGraph,
        records: &BTreeMap<String, BTreeMap<String, CouplingRecord>>,
    ) -> Result<Self, CouplingError> {
        for (vid, per_edge) in records {
            let v = graph.vertex_index(vid).ok_or_else(|| CouplingError::UnknownVertex(vid.clone()))?;
            for (eid, rec) in per_edge {
                let e = graph.edge_index(eid).ok_or_else(|| CouplingError::UnknownEdge(eid.clone()))?;
                if graph.local_index(v, e).is_none() {
                    return Err(CouplingError::NotIncident { vertex: vid.clone(), edge: eid.clone() });
                }
                for target in rec.nu.keys() {
                    let t = graph
                        .edge_index(target)
                        .ok_or_else(|| CouplingError::UnknownEdge(target.clone()))?;
                    if graph.local_index(v, t).is_none() {
                        return Err(CouplingError::NotIncident { vertex: vid.clone(), edge: target.clone() });
                    }
                }
            }
        }
        let mut vertices = Vec::with_capacity(graph.vertex_count());
        for v in 0..graph.vertex_count() {
            let vid = graph.vertex_id(v);
            let incident = graph.incident(v);
            let per_edge = records.get(vid);
            let mut c = VertexCoupling::uniform(incident.len(), 0.0, 0.0, 0.0);
            for (k, inc) in incident.iter().enumerate() {
                let eid = &graph.edge(inc.edge).id;
                let rec = per_edge.and_then(|m| m.get(eid)).ok_or_else(|| CouplingError::Missing {
                    vertex: vid.to_string(),
                    edge: eid.clone(),
                })?;
                c.alpha[k] = rec.alpha;
                c.lambda[k] = rec.lambda;
                for (target, rate) in &rec.nu {
                    // Parallel edges share endpoints, so resolve through the local list.
                    let t = graph.edge_index(target).expect("checked above");
                    let j = graph.local_index(v, t).expect("checked above");
                    if j != k {
                        c.nu[k][j] = *rate;
                    }
                }
            }
            vertices.push(c);
        }
        Ok(Self { vertices })
    }

    pub fn to_records(&self, graph: &MetricGraph) -> BTreeMap<String, BTreeMap<String, CouplingRecord>> {
        let mut out = BTreeMap::new();
        for (v, c) in self.vertices.iter().enumerate() {
            let incident = graph.incident(v);
            let mut per_edge = BTreeMap::new();
            for (k, inc) in incident.iter().enumerate() {
                let nu = incident
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k && c.nu[k][j] != 0.0)
                    .map(|(j, other)| (graph.edge(other.edge).id.clone(), c.nu[k][j]))
                    .collect();
                per_edge.insert(
                    graph.edge(inc.edge).id.clone(),
                    CouplingRecord { alpha: c.alpha[k], lambda: c.lambda[k], nu },
                );
            }
            out.insert(graph.vertex_id(v).to_string(), per_edge);
        }
        out
    }

    pub fn vertex(&self, v: usize) -> &VertexCoupling {
        &self.vertices[v]
    }

    pub fn vertex_mut(&mut self, v: usize) -> &mut VertexCoupling {
        &mut self.vertices[v]
    }

    pub fn iter(&self) -> impl Iterator<Item = &VertexCoupling> {
        self.vertices.iter()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn matrices(&self, graph: &MetricGraph, v: usize) -> CouplingMatrices {
        let d: Vec<f64> = graph.incident(v).iter().map(|inc| graph.edge(inc.edge).diffusivity).collect();
        coupling_matrices(&self.vertices[v], &d)
    }

    pub fn all_symmetric(&self, tol: f64) -> bool {
        self.vertices.iter().all(|c| c.is_symmetric(tol))
    }
}

/// Strict follows the open intervals literally; relaxed admits zero α and λ
/// (closed at 0) and downgrades the diagonal-dominance condition to a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    #[default]
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    AlphaRange,
    LambdaRange,
    LambdaSumRange,
    AlphaSumRange,
    NuRange,
    /// inflow of ν onto an edge must stay below α plus its ν outflow
    DiagonalDominance,
    KDiagonalRange,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub vertex: String,
    pub edge: Option<String>,
    pub kind: ViolationKind,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.edge {
            Some(e) => write!(f, "{:?} at vertex `{}`, edge `{}` (value {})", self.kind, self.vertex, e, self.value),
            None => write!(f, "{:?} at vertex `{}` (value {})", self.kind, self.vertex, self.value),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the coefficient hypotheses at every vertex. Violations are
/// collected, never raised.
pub fn validate_hypotheses(graph: &MetricGraph, couplings: &CouplingSet, mode: ValidationMode) -> ValidationReport {
    let mut report = ValidationReport::default();
    let strict = mode == ValidationMode::Strict;
    let unit = |x: f64| if strict { x > 0.0 && x < 1.0 } else { (0.0..1.0).contains(&x) };

    for (v, c) in couplings.iter().enumerate() {
        let vid = graph.vertex_id(v).to_string();
        let incident = graph.incident(v);
        let push = |list: &mut Vec<Violation>, edge: Option<usize>, kind, value| {
            list.push(Violation {
                vertex: vid.clone(),
                edge: edge.map(|k: usize| graph.edge(incident[k].edge).id.clone()),
                kind,
                value,
            })
        };
        let delta = c.degree();
        if delta == 0 {
            continue;
        }
        let all_values = c.alpha.iter().chain(&c.lambda).chain(c.nu.iter().flatten());
        if all_values.clone().any(|x| !x.is_finite()) {
            push(&mut report.violations, None, ViolationKind::NonFinite, f64::NAN);
            continue;
        }
        for k in 0..delta {
            if !unit(c.alpha[k]) {
                push(&mut report.violations, Some(k), ViolationKind::AlphaRange, c.alpha[k]);
            }
            if !unit(c.lambda[k]) {
                push(&mut report.violations, Some(k), ViolationKind::LambdaRange, c.lambda[k]);
            }
            for j in (0..delta).filter(|&j| j != k) {
                if !(0.0..1.0).contains(&c.nu[k][j]) {
                    push(&mut report.violations, Some(k), ViolationKind::NuRange, c.nu[k][j]);
                }
            }
        }
        let lambda_bar = c.lambda_bar();
        if !unit(lambda_bar) {
            push(&mut report.violations, None, ViolationKind::LambdaSumRange, lambda_bar);
        }
        let alpha_sum = c.alpha_sum();
        if !unit(alpha_sum) {
            push(&mut report.violations, None, ViolationKind::AlphaSumRange, alpha_sum);
        }
        for k in 0..delta {
            let inflow = c.nu_in(k);
            let outflow = c.alpha[k] + c.nu_out(k);
            if inflow >= outflow {
                let list = if strict { &mut report.violations } else { &mut report.warnings };
                push(list, Some(k), ViolationKind::DiagonalDominance, inflow - outflow);
            }
            if !unit(outflow) {
                push(&mut report.violations, Some(k), ViolationKind::KDiagonalRange, outflow);
            }
        }
    }
    report
}
