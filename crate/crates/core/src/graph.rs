//! Compact metric graphs.
//!
//! Every edge is an interval `[0, length]` with an explicit orientation: the
//! `from` vertex sits at `x = 0` and the `to` vertex at `x = length`. The
//! outward normal derivative is `-d/dx` at the start and `+d/dx` at the end.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge `{edge}` references undeclared vertex `{vertex}`")]
    UnknownVertex { edge: String, vertex: String },
    #[error("edge `{edge}` has non-positive length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("edge `{edge}` has negative or non-finite diffusivity {diffusivity}")]
    InvalidDiffusivity { edge: String, diffusivity: f64 },
    #[error("edge `{edge}` is a self-loop at vertex `{vertex}`")]
    SelfLoop { edge: String, vertex: String },
    #[error("graph is not connected: vertex `{vertex}` is unreachable from `{root}`")]
    DisconnectedGraph { root: String, vertex: String },
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("graph has no vertices")]
    Empty,
}

/// Which end of an edge touches a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeEnd {
    /// `x = 0`
    Start,
    /// `x = length`
    End,
}

/// Declarative edge record, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub diffusivity: f64,
}

/// Declarative graph description; `build` turns it into a validated [`MetricGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<MetricGraph, GraphError> {
        build_graph(&self.vertices, &self.edges)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub diffusivity: f64,
}

impl Edge {
    pub fn vertex_at(&self, end: EdgeEnd) -> usize {
        match end {
            EdgeEnd::Start => self.from,
            EdgeEnd::End => self.to,
        }
    }
}

/// One edge incident to a vertex, with the side of the edge that touches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub end: EdgeEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    incidence: Vec<Vec<Incidence>>,
}

/// Builds and validates a metric graph.
///
/// Incident edges of each vertex are listed in edge declaration order; this
/// is the local labelling `e_1, ..., e_δ` used by all per-vertex matrices.
pub fn build_graph(vertex_ids: &[String], edge_specs: &[EdgeSpec]) -> Result<MetricGraph, GraphError> {
    if vertex_ids.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut index = HashMap::with_capacity(vertex_ids.len());
    for (i, id) in vertex_ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(GraphError::DuplicateVertex(id.clone()));
        }
    }

    let mut seen_edges = HashMap::with_capacity(edge_specs.len());
    let mut edges = Vec::with_capacity(edge_specs.len());
    let mut incidence = vec![Vec::new(); vertex_ids.len()];
    for (k, spec) in edge_specs.iter().enumerate() {
        if seen_edges.insert(spec.id.as_str(), k).is_some() {
            return Err(GraphError::DuplicateEdge(spec.id.clone()));
        }
        let lookup = |v: &str| {
            index.get(v).copied().ok_or_else(|| GraphError::UnknownVertex {
                edge: spec.id.clone(),
                vertex: v.to_string(),
            })
        };
        let from = lookup(&spec.from)?;
        let to = lookup(&spec.to)?;
        if from == to {
            return Err(GraphError::SelfLoop { edge: spec.id.clone(), vertex: spec.from.clone() });
        }
        if !(spec.length > 0.0 && spec.length.is_finite()) {
            return Err(GraphError::NonPositiveLength { edge: spec.id.clone(), length: spec.length });
        }
        if !(spec.diffusivity >= 0.0 && spec.diffusivity.is_finite()) {
            return Err(GraphError::InvalidDiffusivity {
                edge: spec.id.clone(),
                diffusivity: spec.diffusivity,
            });
        }
        incidence[from].push(Incidence { edge: k, end: EdgeEnd::Start });
        incidence[to].push(Incidence { edge: k, end: EdgeEnd::End });
        edges.push(Edge {
            id: spec.id.clone(),
            from,
            to,
            length: spec.length,
            diffusivity: spec.diffusivity,
        });
    }

    let graph = MetricGraph { vertices: vertex_ids.to_vec(), edges, incidence };
    if let Some(v) = graph.first_unreachable() {
        return Err(GraphError::DisconnectedGraph {
            root: graph.vertices[0].clone(),
            vertex: graph.vertices[v].clone(),
        });
    }
    Ok(graph)
}

impl MetricGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertices[v]
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Incident edges of `v` in local order.
    pub fn incident(&self, v: usize) -> &[Incidence] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    /// Local position of `edge` among the incident edges of `v`.
    pub fn local_index(&self, v: usize, edge: usize) -> Option<usize> {
        self.incidence[v].iter().position(|inc| inc.edge == edge)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    id: e.id.clone(),
                    from: self.vertices[e.from].clone(),
                    to: self.vertices[e.to].clone(),
                    length: e.length,
                    diffusivity: e.diffusivity,
                })
                .collect(),
        }
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for inc in &self.incidence[v] {
                let e = &self.edges[inc.edge];
                let w = if e.from == v { e.to } else { e.from };
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}
