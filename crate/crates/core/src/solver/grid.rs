use super::SolverError;
use crate::graph::{EdgeEnd, MetricGraph};

/// Uniform grid on one edge, stored at `offset..offset + points` in the global vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGrid {
    pub offset: usize,
    pub points: usize,
    pub dx: f64,
}

impl EdgeGrid {
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn last(&self) -> usize {
        self.offset + self.points - 1
    }
}

/// Global sample layout. The sample of edge `e` at a vertex is owned by that
/// edge: incident edges do not share a value at their common vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<EdgeGrid>,
    size: usize,
    sigma: Vec<Vec<usize>>,
    neighbor: Vec<Vec<usize>>,
}

/// Builds the grid with a requested spacing per edge. The point count is
/// `round(ℓ/δx) + 1` and the spacing is then adjusted to fit the edge exactly.
pub fn discretize(graph: &MetricGraph, dx: &[f64]) -> Result<Grid, SolverError> {
    if dx.len() != graph.edge_count() {
        return Err(SolverError::Shape(format!(
            "expected {} grid spacings, got {}",
            graph.edge_count(),
            dx.len()
        )));
    }
    let mut edges = Vec::with_capacity(dx.len());
    let mut offset = 0;
    for (edge, &h) in graph.edges().iter().zip(dx) {
        if !(h > 0.0 && h.is_finite()) {
            return Err(SolverError::InvalidResolution { edge: edge.id.clone(), dx: h });
        }
        let points = (edge.length / h).round() as usize + 1;
        if points < 3 {
            return Err(SolverError::ResolutionTooCoarse { edge: edge.id.clone(), points });
        }
        edges.push(EdgeGrid { offset, points, dx: edge.length / (points - 1) as f64 });
        offset += points;
    }
    let mut sigma = Vec::with_capacity(graph.vertex_count());
    let mut neighbor = Vec::with_capacity(graph.vertex_count());
    for v in 0..graph.vertex_count() {
        let (s, n): (Vec<usize>, Vec<usize>) = graph
            .incident(v)
            .iter()
            .map(|inc| {
                let eg = &edges[inc.edge];
                match inc.end {
                    EdgeEnd::Start => (eg.offset, eg.offset + 1),
                    EdgeEnd::End => (eg.last(), eg.last() - 1),
                }
            })
            .unzip();
        sigma.push(s);
        neighbor.push(n);
    }
    Ok(Grid { edges, size: offset, sigma, neighbor })
}

pub fn discretize_uniform(graph: &MetricGraph, dx: f64) -> Result<Grid, SolverError> {
    discretize(graph, &vec![dx; graph.edge_count()])
}

impl Grid {
    /// Total number of samples.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn edge(&self, e: usize) -> &EdgeGrid {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[EdgeGrid] {
        &self.edges
    }

    /// Global index of the sample of the `k`-th incident edge at `v`.
    pub fn sigma(&self, v: usize, k: usize) -> usize {
        self.sigma[v][k]
    }

    /// Global index of the nearest interior neighbour of `sigma(v, k)`.
    pub fn neighbor(&self, v: usize, k: usize) -> usize {
        self.neighbor[v][k]
    }

    /// Trapezoidal rule over every edge.
    pub fn trap(&self, u: &[f64]) -> f64 {
        self.edges.iter().map(|eg| Self::edge_trap(eg, u)).sum()
    }

    fn edge_trap(eg: &EdgeGrid, u: &[f64]) -> f64 {
        let slice = &u[eg.offset..eg.offset + eg.points];
        let interior: f64 = slice[1..eg.points - 1].iter().sum();
        eg.dx * (interior + 0.5 * (slice[0] + slice[eg.points - 1]))
    }

    /// `∫ u_e` for one edge.
    pub fn edge_integral(&self, e: usize, u: &[f64]) -> f64 {
        Self::edge_trap(&self.edges[e], u)
    }
}
