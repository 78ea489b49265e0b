//! Direct solver for `(Id + 𝒜) U = b`.
//!
//! Interior samples of an edge only see their two neighbours, so each edge
//! interior is a constant tridiagonal block `T = tridiag(-r, 1 + 2r, -r)`.
//! Eliminating those blocks leaves a small dense system on the `2|E|` vertex
//! samples, factorised once with LU.

use super::grid::Grid;
use super::SolverError;
use crate::graph::{EdgeEnd, MetricGraph};
use nalgebra::{DMatrix, DVector, LU};

/// Row description of `Id + 𝒜`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    /// `d_e δt / δx_e²` per edge.
    pub r: Vec<f64>,
    /// Exchange block per vertex: `gamma[v][(k, l)]` is added to the row of
    /// `sigma(v, k)` in the column of `sigma(v, l)`.
    pub gamma: Vec<DMatrix<f64>>,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, a)| a * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                m[(i, j)] += a;
            }
        }
        m
    }
}

fn boundary_slot(edge: usize, end: EdgeEnd) -> usize {
    2 * edge + usize::from(end == EdgeEnd::End)
}

impl BlockOperator {
    pub fn to_csr(&self, graph: &MetricGraph, grid: &Grid) -> Csr {
        let n = grid.size();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (e, eg) in grid.edges().iter().enumerate() {
            let r = self.r[e];
            for i in 1..eg.points - 1 {
                let g = eg.offset + i;
                rows[g] = vec![(g - 1, -r), (g, 1.0 + 2.0 * r), (g + 1, -r)];
            }
        }
        for v in 0..graph.vertex_count() {
            for k in 0..graph.degree(v) {
                let (s, nb) = (grid.sigma(v, k), grid.neighbor(v, k));
                let r = self.r[graph.incident(v)[k].edge];
                let row = &mut rows[s];
                row.push((s, 1.0 + 2.0 * r));
                row.push((nb, -2.0 * r));
                for l in 0..graph.degree(v) {
                    row.push((grid.sigma(v, l), self.gamma[v][(k, l)]));
                }
            }
        }
        let mut csr = Csr { n, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() };
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, a) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += a,
                    _ => merged.push((j, a)),
                }
            }
            for (j, a) in merged {
                csr.cols.push(j);
                csr.vals.push(a);
            }
            csr.row_ptr.push(csr.cols.len());
        }
        csr
    }
}

/// Thomas factorisation of `tridiag(-r, 1 + 2r, -r)` plus the two columns of its inverse
/// that couple the interior to the edge ends.
#[derive(Debug, Clone)]
struct EdgeBlock {
    r: f64,
    /// Super-diagonal after forward elimination.
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
    /// `T⁻¹ e_1`
    first: Vec<f64>,
    /// `T⁻¹ e_n`
    last: Vec<f64>,
}

impl EdgeBlock {
    fn new(r: f64, n: usize) -> Self {
        let diag = 1.0 + 2.0 * r;
        let mut upper = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = diag + r * prev;
            inv_pivot[i] = 1.0 / pivot;
            upper[i] = -r / pivot;
            prev = upper[i];
        }
        let mut block = Self { r, upper, inv_pivot, first: vec![0.0; n], last: vec![0.0; n] };
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        block.solve_in_place(&mut e1);
        let mut en = vec![0.0; n];
        en[n - 1] = 1.0;
        block.solve_in_place(&mut en);
        block.first = e1;
        block.last = en;
        block
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let mut prev = 0.0;
        for i in 0..n {
            x[i] = (x[i] + self.r * prev) * self.inv_pivot[i];
            prev = x[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolver {
    blocks: Vec<EdgeBlock>,
    offsets: Vec<(usize, usize)>,
    schur: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl LinearSolver {
    pub fn new(graph: &MetricGraph, grid: &Grid, op: &BlockOperator) -> Result<Self, SolverError> {
        let nb = 2 * graph.edge_count();
        let mut s = DMatrix::<f64>::zeros(nb, nb);
        let mut blocks = Vec::with_capacity(graph.edge_count());
        let mut offsets = Vec::with_capacity(graph.edge_count());
        for (e, eg) in grid.edges().iter().enumerate() {
            let r = op.r[e];
            let block = EdgeBlock::new(r, eg.points - 2);
            let n = eg.points - 2;
            let (b0, bl) = (2 * e, 2 * e + 1);
            let rr = 2.0 * r * r;
            s[(b0, b0)] += 1.0 + 2.0 * r - rr * block.first[0];
            s[(b0, bl)] -= rr * block.last[0];
            s[(bl, b0)] -= rr * block.first[n - 1];
            s[(bl, bl)] += 1.0 + 2.0 * r - rr * block.last[n - 1];
            blocks.push(block);
            offsets.push((eg.offset, eg.points));
        }
        for v in 0..graph.vertex_count() {
            let incident = graph.incident(v);
            for (k, a) in incident.iter().enumerate() {
                for (l, b) in incident.iter().enumerate() {
                    s[(boundary_slot(a.edge, a.end), boundary_slot(b.edge, b.end))] += op.gamma[v][(k, l)];
                }
            }
        }
        let schur = if nb == 0 {
            None
        } else {
            if s.iter().any(|x| !x.is_finite()) {
                return Err(SolverError::SingularSystem);
            }
            let lu = s.lu();
            if !lu.is_invertible() {
                return Err(SolverError::SingularSystem);
            }
            Some(lu)
        };
        Ok(Self { blocks, offsets, schur })
    }

    /// Solves `(Id + 𝒜) x = rhs`.
    pub fn solve(&self, rhs: &[f64], x: &mut [f64]) {
        let Some(lu) = &self.schur else {
            return;
        };
        let mut boundary = DVector::<f64>::zeros(2 * self.blocks.len());
        for (e, (block, &(offset, points))) in self.blocks.iter().zip(&self.offsets).enumerate() {
            let last = offset + points - 1;
            let interior = &mut x[offset + 1..last];
            interior.copy_from_slice(&rhs[offset + 1..last]);
            block.solve_in_place(interior);
            boundary[2 * e] = rhs[offset] + 2.0 * block.r * interior[0];
            boundary[2 * e + 1] = rhs[last] + 2.0 * block.r * interior[points - 3];
        }
        lu.solve_mut(&mut boundary);
        for (e, (block, &(offset, points))) in self.blocks.iter().zip(&self.offsets).enumerate() {
            let last = offset + points - 1;
            let (u0, ul) = (boundary[2 * e], boundary[2 * e + 1]);
            x[offset] = u0;
            x[last] = ul;
            let (c0, cl) = (block.r * u0, block.r * ul);
            for (i, xi) in x[offset + 1..last].iter_mut().enumerate() {
                *xi += c0 * block.first[i] + cl * block.last[i];
            }
        }
    }
}
