use super::grid::Grid;
use super::linear::{BlockOperator, Csr, LinearSolver};
use super::{SolverError, SystemState};
use crate::coupling::CouplingSet;
use crate::graph::MetricGraph;
use crate::model::EpidemicParams;
use nalgebra::DMatrix;

/// Largest admissible time step.
///
/// For every vertex `v` and incident edge `k`, with
/// `q = α_k + Σ_j ν_{k→j} - Σ_l ν_{l→k}`, the step must stay below
/// `q / [λ_k Σα - (η + λ̄) q]₊`. A vanishing positive part imposes nothing,
/// so the result may be infinite. When some `q ≤ 0` has a positive bracket no
/// step is admissible and the bound is zero.
pub fn dt_stability_bound(couplings: &CouplingSet, params: &EpidemicParams) -> f64 {
    stability_bound(couplings, &params.eta)
}

pub(crate) fn stability_bound(couplings: &CouplingSet, eta: &[f64]) -> f64 {
    let mut bound = f64::INFINITY;
    for (v, c) in couplings.iter().enumerate() {
        let alpha_sum = c.alpha_sum();
        let lambda_bar = c.lambda_bar();
        for k in 0..c.degree() {
            let q = c.alpha[k] + c.nu_out(k) - c.nu_in(k);
            let bracket = c.lambda[k] * alpha_sum - (eta[v] + lambda_bar) * q;
            if bracket > 0.0 {
                bound = bound.min((q / bracket).max(0.0));
            }
        }
    }
    bound
}

/// Assembled implicit operator with its factorisation, plus the coefficient
/// state needed to advance one step.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    graph: MetricGraph,
    grid: Grid,
    dt: f64,
    base: CouplingSet,
    params: EpidemicParams,
    allow_unstable_dt: bool,
    current: CouplingSet,
    factors: Vec<f64>,
    operator: BlockOperator,
    solver: LinearSolver,
    bound: f64,
    refactorizations: usize,
    rhs: Vec<f64>,
}

/// Assembles `Id + 𝒜` for the coefficients at `t = 0`.
///
/// Fails with `UnstableDt` when `dt` is not below the stability bound, unless
/// `allow_unstable_dt` is set.
pub fn assemble(
    graph: &MetricGraph,
    grid: &Grid,
    couplings: &CouplingSet,
    params: &EpidemicParams,
    dt: f64,
    allow_unstable_dt: bool,
) -> Result<DiscreteSystem, SolverError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidTimeStep(dt));
    }
    let factors: Vec<f64> = (0..graph.vertex_count()).map(|v| params.exchange_at(v, 0.0)).collect();
    let current = params.couplings_at(couplings, 0.0);
    let (operator, solver, bound) = factorize(graph, grid, &current, &params.eta, dt, allow_unstable_dt)?;
    Ok(DiscreteSystem {
        graph: graph.clone(),
        grid: grid.clone(),
        dt,
        base: couplings.clone(),
        params: params.clone(),
        allow_unstable_dt,
        current,
        factors,
        operator,
        solver,
        bound,
        refactorizations: 0,
        rhs: vec![0.0; grid.size()],
    })
}

/// `δt λ_k / (1 + δt(η + λ̄))`, the share of the new vertex infection sent back onto edge `k`.
fn fold_back(lambda: f64, lambda_bar: f64, eta: f64, dt: f64) -> f64 {
    dt * lambda / (1.0 + dt * (eta + lambda_bar))
}

fn factorize(
    graph: &MetricGraph,
    grid: &Grid,
    couplings: &CouplingSet,
    eta: &[f64],
    dt: f64,
    allow_unstable_dt: bool,
) -> Result<(BlockOperator, LinearSolver, f64), SolverError> {
    let bound = stability_bound(couplings, eta);
    if dt >= bound && !allow_unstable_dt {
        return Err(SolverError::UnstableDt { dt, bound });
    }
    let r = graph
        .edges()
        .iter()
        .zip(grid.edges())
        .map(|(e, eg)| e.diffusivity * dt / (eg.dx * eg.dx))
        .collect();
    let gamma = (0..graph.vertex_count())
        .map(|v| {
            let c = couplings.vertex(v);
            let lambda_bar = c.lambda_bar();
            let n = c.degree();
            DMatrix::from_fn(n, n, |k, l| {
                let dx = grid.edge(graph.incident(v)[k].edge).dx;
                let fold = fold_back(c.lambda[k], lambda_bar, eta[v], dt);
                2.0 * dt / dx * (c.k_entry(k, l) - fold * c.alpha[l])
            })
        })
        .collect();
    let operator = BlockOperator { r, gamma };
    let solver = LinearSolver::new(graph, grid, &operator)?;
    Ok((operator, solver, bound))
}

fn changed(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-14 * a.abs().max(b.abs())
}

impl DiscreteSystem {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn params(&self) -> &EpidemicParams {
        &self.params
    }

    /// Couplings the operator was last assembled with.
    pub fn current_couplings(&self) -> &CouplingSet {
        &self.current
    }

    pub fn stability_bound(&self) -> f64 {
        self.bound
    }

    pub fn refactorizations(&self) -> usize {
        self.refactorizations
    }

    /// `Id + 𝒜` as a sparse matrix.
    pub fn operator(&self) -> Csr {
        self.operator.to_csr(&self.graph, &self.grid)
    }

    /// Brings exchange coefficients to time `t`, refactorising if any moved.
    fn update_coefficients(&mut self, t: f64) -> Result<(), SolverError> {
        if !self.params.exchange_is_time_dependent() {
            return Ok(());
        }
        let factors: Vec<f64> = (0..self.graph.vertex_count()).map(|v| self.params.exchange_at(v, t)).collect();
        if !factors.iter().zip(&self.factors).any(|(a, b)| changed(*a, *b)) {
            return Ok(());
        }
        let current = self.params.couplings_at(&self.base, t);
        let (operator, solver, bound) =
            factorize(&self.graph, &self.grid, &current, &self.params.eta, self.dt, self.allow_unstable_dt)?;
        self.current = current;
        self.factors = factors;
        self.operator = operator;
        self.solver = solver;
        self.bound = bound;
        self.refactorizations += 1;
        Ok(())
    }

    /// Advances `state` by one step in place.
    ///
    /// Exchange coefficients are taken at the new time level throughout the
    /// step and `τ` at the old one, which keeps the discrete mass identity exact.
    pub fn advance(&mut self, state: &mut SystemState) -> Result<(), SolverError> {
        let dt = self.dt;
        let next_step = state.step + 1;
        let t_next = next_step as f64 * dt;
        self.update_coefficients(t_next)?;

        let nv = self.graph.vertex_count();
        let mut carried = vec![0.0; nv];
        self.rhs.copy_from_slice(&state.u);
        for v in 0..nv {
            let c = self.current.vertex(v);
            let tau = self.params.tau_at(v, state.t);
            let eta = self.params.eta[v];
            let (s, i) = (state.s[v], state.i[v]);
            let damp = 1.0 + dt * (eta + c.lambda_bar());
            carried[v] = (i + dt * tau * i * (s + i)) / (damp * (1.0 + dt * tau * i));
            for k in 0..c.degree() {
                let dx = self.grid.edge(self.graph.incident(v)[k].edge).dx;
                self.rhs[self.grid.sigma(v, k)] += 2.0 * dt * c.lambda[k] / dx * carried[v];
            }
        }

        self.solver.solve(&self.rhs, &mut state.u);

        for v in 0..nv {
            let c = self.current.vertex(v);
            let tau = self.params.tau_at(v, state.t);
            let eta = self.params.eta[v];
            let damp = 1.0 + dt * (eta + c.lambda_bar());
            let inflow: f64 = (0..c.degree()).map(|l| c.alpha[l] * state.u[self.grid.sigma(v, l)]).sum();
            state.s[v] /= 1.0 + dt * tau * state.i[v];
            state.i[v] = carried[v] + dt / damp * inflow;
            state.r[v] += dt * eta * state.i[v];
        }
        state.step = next_step;
        state.t = t_next;

        let finite = state.u.iter().chain(&state.s).chain(&state.i).chain(&state.r).all(|x| x.is_finite());
        if !finite {
            return Err(SolverError::NonFiniteState { step: next_step, t: t_next });
        }
        Ok(())
    }
}

/// One step of the scheme.
pub fn step(system: &mut DiscreteSystem, state: &SystemState) -> Result<SystemState, SolverError> {
    let mut next = state.clone();
    system.advance(&mut next)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::VertexCoupling;
    use crate::graph::{build_graph, EdgeSpec};
    use crate::solver::{discrete_mass, discretize_uniform};

    fn segment(d: f64) -> MetricGraph {
        build_graph(
            &["v1".to_string(), "v2".to_string()],
            &[EdgeSpec { id: "e".into(), from: "v1".into(), to: "v2".into(), length: 1.0, diffusivity: d }],
        )
        .unwrap()
    }

    fn single_vertex_set(alpha: f64, lambda: f64) -> CouplingSet {
        let g = build_graph(&["a".to_string(), "b".to_string()], &[EdgeSpec {
            id: "e".into(),
            from: "a".into(),
            to: "b".into(),
            length: 1.0,
            diffusivity: 1.0,
        }])
        .unwrap();
        CouplingSet::new(&g, vec![VertexCoupling::uniform(1, alpha, lambda, 0.0); 2]).unwrap()
    }

    #[test]
    fn bound_is_infinite_for_small_lambda() {
        let c = single_vertex_set(0.25, 0.6);
        // 0.6·0.25 - (0.4 + 0.6)·0.25 < 0
        assert_eq!(stability_bound(&c, &[0.4, 0.4]), f64::INFINITY);
    }

    fn branched() -> (MetricGraph, CouplingSet) {
        let g = build_graph(
            &["a".to_string(), "b".to_string(), "c".to_string()],
            &[
                EdgeSpec { id: "x".into(), from: "a".into(), to: "b".into(), length: 1.0, diffusivity: 1.0 },
                EdgeSpec { id: "y".into(), from: "b".into(), to: "c".into(), length: 1.0, diffusivity: 1.0 },
            ],
        )
        .unwrap();
        let leaf = VertexCoupling::uniform(1, 0.1, 0.01, 0.0);
        let centre = VertexCoupling::new(vec![0.1, 0.4], vec![0.9, 0.05], vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let set = CouplingSet::new(&g, vec![leaf.clone(), centre, leaf]).unwrap();
        (g, set)
    }

    #[test]
    fn bound_matches_hand_quotient() {
        let (_, set) = branched();
        // k = 0 at the centre: q = 0.1, bracket = 0.9·0.5 - (0.001 + 0.95)·0.1
        let expected = 0.1 / (0.9 * 0.5 - (0.001 + 0.95) * 0.1);
        let got = stability_bound(&set, &[0.001; 3]);
        assert!((got - expected).abs() < 1e-15 * expected, "{got} vs {expected}");
    }

    #[test]
    fn row_dominance_for_two_vertex_defaults() {
        let g = segment(1.0);
        let grid = discretize_uniform(&g, 0.01).unwrap();
        let mut set = CouplingSet::uniform(&g, 0.25, 0.1, 0.0);
        set.vertex_mut(0).lambda[0] = 0.5;
        let params = EpidemicParams::uniform(2, 1.0, 1.0 / 3.0);
        let sys = assemble(&g, &grid, &set, &params, 0.01, false).unwrap();
        let a = sys.operator();
        for i in 0..a.n {
            let (mut diag, mut off) = (0.0, 0.0);
            for (j, x) in a.row(i) {
                if i == j {
                    diag = x;
                } else {
                    assert!(x <= 0.0);
                    off += x.abs();
                }
            }
            assert!(diag > off, "row {i}: {diag} vs {off}");
        }
    }

    #[test]
    fn interior_rows_sum_to_one() {
        let g = segment(0.7);
        let grid = discretize_uniform(&g, 0.1).unwrap();
        let set = CouplingSet::uniform(&g, 0.25, 0.1, 0.0);
        let sys = assemble(&g, &grid, &set, &EpidemicParams::uniform(2, 1.0, 0.3), 0.05, false).unwrap();
        let a = sys.operator();
        for i in 1..grid.size() - 1 {
            let s: f64 = a.row(i).map(|(_, x)| x).sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn structured_solve_matches_dense() {
        let g = build_graph(
            &["a".to_string(), "b".to_string(), "c".to_string()],
            &[
                EdgeSpec { id: "x".into(), from: "a".into(), to: "b".into(), length: 1.0, diffusivity: 0.3 },
                EdgeSpec { id: "y".into(), from: "b".into(), to: "c".into(), length: 0.5, diffusivity: 2.0 },
                EdgeSpec { id: "z".into(), from: "c".into(), to: "a".into(), length: 0.3, diffusivity: 1.0 },
                EdgeSpec { id: "w".into(), from: "b".into(), to: "a".into(), length: 0.2, diffusivity: 0.0 },
            ],
        )
        .unwrap();
        let grid = discretize_uniform(&g, 0.1).unwrap();
        let mut set = CouplingSet::uniform(&g, 0.1, 0.05, 0.02);
        set.vertex_mut(1).nu[0][2] = 0.07;
        let sys = assemble(&g, &grid, &set, &EpidemicParams::uniform(3, 1.0, 0.2), 0.02, false).unwrap();
        let rhs: Vec<f64> = (0..grid.size()).map(|i| ((i * 37) % 11) as f64 / 7.0).collect();
        let mut x = vec![0.0; grid.size()];
        sys.solver.solve(&rhs, &mut x);
        let dense = sys.operator().to_dense();
        let oracle = dense.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
        for i in 0..grid.size() {
            assert!((x[i] - oracle[i]).abs() < 1e-12, "{i}: {} vs {}", x[i], oracle[i]);
        }
    }

    #[test]
    fn isolated_vertex_is_plain_sir() {
        let g = build_graph(&["only".to_string()], &[]).unwrap();
        let grid = discretize_uniform(&g, 0.01).unwrap();
        let set = CouplingSet::uniform(&g, 0.1, 0.1, 0.0);
        let mut sys = assemble(&g, &grid, &set, &EpidemicParams::uniform(1, 1.0, 1.0 / 3.0), 0.01, false).unwrap();
        let s0 = 0.999_999;
        let state = SystemState::new(vec![], vec![s0], vec![1e-6], vec![0.0]);
        let next = step(&mut sys, &state).unwrap();
        assert_eq!(next.s[0], s0 / (1.0 + 0.01 * 1e-6));
    }

    #[test]
    fn zero_diffusion_keeps_interior() {
        let g = segment(0.0);
        let grid = discretize_uniform(&g, 0.1).unwrap();
        let set = CouplingSet::uniform(&g, 0.25, 0.1, 0.0);
        let mut sys = assemble(&g, &grid, &set, &EpidemicParams::uniform(2, 1.0, 0.3), 0.01, false).unwrap();
        let u: Vec<f64> = (0..grid.size()).map(|i| 0.1 * i as f64).collect();
        let state = SystemState::new(u.clone(), vec![0.5, 0.5], vec![0.01, 0.0], vec![0.0, 0.0]);
        let next = step(&mut sys, &state).unwrap();
        assert_eq!(&next.u[1..grid.size() - 1], &u[1..grid.size() - 1]);
        let (m0, m1) = (discrete_mass(&grid, &state), discrete_mass(&grid, &next));
        assert!((m1 - m0).abs() < 1e-15);
    }

    #[test]
    fn fold_back_is_self_consistent() {
        // The eliminated row must agree with the original boundary equation
        // written with the updated vertex infection.
        let g = segment(1.0);
        let grid = discretize_uniform(&g, 0.05).unwrap();
        let set = CouplingSet::uniform(&g, 0.25, 0.2, 0.0);
        let mut sys = assemble(&g, &grid, &set, &EpidemicParams::uniform(2, 1.0, 0.3), 0.01, false).unwrap();
        let u: Vec<f64> = (0..grid.size()).map(|i| 1e-3 * (i as f64).sin().abs()).collect();
        let state = SystemState::new(u, vec![0.6, 0.3], vec![0.05, 0.01], vec![0.0, 0.0]);
        let next = step(&mut sys, &state).unwrap();
        let dt = 0.01;
        for v in 0..2 {
            let (s, n) = (grid.sigma(v, 0), grid.neighbor(v, 0));
            let dx = grid.edge(0).dx;
            let r = dt / (dx * dx);
            let lhs = next.u[s] + 2.0 * r * (next.u[s] - next.u[n])
                + 2.0 * dt / dx * (0.25 * next.u[s] - 0.2 * next.i[v]);
            assert!((lhs - state.u[s]).abs() <= 1e-12 * state.u[s].abs().max(1e-3), "vertex {v}");
        }
    }

    #[test]
    fn unstable_dt_is_refused() {
        let (g, set) = branched();
        let grid = discretize_uniform(&g, 0.1).unwrap();
        let params = EpidemicParams::uniform(3, 1.0, 0.001);
        let bound = dt_stability_bound(&set, &params);
        assert!(matches!(
            assemble(&g, &grid, &set, &params, bound, false),
            Err(SolverError::UnstableDt { .. })
        ));
        assert!(assemble(&g, &grid, &set, &params, 0.99 * bound, false).is_ok());
        assert!(assemble(&g, &grid, &set, &params, 2.0 * bound, true).is_ok());
    }
}
