//! Final epidemic sizes.
//!
//! With constant contact rates, `S_v^∞ = S_v⁰ e^{-τ_v 𝓘_v^∞}` and
//! `R_v^∞ = η_v 𝓘_v^∞`, where `𝓘_v^∞ = ∫₀^∞ I_v`. Mass conservation then
//! confines `(𝓘_v^∞)_v` to the manifold `Σ_v (S_v⁰ e^{-τ_v 𝓘_v} + η_v 𝓘_v) = M⁰`.
//! The fully symmetric case and the two-vertex case are solved with Lambert W.

use crate::coupling::CouplingSet;
use crate::graph::MetricGraph;
use crate::lambert::{lambert_w, Branch, LambertError};
use crate::model::{EpidemicParams, InitialData};
use crate::solver::Trajectory;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("parameter set is not fully symmetric: {0}")]
    AsymmetricInput(String),
    #[error("closed form needs a graph with 2 vertices and 1 edge, got {vertices} and {edges}")]
    NotTwoVertex { vertices: usize, edges: usize },
    #[error("Lambert W argument {argument} is outside the domain of {branch:?}")]
    OutOfDomain { branch: Branch, argument: f64 },
    #[error("box corner at vertex {vertex}: W argument {argument} is below -1/e")]
    DomainViolation { vertex: usize, argument: f64 },
    #[error("contact rates must be constant in time for the final-size relations")]
    TimeDependentRates,
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what}: expected {expected} entries, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
}

impl From<LambertError> for AsymptoticsError {
    fn from(e: LambertError) -> Self {
        match e {
            LambertError::OutOfDomain { branch, x } => AsymptoticsError::OutOfDomain { branch, argument: x },
        }
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64, AsymptoticsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(AsymptoticsError::NonPositive { what, value })
    }
}

fn constant_rates(params: &EpidemicParams) -> Result<(Vec<f64>, Vec<f64>), AsymptoticsError> {
    if params.tau.iter().any(|s| !matches!(s, crate::scenarios::Schedule::Constant(_))) {
        return Err(AsymptoticsError::TimeDependentRates);
    }
    let tau = (0..params.vertex_count()).map(|v| params.tau_at(v, 0.0)).collect();
    Ok((tau, params.eta.clone()))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), AsymptoticsError> {
    if expected == got {
        Ok(())
    } else {
        Err(AsymptoticsError::Shape { what, expected, got })
    }
}

/// `Σ_v (S_v⁰ e^{-τ_v 𝓘_v} + η_v 𝓘_v) - M⁰`
pub fn manifold_residual(
    params: &EpidemicParams,
    s0: &[f64],
    cumulative: &[f64],
    m0: f64,
) -> Result<f64, AsymptoticsError> {
    let (tau, eta) = constant_rates(params)?;
    check_len("s0", tau.len(), s0.len())?;
    check_len("cumulative", tau.len(), cumulative.len())?;
    Ok((0..tau.len()).map(|v| s0[v] * (-tau[v] * cumulative[v]).exp() + eta[v] * cumulative[v]).sum::<f64>() - m0)
}

/// `Σ_v (S_v - (η_v/τ_v) ln S_v + (η_v/τ_v) ln S_v⁰) - M⁰`
pub fn manifold_residual_susceptible(
    params: &EpidemicParams,
    s0: &[f64],
    s_inf: &[f64],
    m0: f64,
) -> Result<f64, AsymptoticsError> {
    let (tau, eta) = constant_rates(params)?;
    check_len("s0", tau.len(), s0.len())?;
    check_len("s_inf", tau.len(), s_inf.len())?;
    Ok((0..tau.len()).map(|v| s_inf[v] + eta[v] / tau[v] * (s0[v] / s_inf[v]).ln()).sum::<f64>() - m0)
}

/// `Σ_v (S_v⁰ e^{-τ_v R_v / η_v} + R_v) - M⁰`
pub fn manifold_residual_removed(
    params: &EpidemicParams,
    s0: &[f64],
    r_inf: &[f64],
    m0: f64,
) -> Result<f64, AsymptoticsError> {
    let (tau, eta) = constant_rates(params)?;
    check_len("s0", tau.len(), s0.len())?;
    check_len("r_inf", tau.len(), r_inf.len())?;
    Ok((0..tau.len()).map(|v| s0[v] * (-tau[v] * r_inf[v] / eta[v]).exp() + r_inf[v]).sum::<f64>() - m0)
}

/// Per-vertex balance at the end of a run:
/// `S_v⁰ e^{-τ_v 𝓘_v} + I_v + η_v 𝓘_v - (S_v⁰ + I_v⁰ + ∫ Σ_e α u_e(v) - ∫ λ̄_v I_v)`.
///
/// The exchange integrals are the trajectory's own quadratures, so this holds
/// on any graph once the run has settled.
pub fn vertex_balance_residuals(trajectory: &Trajectory, params: &EpidemicParams) -> Result<Vec<f64>, AsymptoticsError> {
    let (tau, eta) = constant_rates(params)?;
    let (init, last) = (&trajectory.initial, &trajectory.final_state);
    check_len("trajectory vertices", tau.len(), init.s.len())?;
    Ok((0..tau.len())
        .map(|v| {
            let c = trajectory.cumulative_infected[v];
            let lhs = init.s[v] * (-tau[v] * c).exp() + last.i[v] + eta[v] * c;
            lhs - (init.s[v] + init.i[v] + trajectory.edge_inflow[v] - trajectory.vertex_outflow[v])
        })
        .collect())
}

/// Common data of a fully symmetric graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSystem {
    pub tau: f64,
    pub eta: f64,
    /// Initial susceptibles at every vertex.
    pub s0: f64,
    pub m0: f64,
    pub vertices: usize,
}

impl SymmetricSystem {
    /// Checks that all vertices share degree, rates and exchange coefficients.
    pub fn from_graph(
        graph: &MetricGraph,
        couplings: &CouplingSet,
        params: &EpidemicParams,
        s0: f64,
        m0: f64,
    ) -> Result<Self, AsymptoticsError> {
        let (tau, eta) = constant_rates(params)?;
        let n = graph.vertex_count();
        if n == 0 {
            return Err(AsymptoticsError::AsymmetricInput("empty graph".into()));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0);
        let asym = |what: &str| Err(AsymptoticsError::AsymmetricInput(what.to_string()));
        if !tau.iter().all(|&t| close(t, tau[0])) {
            return asym("tau differs between vertices");
        }
        if !eta.iter().all(|&e| close(e, eta[0])) {
            return asym("eta differs between vertices");
        }
        let reference = couplings.vertex(0);
        let (a0, l0) = (reference.alpha.first().copied(), reference.lambda.first().copied());
        let nu0 = (reference.degree() > 1).then(|| reference.nu[0][1]);
        for v in 0..n {
            let c = couplings.vertex(v);
            if c.degree() != reference.degree() {
                return asym("vertex degrees differ");
            }
            let same = |x: f64, r: Option<f64>| r.is_some_and(|r| close(x, r));
            if !c.alpha.iter().all(|&a| same(a, a0)) || !c.lambda.iter().all(|&l| same(l, l0)) {
                return asym("alpha or lambda differs between edges");
            }
            for k in 0..c.degree() {
                for l in 0..c.degree() {
                    if k != l && !same(c.nu[k][l], nu0) {
                        return asym("nu differs between edge pairs");
                    }
                }
            }
        }
        Ok(Self { tau: positive("tau", tau[0])?, eta: positive("eta", eta[0])?, s0, m0, vertices: n })
    }

    /// `M⁰ / |V|`
    pub fn mass_per_vertex(&self) -> f64 {
        self.m0 / self.vertices as f64
    }

    /// `ℛ̃₀ = M⁰ τ / (|V| η)`
    pub fn basic_reproduction(&self) -> f64 {
        self.mass_per_vertex() * self.tau / self.eta
    }

    /// `ℛ_e = S⁰ τ / η`
    pub fn effective_reproduction(&self) -> f64 {
        self.s0 * self.tau / self.eta
    }
}

/// Final sizes at one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexFinalSize {
    pub cumulative: f64,
    pub susceptible: f64,
    pub removed: f64,
}

/// `𝓘^∞ = (W₀(-ℛ_e e^{-ℛ̃₀}) + ℛ̃₀) / τ`, identical at every vertex.
pub fn final_size_symmetric(system: &SymmetricSystem) -> Result<VertexFinalSize, AsymptoticsError> {
    let tau = positive("tau", system.tau)?;
    let eta = positive("eta", system.eta)?;
    positive("m0", system.m0)?;
    if !(system.s0 >= 0.0 && system.s0 <= system.mass_per_vertex() * (1.0 + SYMMETRY_TOL)) {
        return Err(AsymptoticsError::NonPositive { what: "M0/|V| - S0", value: system.mass_per_vertex() - system.s0 });
    }
    let r0 = system.basic_reproduction();
    let argument = -system.effective_reproduction() * (-r0).exp();
    let w = lambert_w(Branch::Principal, argument)?;
    let cumulative = (w + r0) / tau;
    Ok(VertexFinalSize { cumulative, susceptible: -(eta / tau) * w, removed: eta * cumulative })
}

/// Root of `S⁰ e^{-τx} + ηx - M⁰/|V|` on `[0, M⁰/(|V|η)]` by bisection.
pub fn final_size_symmetric_bisection(system: &SymmetricSystem) -> f64 {
    let m = system.mass_per_vertex();
    let f = |x: f64| system.s0 * (-system.tau * x).exp() + system.eta * x - m;
    let (mut lo, mut hi) = (0.0, m / system.eta);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two vertices joined by one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoVertexSystem {
    pub tau: [f64; 2],
    pub eta: [f64; 2],
    pub s0: [f64; 2],
    pub m0: f64,
}

/// Corner values and admissible boxes for the two-vertex final state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoVertexBoxes {
    /// `𝒜_{v_k}`
    pub a: [f64; 2],
    /// `Σ^{v_k}` for the `W₀` and `W₋₁` branches.
    pub sigma_principal: [f64; 2],
    pub sigma_lower: [f64; 2],
    pub iota_principal: [f64; 2],
    pub iota_lower: [f64; 2],
    pub rho_principal: [f64; 2],
    pub rho_lower: [f64; 2],
    /// `[min Σ, S⁰]` per vertex, further restricted by `S₁ + S₂ < M⁰`.
    pub omega_s: [[f64; 2]; 2],
    /// `[0, max ι]` per vertex.
    pub omega_i: [[f64; 2]; 2],
    /// `[0, max ρ]` per vertex.
    pub omega_r: [[f64; 2]; 2],
}

impl TwoVertexBoxes {
    pub fn contains_susceptible(&self, s: [f64; 2], m0: f64) -> bool {
        inside(self.omega_s, s) && s[0] + s[1] < m0
    }

    pub fn contains_cumulative(&self, c: [f64; 2]) -> bool {
        inside(self.omega_i, c)
    }

    pub fn contains_removed(&self, r: [f64; 2]) -> bool {
        inside(self.omega_r, r)
    }
}

fn inside(boxes: [[f64; 2]; 2], p: [f64; 2]) -> bool {
    (0..2).all(|k| boxes[k][0] <= p[k] && p[k] <= boxes[k][1])
}

impl TwoVertexSystem {
    pub fn from_graph(
        graph: &MetricGraph,
        params: &EpidemicParams,
        initial: &InitialData,
        m0: f64,
    ) -> Result<Self, AsymptoticsError> {
        let (vertices, edges) = (graph.vertex_count(), graph.edge_count());
        if vertices != 2 || edges != 1 {
            return Err(AsymptoticsError::NotTwoVertex { vertices, edges });
        }
        let (tau, eta) = constant_rates(params)?;
        let system = Self { tau: [tau[0], tau[1]], eta: [eta[0], eta[1]], s0: [initial.s[0], initial.s[1]], m0 };
        system.check()?;
        Ok(system)
    }

    fn check(&self) -> Result<(), AsymptoticsError> {
        for k in 0..2 {
            positive("tau", self.tau[k])?;
            positive("eta", self.eta[k])?;
            positive("s0", self.s0[k])?;
        }
        positive("m0", self.m0)?;
        Ok(())
    }

    /// `ℛ_{e,v_k} = S_k⁰ τ_k / η_k`
    pub fn effective_reproduction(&self, k: usize) -> f64 {
        self.s0[k] * self.tau[k] / self.eta[k]
    }

    /// `ℛ_{0,v_k} = M⁰ τ_k / η_k`
    pub fn basic_reproduction(&self, k: usize) -> f64 {
        self.m0 * self.tau[k] / self.eta[k]
    }

    /// `τ_k η_j / (τ_j η_k)` with `j ≠ k`.
    pub fn rate_ratio(&self, k: usize) -> f64 {
        let j = 1 - k;
        self.tau[k] * self.eta[j] / (self.tau[j] * self.eta[k])
    }

    /// `𝒜_{v_k} = ℛ_{e,k} ℛ_{e,j}^p exp(p (1 - ℛ_{0,j}))` with `p` the rate ratio at `k`.
    pub fn a(&self, k: usize) -> f64 {
        let j = 1 - k;
        let p = self.rate_ratio(k);
        let log = self.effective_reproduction(k).ln()
            + p * self.effective_reproduction(j).ln()
            + p * (1.0 - self.basic_reproduction(j));
        log.exp()
    }

    /// `Σ^{v_k} = -(η_k/τ_k) W(-𝒜_{v_k})`: the extreme values of `S_k^∞` on the curve.
    pub fn sigma(&self, k: usize, branch: Branch) -> Result<f64, AsymptoticsError> {
        let argument = -self.a(k);
        let w = lambert_w(branch, argument).map_err(|_| AsymptoticsError::DomainViolation { vertex: k, argument })?;
        Ok(-(self.eta[k] / self.tau[k]) * w)
    }

    /// `ι^{v_k} = (W(-𝒜_{v_k}) + p (ℛ_{0,j} - 1 - ln ℛ_{e,j})) / τ_k`.
    pub fn iota(&self, k: usize, branch: Branch) -> Result<f64, AsymptoticsError> {
        let j = 1 - k;
        let argument = -self.a(k);
        let w = lambert_w(branch, argument).map_err(|_| AsymptoticsError::DomainViolation { vertex: k, argument })?;
        let p = self.rate_ratio(k);
        let shift = p * (self.basic_reproduction(j) - 1.0 - self.effective_reproduction(j).ln());
        Ok((w + shift) / self.tau[k])
    }

    /// Range of `S_j^∞` over which the curve for `S_k^∞` is defined.
    pub fn admissible_interval(&self, k: usize) -> Result<[f64; 2], AsymptoticsError> {
        let j = 1 - k;
        let a = self.sigma(j, Branch::Principal)?;
        let b = self.sigma(j, Branch::Lower)?;
        Ok([a.min(b), a.max(b)])
    }

    /// `S_k^∞` as a function of `S_j^∞` on the requested branch:
    /// `S_k = -(η_k/τ_k) W(-ℛ_{e,k} e^{-ℛ_{0,k}} e^{τ_k S_j/η_k} (S_j⁰/S_j)^p)`.
    pub fn curve(&self, k: usize, branch: Branch, s_other: f64) -> Result<f64, AsymptoticsError> {
        let j = 1 - k;
        positive("S", s_other)?;
        let p = self.rate_ratio(k);
        let log = self.effective_reproduction(k).ln() - self.basic_reproduction(k)
            + self.tau[k] * s_other / self.eta[k]
            + p * (self.s0[j] / s_other).ln();
        let w = lambert_w(branch, -log.exp())?;
        Ok(-(self.eta[k] / self.tau[k]) * w)
    }

    /// `S_1^∞` along `s2_grid` on one branch.
    pub fn curve_values(&self, branch: Branch, s2_grid: &[f64]) -> Result<Vec<f64>, AsymptoticsError> {
        s2_grid.iter().map(|&s2| self.curve(0, branch, s2)).collect()
    }

    /// Distance from `S_1` to the nearer of the two branch values at `S_2`,
    /// relative to `S_1`. Uses the branch point value when `S_2` lies just
    /// outside the admissible interval.
    pub fn curve_membership_residual(&self, s: [f64; 2]) -> Result<f64, AsymptoticsError> {
        let [lo, hi] = self.admissible_interval(0)?;
        let s2 = s[1].clamp(lo, hi);
        let principal = self.curve(0, Branch::Principal, s2)?;
        let lower = self.curve(0, Branch::Lower, s2)?;
        let off = (s[1] - s2).abs();
        Ok(((s[0] - principal).abs().min((s[0] - lower).abs()) + off) / s[0].abs().max(f64::MIN_POSITIVE))
    }

    pub fn boxes(&self) -> Result<TwoVertexBoxes, AsymptoticsError> {
        self.check()?;
        let mut out = TwoVertexBoxes {
            a: [self.a(0), self.a(1)],
            sigma_principal: [0.0; 2],
            sigma_lower: [0.0; 2],
            iota_principal: [0.0; 2],
            iota_lower: [0.0; 2],
            rho_principal: [0.0; 2],
            rho_lower: [0.0; 2],
            omega_s: [[0.0; 2]; 2],
            omega_i: [[0.0; 2]; 2],
            omega_r: [[0.0; 2]; 2],
        };
        for k in 0..2 {
            out.sigma_principal[k] = self.sigma(k, Branch::Principal)?;
            out.sigma_lower[k] = self.sigma(k, Branch::Lower)?;
            out.iota_principal[k] = self.iota(k, Branch::Principal)?;
            out.iota_lower[k] = self.iota(k, Branch::Lower)?;
            out.rho_principal[k] = self.eta[k] * out.iota_principal[k];
            out.rho_lower[k] = self.eta[k] * out.iota_lower[k];
            let low = out.sigma_principal[k].min(out.sigma_lower[k]);
            let high = self.s0[k].min(self.m0);
            out.omega_s[k] = [low, high];
            let top = out.iota_principal[k].max(out.iota_lower[k]).max(0.0);
            out.omega_i[k] = [0.0, top];
            out.omega_r[k] = [0.0, self.eta[k] * top];
        }
        Ok(out)
    }
}

/// Final sizes read off a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSizeReport {
    pub vertex_ids: Vec<String>,
    pub cumulative: Vec<f64>,
    pub susceptible: Vec<f64>,
    pub removed: Vec<f64>,
    /// I-form manifold residual, relative to `M⁰`.
    pub manifold_residual: f64,
    pub vertex_balance: Vec<f64>,
    pub two_vertex: Option<TwoVertexBoxes>,
    /// Relative distance of `(S₁, S₂)` to the two-vertex curve.
    pub curve_residual: Option<f64>,
}

impl FinalSizeReport {
    pub fn from_trajectory(
        graph: &MetricGraph,
        params: &EpidemicParams,
        initial: &InitialData,
        trajectory: &Trajectory,
    ) -> Result<Self, AsymptoticsError> {
        let last = &trajectory.final_state;
        let m0 = trajectory.m0;
        let residual = manifold_residual(params, &trajectory.initial.s, &trajectory.cumulative_infected, m0)? / m0;
        let (two_vertex, curve_residual) = if graph.vertex_count() == 2 && graph.edge_count() == 1 {
            let system = TwoVertexSystem::from_graph(graph, params, initial, m0)?;
            let boxes = system.boxes().ok();
            let curve = system.curve_membership_residual([last.s[0], last.s[1]]).ok();
            (boxes, curve)
        } else {
            (None, None)
        };
        Ok(Self {
            vertex_ids: trajectory.vertex_ids.clone(),
            cumulative: trajectory.cumulative_infected.clone(),
            susceptible: last.s.clone(),
            removed: last.r.clone(),
            manifold_residual: residual,
            vertex_balance: vertex_balance_residuals(trajectory, params)?,
            two_vertex,
            curve_residual,
        })
    }
}
