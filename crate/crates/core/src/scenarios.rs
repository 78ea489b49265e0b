//! Ready-made graphs, initial data and lockdown schedules.
//!
//! Each preset exposes a small set of named knobs that callers may override;
//! unknown knobs are rejected rather than ignored.

use crate::coupling::{CouplingSet, ValidationMode, VertexCoupling};
use crate::graph::{build_graph, EdgeSpec, GraphError, MetricGraph};
use crate::model::{gaussian_integral, EdgeProfile, EpidemicParams, InitialData};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Time profile of a coefficient.
///
/// Serialized as a bare number for constants, or as a table whose fields
/// pick the lockdown form (`target` present for the sigmoid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    /// `base` up to and including `t_lock`, then
    /// `(base·e^{-μ(t-t_lock)} + target) / (1 + e^{-μ(t-t_lock)})`.
    /// The right limit at `t_lock` is `(base + target) / 2`, so the profile jumps there.
    LockdownSigmoid { base: f64, target: f64, t_lock: f64, mu: f64 },
    /// `base` up to `t_lock`, then `base·e^{-μ(t-t_lock)}`.
    LockdownDecay { base: f64, t_lock: f64, mu: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |x: f64| x.is_finite();
        match *self {
            Schedule::Constant(x) if !finite(x) => Err(format!("value {x} is not finite")),
            Schedule::Constant(_) => Ok(()),
            Schedule::LockdownSigmoid { base, target, t_lock, mu } => {
                if ![base, target, t_lock, mu].into_iter().all(finite) {
                    Err("lockdown parameters must be finite".into())
                } else if !(mu > 0.0) || t_lock < 0.0 {
                    Err(format!("need mu > 0 and t_lock >= 0, got mu = {mu}, t_lock = {t_lock}"))
                } else {
                    Ok(())
                }
            }
            Schedule::LockdownDecay { base, t_lock, mu } => {
                if ![base, t_lock, mu].into_iter().all(finite) {
                    Err("lockdown parameters must be finite".into())
                } else if !(mu > 0.0) || t_lock < 0.0 {
                    Err(format!("need mu > 0 and t_lock >= 0, got mu = {mu}, t_lock = {t_lock}"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

pub fn evaluate_schedule(schedule: &Schedule, t: f64) -> f64 {
    match *schedule {
        Schedule::Constant(x) => x,
        Schedule::LockdownSigmoid { base, t_lock, .. } | Schedule::LockdownDecay { base, t_lock, .. }
            if t <= t_lock =>
        {
            base
        }
        Schedule::LockdownSigmoid { base, target, t_lock, mu } => {
            let w = (-mu * (t - t_lock)).exp();
            (base * w + target) / (1.0 + w)
        }
        Schedule::LockdownDecay { base, t_lock, mu } => base * (-mu * (t - t_lock)).exp(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{preset}` has no parameter `{key}`")]
    UnknownOverride { preset: String, key: String },
    #[error("preset `{preset}`: parameter `{key}` {reason}")]
    InvalidOverride { preset: String, key: String, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    TwoVertex,
    Triangle,
    TriangleDirected,
    Star4,
    Lattice(usize),
}

impl Preset {
    /// Accepts `two_vertex`, `triangle`, `triangle_directed`, `star4`,
    /// `lattice` (24 edges) and `lattice(N)`.
    pub fn parse(name: &str) -> Result<Self, PresetError> {
        let unknown = || PresetError::UnknownPreset(name.to_string());
        Ok(match name.trim() {
            "two_vertex" => Preset::TwoVertex,
            "triangle" => Preset::Triangle,
            "triangle_directed" => Preset::TriangleDirected,
            "star4" => Preset::Star4,
            "lattice" => Preset::Lattice(24),
            other => {
                let n = other
                    .strip_prefix("lattice(")
                    .and_then(|s| s.strip_suffix(')'))
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .ok_or_else(unknown)?;
                if n == 0 {
                    return Err(unknown());
                }
                Preset::Lattice(n)
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Preset::TwoVertex => "two_vertex".into(),
            Preset::Triangle => "triangle".into(),
            Preset::TriangleDirected => "triangle_directed".into(),
            Preset::Star4 => "star4".into(),
            Preset::Lattice(n) => format!("lattice({n})"),
        }
    }
}

/// Override value; text is only used for lattice seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideValue {
    Number(f64),
    Text(String),
}

impl From<f64> for OverrideValue {
    fn from(x: f64) -> Self {
        OverrideValue::Number(x)
    }
}

impl From<&str> for OverrideValue {
    fn from(s: &str) -> Self {
        OverrideValue::Text(s.to_string())
    }
}

pub type Overrides = BTreeMap<String, OverrideValue>;

/// Everything needed to run a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub graph: MetricGraph,
    pub couplings: CouplingSet,
    pub params: EpidemicParams,
    pub initial: InitialData,
    pub validation: ValidationMode,
    /// Set when the preset is known to violate the time-step bound for every step.
    pub needs_unstable_dt: bool,
}

struct Knobs<'a> {
    preset: String,
    values: BTreeMap<&'static str, f64>,
    text: BTreeMap<&'static str, String>,
    overrides: &'a Overrides,
}

impl<'a> Knobs<'a> {
    fn new(preset: &Preset, overrides: &'a Overrides, defaults: &[(&'static str, f64)], text: &[(&'static str, &str)]) -> Result<Self, PresetError> {
        let mut knobs = Knobs {
            preset: preset.name(),
            values: defaults.iter().copied().collect(),
            text: text.iter().map(|&(k, v)| (k, v.to_string())).collect(),
            overrides,
        };
        for (key, value) in overrides {
            let err = |reason: &str| PresetError::InvalidOverride {
                preset: knobs.preset.clone(),
                key: key.clone(),
                reason: reason.to_string(),
            };
            if let Some(slot) = knobs.values.iter_mut().find(|(k, _)| **k == key.as_str()) {
                match value {
                    OverrideValue::Number(x) if x.is_finite() => *slot.1 = *x,
                    _ => return Err(err("must be a finite number")),
                }
            } else if let Some(slot) = knobs.text.iter_mut().find(|(k, _)| **k == key.as_str()) {
                match value {
                    OverrideValue::Text(s) => *slot.1 = s.clone(),
                    _ => return Err(err("must be text")),
                }
            } else if !defaults.iter().any(|(k, _)| *k == key) {
                return Err(PresetError::UnknownOverride { preset: knobs.preset.clone(), key: key.clone() });
            }
        }
        Ok(knobs)
    }

    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn has(&self, key: &str) -> bool {
        self.overrides.contains_key(key)
    }

    fn text(&self, key: &str) -> &str {
        &self.text[key]
    }

    /// Value of `specific` if overridden, else `general`.
    fn either(&self, specific: &str, general: &str) -> f64 {
        if self.has(specific) {
            self.get(specific)
        } else {
            self.get(general)
        }
    }
}

fn ids(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn edge(id: &str, from: &str, to: &str, length: f64, diffusivity: f64) -> EdgeSpec {
    EdgeSpec { id: id.into(), from: from.into(), to: to.into(), length, diffusivity }
}

/// Builds a preset by name with optional overrides.
pub fn build_preset(name: &str, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let preset = Preset::parse(name)?;
    match preset {
        Preset::TwoVertex => two_vertex(&preset, overrides),
        Preset::Triangle => triangle(&preset, overrides),
        Preset::TriangleDirected => triangle_directed(&preset, overrides),
        Preset::Star4 => star4(&preset, overrides),
        Preset::Lattice(n) => lattice(&preset, n, overrides),
    }
}

/// Two leaves joined by one edge.
///
/// By default the edge starts with the boundary-layer profile anchored at
/// `v1`, `(S₁, I₁, S₂, I₂) = (s0 - i0 - ∫u⁰, i0, 1 - s0, 0)` so that the
/// total mass is 1. Setting `boundary_layer = 0` starts from an empty edge,
/// and `s1`, `s2`, `i1`, `i2` override the vertex data directly.
fn two_vertex(preset: &Preset, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let k = Knobs::new(
        preset,
        overrides,
        &[
            ("d", 1.0),
            ("length", 1.0),
            ("alpha", 0.25),
            ("alpha1", 0.25),
            ("alpha2", 0.25),
            ("lambda", 0.1),
            ("lambda1", 0.1),
            ("lambda2", 0.1),
            ("tau", 1.0),
            ("tau1", 1.0),
            ("tau2", 1.0),
            ("eta", 1.0 / 3.0),
            ("eta1", 1.0 / 3.0),
            ("eta2", 1.0 / 3.0),
            ("s0", 0.5),
            ("i0", 1e-6),
            ("boundary_layer", 1.0),
            ("s1", f64::NAN),
            ("s2", f64::NAN),
            ("i1", f64::NAN),
            ("i2", f64::NAN),
        ],
        &[],
    )?;
    let (d, length) = (k.get("d"), k.get("length"));
    let graph = build_graph(&ids(&["v1", "v2"]), &[edge("e", "v1", "v2", length, d)])?;
    let c1 = VertexCoupling::uniform(1, k.either("alpha1", "alpha"), k.either("lambda1", "lambda"), 0.0);
    let c2 = VertexCoupling::uniform(1, k.either("alpha2", "alpha"), k.either("lambda2", "lambda"), 0.0);
    let couplings = CouplingSet::new(&graph, vec![c1.clone(), c2.clone()]).expect("shapes match");
    let params = EpidemicParams::new(
        vec![k.either("tau1", "tau"), k.either("tau2", "tau")],
        vec![k.either("eta1", "eta"), k.either("eta2", "eta")],
    );
    let (s0, i0) = (k.get("s0"), k.get("i0"));
    let layer = k.get("boundary_layer") != 0.0;
    let (profile, edge_mass) = if layer {
        let amplitude = c1.lambda[0] * i0 / c1.alpha[0];
        let rate = c2.alpha[0] / (2.0 * d * length);
        (EdgeProfile::BoundaryLayer, gaussian_integral(amplitude, rate, length))
    } else {
        (EdgeProfile::Zero, 0.0)
    };
    let pick = |key: &str, fallback: f64| if k.has(key) { k.get(key) } else { fallback };
    let initial = InitialData::new(
        vec![pick("s1", s0 - i0 - edge_mass), pick("s2", 1.0 - s0)],
        vec![pick("i1", i0), pick("i2", 0.0)],
        vec![profile],
    );
    Ok(Scenario {
        name: preset.name(),
        graph,
        couplings,
        params,
        initial,
        validation: ValidationMode::Strict,
        needs_unstable_dt: false,
    })
}

/// Knobs reproducing the asymmetric two-vertex set with an empty initial edge.
pub fn two_vertex_asymmetric_overrides() -> Overrides {
    let pairs: [(&str, f64); 13] = [
        ("d", 1e-3),
        ("alpha", 0.125),
        ("lambda", 0.6),
        ("tau1", 1.0),
        ("tau2", 0.9),
        ("eta1", 0.4),
        ("eta2", 1.0 / 3.0),
        ("boundary_layer", 0.0),
        ("s1", 0.75 - 1e-6),
        ("s2", 0.25 - 1e-6),
        ("i1", 1e-6),
        ("i2", 1e-6),
        ("length", 1.0),
    ];
    pairs.iter().map(|&(k, v)| (k.to_string(), OverrideValue::Number(v))).collect()
}

fn triangle_graph(d: [f64; 3], length: f64) -> Result<MetricGraph, GraphError> {
    build_graph(
        &ids(&["v1", "v2", "v3"]),
        &[
            edge("A", "v1", "v2", length, d[0]),
            edge("B", "v2", "v3", length, d[1]),
            edge("C", "v3", "v1", length, d[2]),
        ],
    )
}

/// Fully symmetric triangle seeded at `v1`.
fn triangle(preset: &Preset, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let k = Knobs::new(
        preset,
        overrides,
        &[
            ("d", 1.0),
            ("length", 1.0),
            ("tau", 1.0),
            ("eta", 1.0 / 6.0),
            ("alpha", 0.125),
            ("lambda", 0.1),
            ("nu", 0.05),
            ("s0", 1.0),
            ("i0", 1e-6),
        ],
        &[],
    )?;
    let d = k.get("d");
    let graph = triangle_graph([d; 3], k.get("length"))?;
    let couplings = CouplingSet::uniform(&graph, k.get("alpha"), k.get("lambda"), k.get("nu"));
    let params = EpidemicParams::uniform(3, k.get("tau"), k.get("eta"));
    let (s0, i0) = (k.get("s0"), k.get("i0"));
    let initial = InitialData::new(vec![s0 - i0, s0, s0], vec![i0, 0.0, 0.0], vec![EdgeProfile::Zero; 3]);
    Ok(Scenario {
        name: preset.name(),
        graph,
        couplings,
        params,
        initial,
        validation: ValidationMode::Strict,
        needs_unstable_dt: false,
    })
}

/// Triangle where each vertex receives on one edge and emits on the other,
/// with very different diffusivities on the three edges.
fn triangle_directed(preset: &Preset, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let k = Knobs::new(
        preset,
        overrides,
        &[
            ("d_a", 1.0),
            ("d_b", 1e-2),
            ("d_c", 1e-3),
            ("length", 1.0),
            ("tau", 1.0),
            ("eta", 1.0 / 7.0),
            ("alpha", 0.1),
            ("lambda", 0.05),
            ("nu", 1.0 / 30.0),
            ("s0", 1.0 / 3.0),
            ("i0", 1e-6),
        ],
        &[],
    )?;
    let graph = triangle_graph([k.get("d_a"), k.get("d_b"), k.get("d_c")], k.get("length"))?;
    let (a, l, n) = (k.get("alpha"), k.get("lambda"), k.get("nu"));
    // Local order: v1 = (A, C), v2 = (A, B), v3 = (B, C).
    let v1 = VertexCoupling::new(vec![0.0, a], vec![l, 0.0], vec![vec![0.0, 0.0], vec![n, 0.0]]);
    let v2 = VertexCoupling::new(vec![a, 0.0], vec![0.0, l], vec![vec![0.0, n], vec![0.0, 0.0]]);
    let v3 = VertexCoupling::new(vec![a, 0.0], vec![0.0, l], vec![vec![0.0, n], vec![0.0, 0.0]]);
    let couplings = CouplingSet::new(&graph, vec![v1, v2, v3]).expect("shapes match");
    let params = EpidemicParams::uniform(3, k.get("tau"), k.get("eta"));
    let s0 = k.get("s0");
    let initial = InitialData::new(vec![s0; 3], vec![k.get("i0"), 0.0, 0.0], vec![EdgeProfile::Zero; 3]);
    Ok(Scenario {
        name: preset.name(),
        graph,
        couplings,
        params,
        initial,
        validation: ValidationMode::Relaxed,
        needs_unstable_dt: true,
    })
}

/// Star with centre `v2` and leaves `v1`, `v3`, `v4`, under a lockdown at `t_lock`.
///
/// The contact rate relaxes to `tau_lock` at every vertex and all exchanges
/// at the vertices listed by `lockdown_vertices` decay to zero. Setting
/// `lockdown = 0` disables both.
fn star4(preset: &Preset, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let k = Knobs::new(
        preset,
        overrides,
        &[
            ("d", 0.1),
            ("length", 1.0),
            ("tau", 1.0),
            ("eta", 0.125),
            ("alpha", 0.125),
            ("lambda", 0.05),
            ("nu", 0.05),
            ("t_lock", 50.0),
            ("mu_lock", 100.0),
            ("tau_lock", 0.6),
            ("lockdown", 1.0),
            ("s0", 0.25),
            ("i0", 1e-6),
            ("epsilon", 1e-2),
        ],
        &[("lockdown_vertices", "v2")],
    )?;
    let (d, length) = (k.get("d"), k.get("length"));
    let graph = build_graph(
        &ids(&["v1", "v2", "v3", "v4"]),
        &[
            edge("e1", "v1", "v2", length, d),
            edge("e3", "v3", "v2", length, d),
            edge("e4", "v4", "v2", length, d),
        ],
    )?;
    let couplings = CouplingSet::uniform(&graph, k.get("alpha"), k.get("lambda"), k.get("nu"));
    let mut params = EpidemicParams::uniform(4, k.get("tau"), k.get("eta"));
    if k.get("lockdown") != 0.0 {
        let (t_lock, mu) = (k.get("t_lock"), k.get("mu_lock"));
        let tau = k.get("tau");
        params.tau = vec![Schedule::LockdownSigmoid { base: tau, target: k.get("tau_lock"), t_lock, mu }; 4];
        for name in k.text("lockdown_vertices").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let v = graph.vertex_index(name).ok_or_else(|| PresetError::InvalidOverride {
                preset: preset.name(),
                key: "lockdown_vertices".into(),
                reason: format!("names unknown vertex `{name}`"),
            })?;
            params.exchange[v] = Schedule::LockdownDecay { base: 1.0, t_lock, mu };
        }
    }
    let (s0, i0, eps) = (k.get("s0"), k.get("i0"), k.get("epsilon"));
    let initial = InitialData::new(
        vec![s0 - i0, s0, s0 - eps, s0 + eps],
        vec![i0, 0.0, 0.0, 0.0],
        vec![EdgeProfile::Zero; 3],
    );
    Ok(Scenario {
        name: preset.name(),
        graph,
        couplings,
        params,
        initial,
        validation: ValidationMode::Strict,
        needs_unstable_dt: false,
    })
}

/// Path `v1 - v2 - ... - v{N+1}`; `seed` is `left`, `middle` or `ends`.
///
/// `middle` seeds the vertex at zero-based index `N/2`, which is the centre
/// of the path when `N` is even.
fn lattice(preset: &Preset, n: usize, overrides: &Overrides) -> Result<Scenario, PresetError> {
    let k = Knobs::new(
        preset,
        overrides,
        &[
            ("d", 1e-3),
            ("length", 1.0),
            ("tau", 1.0),
            ("eta", 1.0 / 75.0),
            ("alpha", 0.125),
            ("lambda", 0.1),
            ("nu", 0.05),
            ("s0", 1.0 / 25.0),
            ("i0", 1e-6),
        ],
        &[("seed", "left")],
    )?;
    let names: Vec<String> = (1..=n + 1).map(|j| format!("v{j}")).collect();
    let edges: Vec<EdgeSpec> = (1..=n)
        .map(|j| edge(&format!("e{j}"), &names[j - 1], &names[j], k.get("length"), k.get("d")))
        .collect();
    let graph = build_graph(&names, &edges)?;
    let couplings = CouplingSet::uniform(&graph, k.get("alpha"), k.get("lambda"), k.get("nu"));
    let params = EpidemicParams::uniform(n + 1, k.get("tau"), k.get("eta"));
    let seeded: Vec<usize> = match k.text("seed") {
        "left" => vec![0],
        "middle" => vec![n / 2],
        "ends" => vec![0, n],
        other => {
            return Err(PresetError::InvalidOverride {
                preset: preset.name(),
                key: "seed".into(),
                reason: format!("must be left, middle or ends, got `{other}`"),
            })
        }
    };
    let (s0, i0) = (k.get("s0"), k.get("i0"));
    let mut s = vec![s0; n + 1];
    let mut i = vec![0.0; n + 1];
    for &v in &seeded {
        s[v] = s0 - i0;
        i[v] = i0;
    }
    let initial = InitialData::new(s, i, vec![EdgeProfile::Zero; n]);
    Ok(Scenario {
        name: preset.name(),
        graph,
        couplings,
        params,
        initial,
        validation: ValidationMode::Strict,
        needs_unstable_dt: false,
    })
}
