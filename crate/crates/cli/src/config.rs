//! TOML run configuration.
//!
//! A configuration names either a preset (plus overrides) or spells out the
//! whole model: graph, couplings, rates and initial data. Scheme, output and
//! sweep sections are shared by both forms.

use crate::error::CliError;
use metric_sir::scenarios::{build_preset, Overrides, Scenario};
use metric_sir::{
    CouplingRecord, CouplingSet, EdgeProfile, EpidemicParams, GraphSpec, InitialData, Schedule, SimulationOptions,
    ValidationMode,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "default_step")]
    pub dt: f64,
    #[serde(default = "default_step")]
    pub dx: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub record_every: usize,
    #[serde(default = "default_scalar_every")]
    pub scalar_every: usize,
    #[serde(default)]
    pub stop_at_steady_state: bool,
    #[serde(default = "default_steady_tolerance")]
    pub steady_tolerance: f64,
    #[serde(default)]
    pub allow_unstable_dt: bool,
}

fn default_step() -> f64 {
    0.01
}

fn default_t_end() -> f64 {
    1000.0
}

fn default_scalar_every() -> usize {
    1
}

fn default_steady_tolerance() -> f64 {
    1e-10
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt: default_step(),
            dx: default_step(),
            t_end: default_t_end(),
            record_every: 0,
            scalar_every: default_scalar_every(),
            stop_at_steady_state: false,
            steady_tolerance: default_steady_tolerance(),
            allow_unstable_dt: false,
        }
    }
}

impl SchemeConfig {
    pub fn options(&self) -> SimulationOptions {
        SimulationOptions {
            dt: self.dt,
            t_end: self.t_end,
            record_every: self.record_every,
            scalar_every: self.scalar_every,
            stop_at_steady_state: self.stop_at_steady_state,
            steady_tolerance: self.steady_tolerance,
            allow_unstable_dt: self.allow_unstable_dt,
        }
    }
}

/// File names are relative to `directory`; an empty name skips that output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default)]
    pub snapshots: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_sweep_table")]
    pub sweep: String,
}

fn default_directory() -> String {
    "out".into()
}

fn default_trajectory() -> String {
    "trajectory.csv".into()
}

fn default_summary() -> String {
    "summary.json".into()
}

fn default_sweep_table() -> String {
    "sweep.csv".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            trajectory: default_trajectory(),
            snapshots: String::new(),
            summary: default_summary(),
            sweep: default_sweep_table(),
        }
    }
}

impl OutputConfig {
    /// Full path of an output, or `None` when its name is empty.
    pub fn path(&self, name: &str) -> Option<std::path::PathBuf> {
        (!name.is_empty()).then(|| Path::new(&self.directory).join(name))
    }
}

/// One scalar axis: a dotted path into the configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexParams {
    pub tau: Schedule,
    pub eta: f64,
    #[serde(default = "unit_exchange", skip_serializing_if = "is_unit_exchange")]
    pub exchange: Schedule,
}

fn unit_exchange() -> Schedule {
    Schedule::Constant(1.0)
}

fn is_unit_exchange(s: &Schedule) -> bool {
    *s == Schedule::Constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexInitial {
    pub s: f64,
    #[serde(default)]
    pub i: f64,
}

/// Fully spelled-out model, keyed by vertex and edge ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub graph: GraphSpec,
    pub couplings: BTreeMap<String, BTreeMap<String, CouplingRecord>>,
    pub params: BTreeMap<String, VertexParams>,
    pub initial: BTreeMap<String, VertexInitial>,
    /// Edges without an entry start empty.
    pub initial_edges: BTreeMap<String, EdgeProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Preset { name: String, overrides: Overrides },
    Explicit(ModelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub source: ModelSource,
    /// `None` uses the preset's own mode, or strict for explicit models.
    pub validation: Option<ValidationMode>,
    pub scheme: SchemeConfig,
    pub output: OutputConfig,
    pub sweep: Option<SweepConfig>,
}

/// On-disk layout; every section is optional so that all problems can be
/// reported together.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    overrides: Overrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    validation: Option<ValidationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    couplings: BTreeMap<String, BTreeMap<String, CouplingRecord>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, VertexParams>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    initial: BTreeMap<String, VertexInitial>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    initial_edges: BTreeMap<String, EdgeProfile>,
    #[serde(default)]
    scheme: SchemeConfig,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepConfig>,
}

pub fn parse_config(path: &Path) -> Result<SimulationConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<SimulationConfig, CliError> {
    let value: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    config_from_table(value)
}

pub(crate) fn config_from_table(table: toml::Table) -> Result<SimulationConfig, CliError> {
    let raw: RawConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    validate_raw(raw)
}

fn validate_raw(raw: RawConfig) -> Result<SimulationConfig, CliError> {
    let mut problems = Vec::new();
    let explicit_fields = raw.graph.is_some()
        || !raw.couplings.is_empty()
        || !raw.params.is_empty()
        || !raw.initial.is_empty()
        || !raw.initial_edges.is_empty();
    let source = match (raw.preset, raw.graph) {
        (Some(_), _) if explicit_fields => {
            problems.push("give either `preset` or an explicit model (`graph`, `couplings`, ...), not both".into());
            None
        }
        (Some(name), _) => Some(ModelSource::Preset { name, overrides: raw.overrides }),
        (None, Some(graph)) => {
            if !raw.overrides.is_empty() {
                problems.push("`overrides` only applies to presets".into());
            }
            Some(ModelSource::Explicit(ModelSpec {
                graph,
                couplings: raw.couplings,
                params: raw.params,
                initial: raw.initial,
                initial_edges: raw.initial_edges,
            }))
        }
        (None, None) => {
            problems.push("missing `preset` or `graph`".into());
            None
        }
    };

    let s = &raw.scheme;
    for (name, value) in [("scheme.dt", s.dt), ("scheme.dx", s.dx), ("scheme.t_end", s.t_end), ("scheme.steady_tolerance", s.steady_tolerance)] {
        if !(value > 0.0 && value.is_finite()) {
            problems.push(format!("`{name}` must be positive and finite, got {value}"));
        }
    }
    if s.scalar_every == 0 {
        problems.push("`scheme.scalar_every` must be at least 1".into());
    }
    if let Some(sweep) = &raw.sweep {
        if sweep.parameter.trim().is_empty() {
            problems.push("`sweep.parameter` is empty".into());
        }
        if let Some(bad) = sweep.values.iter().find(|v| !v.is_finite()) {
            problems.push(format!("`sweep.values` contains {bad}"));
        }
    }

    let config = SimulationConfig {
        source: source.unwrap_or(ModelSource::Preset { name: String::new(), overrides: Overrides::new() }),
        validation: raw.validation,
        scheme: raw.scheme,
        output: raw.output,
        sweep: raw.sweep,
    };
    if problems.is_empty() {
        if let Err(e) = config.scenario() {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Validation(problems))
    }
}

impl SimulationConfig {
    /// Builds the model described by the configuration.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let mut scenario = match &self.source {
            ModelSource::Preset { name, overrides } => build_preset(name, overrides).map_err(|e| CliError::Model(e.to_string()))?,
            ModelSource::Explicit(spec) => spec.build()?,
        };
        if let Some(mode) = self.validation {
            scenario.validation = mode;
        }
        Ok(scenario)
    }

    /// Normalized TOML text; parsing it gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        let mut raw = RawConfig {
            validation: self.validation,
            scheme: self.scheme.clone(),
            output: self.output.clone(),
            sweep: self.sweep.clone(),
            ..Default::default()
        };
        match &self.source {
            ModelSource::Preset { name, overrides } => {
                raw.preset = Some(name.clone());
                raw.overrides = overrides.clone();
            }
            ModelSource::Explicit(spec) => {
                raw.graph = Some(spec.graph.clone());
                raw.couplings = spec.couplings.clone();
                raw.params = spec.params.clone();
                raw.initial = spec.initial.clone();
                raw.initial_edges = spec.initial_edges.clone();
            }
        }
        toml::to_string(&raw).expect("configuration is always serializable")
    }

    /// Replaces a preset source by the equivalent explicit model.
    pub fn expanded(&self) -> Result<Self, CliError> {
        let scenario = self.scenario()?;
        Ok(Self {
            source: ModelSource::Explicit(ModelSpec::from_scenario(&scenario)),
            validation: Some(scenario.validation),
            ..self.clone()
        })
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<Scenario, CliError> {
        let model = |e: &dyn std::fmt::Display| CliError::Model(e.to_string());
        let graph = self.graph.build().map_err(|e| model(&e))?;
        let couplings = CouplingSet::from_records(&graph, &self.couplings).map_err(|e| model(&e))?;
        let mut problems = Vec::new();
        let known = |map_keys: Vec<&String>, what: &str, problems: &mut Vec<String>| {
            for k in map_keys {
                if graph.vertex_index(k).is_none() {
                    problems.push(format!("{what} names unknown vertex `{k}`"));
                }
            }
        };
        known(self.params.keys().collect(), "params", &mut problems);
        known(self.initial.keys().collect(), "initial", &mut problems);
        for e in self.initial_edges.keys() {
            if graph.edge_index(e).is_none() {
                problems.push(format!("initial_edges names unknown edge `{e}`"));
            }
        }
        let n = graph.vertex_count();
        let mut params = EpidemicParams::uniform(n, 1.0, 1.0);
        let mut s = vec![0.0; n];
        let mut i = vec![0.0; n];
        for v in 0..n {
            let id = graph.vertex_id(v);
            match self.params.get(id) {
                Some(p) => {
                    params.tau[v] = p.tau;
                    params.eta[v] = p.eta;
                    params.exchange[v] = p.exchange;
                }
                None => problems.push(format!("params missing for vertex `{id}`")),
            }
            match self.initial.get(id) {
                Some(init) => {
                    s[v] = init.s;
                    i[v] = init.i;
                }
                None => problems.push(format!("initial data missing for vertex `{id}`")),
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Validation(problems));
        }
        let edges = graph
            .edges()
            .iter()
            .map(|e| self.initial_edges.get(&e.id).cloned().unwrap_or(EdgeProfile::Zero))
            .collect();
        let initial = InitialData::new(s, i, edges);
        params.validate(&graph).map_err(|e| model(&e))?;
        initial.validate(&graph).map_err(|e| model(&e))?;
        Ok(Scenario {
            name: "custom".into(),
            graph,
            couplings,
            params,
            initial,
            validation: ValidationMode::Strict,
            needs_unstable_dt: false,
        })
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        let g = &scenario.graph;
        let ids = g.vertex_ids();
        Self {
            graph: g.to_spec(),
            couplings: scenario.couplings.to_records(g),
            params: ids
                .iter()
                .enumerate()
                .map(|(v, id)| {
                    let p = &scenario.params;
                    (id.clone(), VertexParams { tau: p.tau[v], eta: p.eta[v], exchange: p.exchange[v] })
                })
                .collect(),
            initial: ids
                .iter()
                .enumerate()
                .map(|(v, id)| (id.clone(), VertexInitial { s: scenario.initial.s[v], i: scenario.initial.i[v] }))
                .collect(),
            initial_edges: g
                .edges()
                .iter()
                .zip(&scenario.initial.edges)
                .filter(|(_, p)| **p != EdgeProfile::Zero)
                .map(|(e, p)| (e.id.clone(), p.clone()))
                .collect(),
        }
    }
}

/// Sets the value at a dotted path (`overrides.lambda1`, `params.v1.eta`,
/// `graph.edges.0.length`) in a configuration document. Missing tables are
/// created; array elements must already exist.
pub fn set_path(table: &mut toml::Table, path: &str, value: f64) -> Result<(), CliError> {
    let bad = |why: &str| CliError::Validation(vec![format!("sweep path `{path}`: {why}")]);
    let parts: Vec<&str> = path.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("empty segment"));
    }
    let (last, head) = parts.split_last().expect("split yields at least one part");
    let mut current = toml::Value::Table(std::mem::take(table));
    let result = (|| {
        let mut node = &mut current;
        for part in head {
            node = match node {
                toml::Value::Table(t) => t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default())),
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| bad("array segment is not an index"))?;
                    a.get_mut(idx).ok_or_else(|| bad("array index out of range"))?
                }
                _ => return Err(bad("descends into a scalar")),
            };
        }
        match node {
            toml::Value::Table(t) => {
                t.insert(last.to_string(), toml::Value::Float(value));
                Ok(())
            }
            toml::Value::Array(a) => {
                let idx: usize = last.parse().map_err(|_| bad("array segment is not an index"))?;
                let slot = a.get_mut(idx).ok_or_else(|| bad("array index out of range"))?;
                *slot = toml::Value::Float(value);
                Ok(())
            }
            _ => Err(bad("descends into a scalar")),
        }
    })();
    if let toml::Value::Table(t) = current {
        *table = t;
    }
    result
}

/// Normalized TOML document for a configuration, used as the sweep template.
pub fn config_table(config: &SimulationConfig) -> toml::Table {
    config.to_toml().parse().expect("normalized configuration parses")
}
