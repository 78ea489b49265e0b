//! Run orchestration: single runs, analysis without the PDE, and sweeps.

use crate::config::{config_table, config_from_table, set_path, SimulationConfig};
use crate::error::CliError;
use metric_sir::asymptotics::{
    final_size_symmetric, final_size_symmetric_bisection, manifold_residual, manifold_residual_removed,
    manifold_residual_susceptible, vertex_balance_residuals, SymmetricSystem, TwoVertexBoxes, TwoVertexSystem,
};
use metric_sir::model::{initial_mass, reproduction_numbers};
use metric_sir::solver::discretize_uniform;
use metric_sir::{
    dt_stability_bound, simulate, validate_hypotheses, Grid, ReproductionNumbers, Scenario, Trajectory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding the number of sweep workers.
pub const WORKERS_ENV: &str = "METRIC_SIR_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSummary {
    pub id: String,
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub cumulative: f64,
    pub peak_time: f64,
    pub peak_value: f64,
    pub reproduction: ReproductionNumbers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldResiduals {
    pub i_form: f64,
    pub s_form: f64,
    pub r_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub dt: f64,
    pub dx: f64,
    pub m0: f64,
    pub final_time: f64,
    pub steps: usize,
    pub steady_state_reached: bool,
    /// `null` when the bound is infinite.
    pub stability_bound: Option<f64>,
    pub max_mass_drift: f64,
    pub max_step_mass_change: f64,
    pub min_entry: f64,
    pub vertices: Vec<VertexSummary>,
    /// Absent when contact rates vary in time.
    pub manifold: Option<ManifoldResiduals>,
    pub vertex_balance: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub struct RunOutcome {
    pub scenario: Scenario,
    pub grid: Grid,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Builds the scenario and checks the coupling hypotheses; returns warnings.
fn prepare(config: &SimulationConfig) -> Result<(Scenario, Grid, Vec<String>), CliError> {
    let scenario = config.scenario()?;
    let report = validate_hypotheses(&scenario.graph, &scenario.couplings, scenario.validation);
    if !report.is_ok() {
        return Err(CliError::Hypotheses(report.violations.iter().map(ToString::to_string).collect()));
    }
    let mut warnings: Vec<String> = report.warnings.iter().map(ToString::to_string).collect();
    warnings.extend(scenario.initial.validate(&scenario.graph).map_err(|e| CliError::Model(e.to_string()))?);
    let grid = discretize_uniform(&scenario.graph, config.scheme.dx)?;
    Ok((scenario, grid, warnings))
}

/// Runs the simulation without writing anything.
pub fn execute(config: &SimulationConfig) -> Result<RunOutcome, CliError> {
    let (scenario, grid, mut warnings) = prepare(config)?;
    let mut options = config.scheme.options();
    if scenario.needs_unstable_dt && !options.allow_unstable_dt {
        options.allow_unstable_dt = true;
        warnings.push(format!("preset `{}` has no positive stability bound; running without the check", scenario.name));
    }
    let trajectory = simulate(&scenario.graph, &scenario.couplings, &scenario.params, &scenario.initial, &grid, &options)?;
    let summary = summarize(config, &scenario, &trajectory, warnings);
    Ok(RunOutcome { scenario, grid, trajectory, summary })
}

fn summarize(config: &SimulationConfig, scenario: &Scenario, tr: &Trajectory, warnings: Vec<String>) -> RunSummary {
    let params = &scenario.params;
    let s0 = &tr.initial.s;
    let last = &tr.final_state;
    let manifold = match (
        manifold_residual(params, s0, &tr.cumulative_infected, tr.m0),
        manifold_residual_susceptible(params, s0, &last.s, tr.m0),
        manifold_residual_removed(params, s0, &last.r, tr.m0),
    ) {
        (Ok(i_form), Ok(s_form), Ok(r_form)) => Some(ManifoldResiduals { i_form, s_form, r_form }),
        _ => None,
    };
    let repro = reproduction_numbers(params, &scenario.initial, tr.m0);
    let vertices = (0..scenario.graph.vertex_count())
        .map(|v| VertexSummary {
            id: tr.vertex_ids[v].clone(),
            s: last.s[v],
            i: last.i[v],
            r: last.r[v],
            cumulative: tr.cumulative_infected[v],
            peak_time: tr.peaks.vertices[v].t_max,
            peak_value: tr.peaks.vertices[v].i_max,
            reproduction: repro[v],
        })
        .collect();
    RunSummary {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        dt: config.scheme.dt,
        dx: config.scheme.dx,
        m0: tr.m0,
        final_time: tr.final_time(),
        steps: tr.steps,
        steady_state_reached: tr.steady_state_reached,
        stability_bound: finite_or_none(tr.stability_bound),
        max_mass_drift: tr.max_mass_drift,
        max_step_mass_change: tr.max_step_mass_change,
        min_entry: tr.min_entry,
        vertices,
        manifold,
        vertex_balance: vertex_balance_residuals(tr, params).ok(),
        warnings,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e| CliError::Io { path: path.display().to_string(), source: e };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Vertex scalars per recorded time, 17 significant digits.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut out = String::from("t");
    for id in &tr.vertex_ids {
        write!(out, ",S_{id},I_{id},R_{id}").unwrap();
    }
    out.push_str(",edge_mass,total_mass\n");
    for s in &tr.samples {
        write!(out, "{:.16e}", s.t).unwrap();
        for v in 0..tr.vertex_ids.len() {
            write!(out, ",{:.16e},{:.16e},{:.16e}", s.s[v], s.i[v], s.r[v]).unwrap();
        }
        writeln!(out, ",{:.16e},{:.16e}", s.edge_mass, s.total_mass).unwrap();
    }
    out
}

/// Edge samples in long format: one row per (time, edge, grid point).
pub fn snapshots_csv(scenario: &Scenario, grid: &Grid, tr: &Trajectory) -> String {
    let mut out = String::from("t,edge,x,u\n");
    for snap in &tr.snapshots {
        for (e, edge) in scenario.graph.edges().iter().enumerate() {
            let eg = grid.edge(e);
            for j in 0..eg.points {
                writeln!(out, "{:.16e},{},{:.16e},{:.16e}", snap.t, edge.id, eg.x(j), snap.u[eg.offset + j]).unwrap();
            }
        }
    }
    out
}

/// Runs the simulation and writes the configured outputs.
pub fn run(config: &SimulationConfig) -> Result<RunOutcome, CliError> {
    let outcome = execute(config)?;
    let out = &config.output;
    if let Some(path) = out.path(&out.trajectory) {
        write_file(&path, &trajectory_csv(&outcome.trajectory))?;
    }
    if let Some(path) = out.path(&out.snapshots) {
        write_file(&path, &snapshots_csv(&outcome.scenario, &outcome.grid, &outcome.trajectory))?;
    }
    if let Some(path) = out.path(&out.summary) {
        write_file(&path, &(serde_json::to_string_pretty(&outcome.summary).expect("summary serializes") + "\n"))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricAnalysis {
    /// Mean initial susceptible population used for the closed form.
    pub s0: f64,
    /// Largest deviation of any `S_v⁰` from `s0`.
    pub s0_spread: f64,
    pub cumulative: f64,
    pub susceptible: f64,
    pub removed: f64,
    pub cumulative_bisection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub scenario: String,
    pub m0: f64,
    pub vertex_ids: Vec<String>,
    pub reproduction: Vec<ReproductionNumbers>,
    pub stability_bound: Option<f64>,
    pub symmetric: Option<SymmetricAnalysis>,
    pub two_vertex: Option<TwoVertexBoxes>,
    pub notes: Vec<String>,
}

/// Final-size analysis from the closed forms only.
pub fn analyze(config: &SimulationConfig) -> Result<AnalysisReport, CliError> {
    let (scenario, grid, _) = prepare(config)?;
    let (g, c, p, init) = (&scenario.graph, &scenario.couplings, &scenario.params, &scenario.initial);
    let m0 = initial_mass(g, &grid, c, init).map_err(|e| CliError::Model(e.to_string()))?;
    let mut notes = Vec::new();
    let mean_s0 = init.s.iter().sum::<f64>() / init.s.len() as f64;
    let symmetric = match SymmetricSystem::from_graph(g, c, p, mean_s0, m0) {
        Ok(system) => match final_size_symmetric(&system) {
            Ok(fs) => Some(SymmetricAnalysis {
                s0: mean_s0,
                s0_spread: init.s.iter().map(|s| (s - mean_s0).abs()).fold(0.0, f64::max),
                cumulative: fs.cumulative,
                susceptible: fs.susceptible,
                removed: fs.removed,
                cumulative_bisection: final_size_symmetric_bisection(&system),
            }),
            Err(e) => {
                notes.push(format!("symmetric final size: {e}"));
                None
            }
        },
        Err(e) => {
            notes.push(format!("symmetric final size not applicable: {e}"));
            None
        }
    };
    let two_vertex = match TwoVertexSystem::from_graph(g, p, init, m0).and_then(|s| s.boxes()) {
        Ok(b) => Some(b),
        Err(e) => {
            notes.push(format!("two-vertex bounds not available: {e}"));
            None
        }
    };
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        m0,
        vertex_ids: g.vertex_ids().to_vec(),
        reproduction: reproduction_numbers(p, init, m0),
        stability_bound: finite_or_none(dt_stability_bound(c, p)),
        symmetric,
        two_vertex,
        notes,
    })
}

/// Worker count from the environment, or rayon's default.
pub fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n > 0)
}

/// One sweep point, `Err` holding the failure message.
pub type SweepRow = Result<RunSummary, String>;

pub struct SweepOutcome {
    pub values: Vec<f64>,
    pub vertex_ids: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub table: String,
    /// First failing point, if any.
    pub first_error: Option<CliError>,
}

/// Runs every point of the sweep axis; rows stay in axis order whatever the
/// worker count. All points run even when some fail.
pub fn sweep(config: &SimulationConfig, workers: Option<usize>) -> Result<SweepOutcome, CliError> {
    let axis = config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Validation(vec!["missing [sweep] section".into()]))?;
    let base = config_table(config);
    let vertex_ids = config.scenario()?.graph.vertex_ids().to_vec();
    let point = |value: f64| -> Result<RunSummary, CliError> {
        let mut table = base.clone();
        set_path(&mut table, &axis.parameter, value)?;
        let cfg = config_from_table(table)?;
        Ok(execute(&cfg)?.summary)
    };
    let results: Vec<Result<RunSummary, CliError>> = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(vec![format!("cannot start {n} workers: {e}")]))?;
            pool.install(|| axis.values.par_iter().map(|&v| point(v)).collect())
        }
        None => axis.values.par_iter().map(|&v| point(v)).collect(),
    };
    let mut first_error = None;
    let rows: Vec<SweepRow> = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| {
                let msg = e.to_string();
                if first_error.is_none() {
                    first_error = Some(CliError::Sweep { index, value: axis.values[index], source: Box::new(e) });
                }
                msg
            })
        })
        .collect();
    let table = sweep_csv(&axis.parameter, &axis.values, &vertex_ids, &rows);
    if let Some(path) = config.output.path(&config.output.sweep) {
        write_file(&path, &table)?;
    }
    Ok(SweepOutcome { values: axis.values, vertex_ids, rows, table, first_error })
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

pub fn sweep_csv(parameter: &str, values: &[f64], vertex_ids: &[String], rows: &[SweepRow]) -> String {
    let mut out = String::from("index,");
    out.push_str(&csv_text(parameter));
    out.push_str(",status,m0,max_mass_drift,manifold_residual,final_time,peak_delay");
    for id in vertex_ids {
        write!(out, ",cumulative_{id},S_{id},peak_time_{id},peak_value_{id}").unwrap();
    }
    out.push('\n');
    let blank = 5 + 4 * vertex_ids.len();
    for (index, (value, row)) in values.iter().zip(rows).enumerate() {
        write!(out, "{index},{value:.16e}").unwrap();
        match row {
            Ok(s) => {
                let residual = s.manifold.map(|m| format!("{:.16e}", m.i_form)).unwrap_or_default();
                let delay = if s.vertices.len() >= 2 {
                    format!("{:.16e}", s.vertices[1].peak_time - s.vertices[0].peak_time)
                } else {
                    String::new()
                };
                write!(out, ",ok,{:.16e},{:.16e},{residual},{:.16e},{delay}", s.m0, s.max_mass_drift, s.final_time)
                    .unwrap();
                for v in &s.vertices {
                    write!(out, ",{:.16e},{:.16e},{:.16e},{:.16e}", v.cumulative, v.s, v.peak_time, v.peak_value).unwrap();
                }
            }
            Err(msg) => {
                write!(out, ",{}", csv_text(&format!("error: {msg}"))).unwrap();
                out.push_str(&",".repeat(blank));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn quiet(text: &str) -> SimulationConfig {
        let mut c = parse_config_str(text).unwrap();
        c.output.trajectory.clear();
        c.output.summary.clear();
        c.output.sweep.clear();
        c
    }

    #[test]
    fn short_run_summary() {
        let c = quiet("preset = \"two_vertex\"\n[scheme]\nt_end = 5.0\ndx = 0.05\ndt = 0.05\n");
        let out = execute(&c).unwrap();
        let s = &out.summary;
        assert_eq!(s.schema_version, SCHEMA_VERSION);
        assert_eq!(s.steps, 100);
        assert!(s.max_mass_drift < 1e-13);
        assert!(s.manifold.is_some());
        assert_eq!(s.vertices.len(), 2);
        assert_eq!(s.stability_bound, None);
        let json = serde_json::to_string(s).unwrap();
        let back: RunSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, s);
    }

    #[test]
    fn zero_infection_keeps_initial_state() {
        let text = "preset = \"two_vertex\"\n[overrides]\ni0 = 0.0\n[scheme]\nt_end = 2.0\n";
        let out = execute(&quiet(text)).unwrap();
        assert_eq!(out.trajectory.final_state.s, out.scenario.initial.s);
        assert!(out.summary.warnings.iter().any(|w| w.contains("no initial infection")));
        let m = out.summary.manifold.unwrap();
        assert!(m.i_form.abs() < 1e-15);
    }

    #[test]
    fn lockdown_run_omits_manifold() {
        let out = execute(&quiet("preset = \"star4\"\n[scheme]\nt_end = 1.0\ndt = 0.1\ndx = 0.1\n")).unwrap();
        assert!(out.summary.manifold.is_none());
    }

    #[test]
    fn directed_triangle_runs_with_warning() {
        let out = execute(&quiet("preset = \"triangle_directed\"\n[scheme]\nt_end = 1.0\ndt = 0.1\n")).unwrap();
        assert!(out.summary.warnings.iter().any(|w| w.contains("stability bound")));
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let c = quiet("preset = \"two_vertex\"\n[scheme]\nt_end = 0.1\ndt = 0.05\ndx = 0.1\nrecord_every = 1\n");
        let out = execute(&c).unwrap();
        let csv = trajectory_csv(&out.trajectory);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,S_v1,I_v1,R_v1,S_v2,I_v2,R_v2,edge_mass,total_mass");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[1].split('e').next().unwrap().len(), 18);
        let snaps = snapshots_csv(&out.scenario, &out.grid, &out.trajectory);
        assert_eq!(snaps.lines().count(), 1 + 3 * out.grid.size());
    }

    #[test]
    fn analysis_of_presets() {
        let tri = analyze(&quiet("preset = \"triangle\"")).unwrap();
        let sym = tri.symmetric.unwrap();
        assert!((sym.cumulative - sym.cumulative_bisection).abs() < 1e-9);
        assert!(tri.two_vertex.is_none());
        let two = analyze(&quiet("preset = \"two_vertex\"\n[overrides]\nlambda1 = 0.3\n")).unwrap();
        assert!(two.symmetric.is_none());
        assert!(two.two_vertex.is_some());
    }

    #[test]
    fn empty_sweep_gives_header_only() {
        let c = quiet("preset = \"two_vertex\"\n[sweep]\nparameter = \"overrides.lambda1\"\nvalues = []\n");
        let out = sweep(&c, Some(1)).unwrap();
        assert_eq!(out.table.lines().count(), 1);
        assert!(out.first_error.is_none());
    }

    #[test]
    fn sweep_failure_is_reported_after_all_points() {
        let text = "preset = \"two_vertex\"\n[scheme]\nt_end = 1.0\ndt = 0.1\ndx = 0.1\n[sweep]\nparameter = \"overrides.lambda1\"\nvalues = [0.1, 2.0, 0.3, 3.0]\n";
        let out = sweep(&quiet(text), Some(2)).unwrap();
        assert!(out.rows[0].is_ok() && out.rows[2].is_ok());
        assert!(out.rows[1].is_err() && out.rows[3].is_err());
        match out.first_error {
            Some(CliError::Sweep { index: 1, value, .. }) => assert_eq!(value, 2.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(out.table.lines().count(), 5);
        let cols = out.table.lines().next().unwrap().split(',').count();
        assert!(out.table.lines().filter(|l| l.contains(",ok,")).all(|l| l.split(',').count() == cols));
    }
}
