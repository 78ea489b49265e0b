use metric_sir_cli::{parse_config_str, sweep};
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn metric_sir(args: &[&str], dir: &Path, workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_metric-sir"));
    cmd.args(args).current_dir(dir);
    match workers {
        Some(n) => cmd.env("METRIC_SIR_WORKERS", n),
        None => cmd.env_remove("METRIC_SIR_WORKERS"),
    };
    cmd.output().unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "preset = \"two_vertex\"\n[scheme]\ndt = 0.05\ndx = 0.05\nt_end = 20.0\nrecord_every = 100\n[output]\nsnapshots = \"snap.csv\"\n",
    );
    let out = metric_sir(&["run", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["steps"], 400);
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(written, summary);

    let traj = std::fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "t,S_v1,I_v1,R_v1,S_v2,I_v2,R_v2,edge_mass,total_mass");
    assert_eq!(lines.count(), 401);
    let snap = std::fs::read_to_string(dir.path().join("out/snap.csv")).unwrap();
    assert!(snap.starts_with("t,edge,x,u\n"));
}

#[test]
fn validate_prints_a_config_that_parses_back() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "v.toml", "preset = \"star4\"\n[overrides]\nlockdown_vertices = \"v1,v2\"\n");
    let out = metric_sir(&["validate", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_config_str(&text).unwrap(), parse_config_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap());
}

#[test]
fn analyze_reports_closed_forms() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "a.toml", "preset = \"triangle\"\n");
    let out = metric_sir(&["analyze", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sym = &report["symmetric"];
    let (a, b) = (sym["cumulative"].as_f64().unwrap(), sym["cumulative_bisection"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-9 * a);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("preset = \"two_vertex\"\n[scheme]\ndt = -1.0\n", 1),
        ("preset = \"nowhere\"\n", 1),
        ("preset = \n", 1),
        ("preset = \"two_vertex\"\n[overrides]\nalpha = 1.2\n", 1),
        ("preset = \"two_vertex\"\n[overrides]\ns1 = 1e300\ni1 = 1e300\n[scheme]\nt_end = 1.0\n", 3),
    ];
    for (k, (text, code)) in cases.iter().enumerate() {
        let cfg = write_config(&dir, &format!("c{k}.toml"), text);
        let out = metric_sir(&["run", &cfg], dir.path(), None);
        assert_eq!(out.status.code(), Some(*code), "case {k}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let out = metric_sir(&["run", "missing.toml"], dir.path(), None);
    assert_eq!(out.status.code(), Some(1));

    // spelled out, the directed triangle no longer opts into dt above its zero bound
    let explicit = parse_config_str("preset = \"triangle_directed\"\n[scheme]\nt_end = 1.0\n").unwrap().expanded().unwrap();
    let cfg = write_config(&dir, "unstable.toml", &explicit.to_toml());
    let out = metric_sir(&["run", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let allowed = explicit.to_toml().replace("allow_unstable_dt = false", "allow_unstable_dt = true");
    let cfg = write_config(&dir, "allowed.toml", &allowed);
    assert_eq!(metric_sir(&["run", &cfg], dir.path(), None).status.code(), Some(0));
}

const LAMBDA_SWEEP: &str = "preset = \"two_vertex\"
[scheme]
dt = 0.02
dx = 0.02
t_end = 300.0
[output]
directory = \"\"
trajectory = \"\"
summary = \"\"
sweep = \"\"
[sweep]
parameter = \"overrides.lambda1\"
values = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 0.95]
";

#[test]
fn sweep_table_is_independent_of_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "s.toml", &LAMBDA_SWEEP.replace("sweep = \"\"", "sweep = \"sweep.csv\""));
    let one = metric_sir(&["sweep", &cfg], dir.path(), Some("1"));
    let four = metric_sir(&["sweep", &cfg], dir.path(), Some("4"));
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(four.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(std::fs::read(dir.path().join("sweep.csv")).unwrap(), four.stdout);
}

#[test]
fn stronger_leak_out_of_the_seed_lowers_its_epidemic() {
    let outcome = sweep(&parse_config_str(LAMBDA_SWEEP).unwrap(), Some(2)).unwrap();
    assert!(outcome.first_error.is_none());
    let cumulative: Vec<f64> = outcome.rows.iter().map(|r| r.as_ref().unwrap().vertices[0].cumulative).collect();
    assert!(cumulative.windows(2).all(|w| w[1] < w[0]), "{cumulative:?}");
}

#[test]
fn stronger_absorption_delays_the_second_peak() {
    let text = LAMBDA_SWEEP
        .replace("overrides.lambda1", "overrides.alpha1")
        .replace("[0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 0.95]", "[0.02, 0.05, 0.125, 0.25, 0.5]");
    let outcome = sweep(&parse_config_str(&text).unwrap(), None).unwrap();
    let delay: Vec<f64> = outcome
        .rows
        .iter()
        .map(|r| {
            let s = r.as_ref().unwrap();
            s.vertices[1].peak_time - s.vertices[0].peak_time
        })
        .collect();
    assert!(delay.windows(2).all(|w| w[1] > w[0]), "{delay:?}");
}

#[test]
fn failing_point_keeps_the_rest_of_the_table() {
    let text = LAMBDA_SWEEP.replace("[0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 0.95]", "[0.1, 1.5, 0.2]");
    let outcome = sweep(&parse_config_str(&text).unwrap(), Some(3)).unwrap();
    assert!(outcome.rows[0].is_ok() && outcome.rows[2].is_ok());
    assert!(outcome.rows[1].is_err());
    assert_eq!(outcome.first_error.unwrap().exit_code(), 1);
    assert_eq!(outcome.table.lines().count(), 4);
}
