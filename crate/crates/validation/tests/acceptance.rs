//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use metric_sir::asymptotics::{final_size_symmetric, manifold_residual, SymmetricSystem, TwoVertexSystem};
use metric_sir::scenarios::{build_preset, two_vertex_asymmetric_overrides, Overrides, Scenario};
use metric_sir::solver::discretize_uniform;
use metric_sir::{
    dt_stability_bound, lambert_w0, lambert_wm1, simulate, validate_hypotheses, CouplingSet, EdgeProfile, EdgeSpec,
    EpidemicParams, GraphSpec, InitialData, SimulationOptions, Trajectory, ValidationMode, VertexCoupling,
};
use metric_sir_cli::{parse_config_str, sweep};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::process::ExitCode;
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn preset(name: &str, pairs: &[(&str, f64)]) -> Scenario {
    let o: Overrides = pairs.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
    build_preset(name, &o).unwrap()
}

fn simulate_with(sc: &Scenario, dt: f64, dx: f64, options: SimulationOptions) -> Trajectory {
    let grid = discretize_uniform(&sc.graph, dx).unwrap();
    let options = SimulationOptions { dt, allow_unstable_dt: sc.needs_unstable_dt, scalar_every: 100, ..options };
    simulate(&sc.graph, &sc.couplings, &sc.params, &sc.initial, &grid, &options).unwrap()
}

fn run_to(sc: &Scenario, dt: f64, dx: f64, t_end: f64) -> Trajectory {
    simulate_with(sc, dt, dx, SimulationOptions { t_end, ..Default::default() })
}

/// Runs until `Σ I + edge mass` is below `tol · M⁰`.
fn settle(sc: &Scenario, h: f64, tol: f64) -> Trajectory {
    let tr = simulate_with(
        sc,
        h,
        h,
        SimulationOptions { t_end: 1e5, stop_at_steady_state: true, steady_tolerance: tol, ..Default::default() },
    );
    assert!(tr.steady_state_reached, "{} did not settle", sc.name);
    tr
}

fn mass_conservation() -> Verdict {
    let sc = preset("two_vertex", &[]);
    let tr = run_to(&sc, 0.01, 0.01, 2000.0);
    let against_one = tr.max_mass_drift + (tr.m0 - 1.0).abs();
    verdict(
        against_one <= 1e-10,
        format!("max|M^m - M0| = {:.2e}, max|M^m - 1| <= {:.2e} (bound 1e-10)", tr.max_mass_drift, against_one),
    )
}

fn random_config(rng: &mut StdRng) -> (Scenario, f64) {
    loop {
        let n = rng.random_range(2..=6);
        let mut degree = vec![0usize; n];
        let mut edges = Vec::new();
        // random tree first so the graph is connected, then extra edges
        for v in 1..n {
            let u = rng.random_range(0..v);
            if degree[u] < 4 {
                degree[u] += 1;
                degree[v] += 1;
                edges.push((u, v));
            }
        }
        for _ in 0..rng.random_range(0..=n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b && degree[a] < 4 && degree[b] < 4 {
                degree[a] += 1;
                degree[b] += 1;
                edges.push((a, b));
            }
        }
        if degree.contains(&0) {
            continue;
        }
        let spec = GraphSpec {
            vertices: (0..n).map(|v| format!("v{v}")).collect(),
            edges: edges
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| EdgeSpec {
                    id: format!("e{k}"),
                    from: format!("v{a}"),
                    to: format!("v{b}"),
                    length: rng.random_range(0.5..2.0),
                    diffusivity: 10f64.powf(rng.random_range(-3.0..0.5)),
                })
                .collect(),
        };
        let graph = spec.build().unwrap();
        let vertices = (0..n)
            .map(|v| {
                let k = graph.degree(v);
                let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.9 / k as f64)).collect();
                let lambda: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.9 / k as f64)).collect();
                let mut nu = vec![vec![0.0; k]; k];
                for a in 0..k {
                    for b in a + 1..k {
                        let x = rng.random_range(0.0..0.1 / k as f64);
                        nu[a][b] = x;
                        nu[b][a] = x;
                    }
                }
                VertexCoupling::new(alpha, lambda, nu)
            })
            .collect();
        let Ok(couplings) = CouplingSet::new(&graph, vertices) else { continue };
        if !validate_hypotheses(&graph, &couplings, ValidationMode::Strict).is_ok() {
            continue;
        }
        let params = EpidemicParams::new(
            (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
            (0..n).map(|_| rng.random_range(0.01..1.0)).collect(),
        );
        let bound = dt_stability_bound(&couplings, &params);
        let dt = 0.05f64.min(0.9 * bound);
        if dt <= 0.0 {
            continue;
        }
        let dx = 0.05;
        let grid = discretize_uniform(&graph, dx).unwrap();
        let profiles = (0..graph.edge_count())
            .map(|e| match rng.random_range(0..3) {
                0 => EdgeProfile::Zero,
                1 => EdgeProfile::BoundaryLayer,
                _ => EdgeProfile::Samples((0..grid.edge(e).points).map(|_| rng.random_range(0.0..0.1)).collect()),
            })
            .collect();
        let initial = InitialData::new(
            (0..n).map(|_| rng.random_range(0.01..1.0)).collect(),
            (0..n).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..0.2) } else { 0.0 }).collect(),
            profiles,
        );
        let sc = Scenario {
            name: "random".into(),
            graph,
            couplings,
            params,
            initial,
            validation: ValidationMode::Strict,
            needs_unstable_dt: false,
        };
        return (sc, dt);
    }
}

fn positivity() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst = f64::INFINITY;
    let mut worst_drift: f64 = 0.0;
    for _ in 0..200 {
        let (sc, dt) = random_config(&mut rng);
        let tr = simulate_with(&sc, dt, 0.05, SimulationOptions { t_end: 500.0 * dt, ..Default::default() });
        assert_eq!(tr.steps, 500);
        worst = worst.min(tr.min_entry);
        worst_drift = worst_drift.max(tr.max_mass_drift / tr.m0);
    }
    verdict(
        worst >= -1e-14,
        format!("200 configs x 500 steps, min entry {worst:.2e} (bound -1e-14), worst relative drift {worst_drift:.1e}"),
    )
}

fn symmetric_final_size() -> Verdict {
    let mut errors = Vec::new();
    for h in [0.01, 0.005] {
        let sc = preset("triangle", &[]);
        // Σ I + edge mass < 3e-11 < 1e-10
        let tr = settle(&sc, h, 1e-11);
        let sys = SymmetricSystem::from_graph(&sc.graph, &sc.couplings, &sc.params, 1.0, tr.m0).unwrap();
        let exact = final_size_symmetric(&sys).unwrap().cumulative;
        let worst = tr.cumulative_infected.iter().map(|c| (c - exact).abs() / exact).fold(0.0, f64::max);
        errors.push(worst);
    }
    verdict(
        errors[0] <= 1e-3 && errors[1] < errors[0],
        format!("max relative error {:.2e} at h=0.01, {:.2e} at h=0.005 (bound 1e-3, must improve)", errors[0], errors[1]),
    )
}

fn converged_suite() -> Vec<(&'static str, Scenario)> {
    vec![
        ("two_vertex", preset("two_vertex", &[])),
        ("triangle", preset("triangle", &[])),
        ("two_vertex asymmetric", build_preset("two_vertex", &two_vertex_asymmetric_overrides()).unwrap()),
        ("triangle_directed", preset("triangle_directed", &[])),
        ("two_vertex lambda1=0.5", preset("two_vertex", &[("lambda1", 0.5)])),
        ("triangle d=0.1", preset("triangle", &[("d", 0.1)])),
    ]
}

fn manifold_residuals() -> Verdict {
    let mut worst = [0.0f64; 2];
    let mut names = [""; 2];
    for (name, sc) in converged_suite() {
        for (slot, h) in [0.01, 0.005].into_iter().enumerate() {
            let tr = settle(&sc, h, 1e-12);
            let r = manifold_residual(&sc.params, &tr.initial.s, &tr.cumulative_infected, tr.m0).unwrap().abs() / tr.m0;
            if r > worst[slot] {
                worst[slot] = r;
                names[slot] = name;
            }
        }
    }
    verdict(
        worst[0] <= 1e-3 && worst[1] <= 2.5e-4,
        format!(
            "worst |residual|/M0 {:.2e} at h=0.01 ({}), {:.2e} at h=0.005 ({}) (bounds 1e-3, 2.5e-4)",
            worst[0], names[0], worst[1], names[1]
        ),
    )
}

fn two_vertex_boxes() -> Verdict {
    let sc = build_preset("two_vertex", &two_vertex_asymmetric_overrides()).unwrap();
    let tr = settle(&sc, 0.01, 1e-12);
    let sys = TwoVertexSystem::from_graph(&sc.graph, &sc.params, &sc.initial, tr.m0).unwrap();
    let boxes = sys.boxes().unwrap();
    let s = [tr.final_state.s[0], tr.final_state.s[1]];
    let c = [tr.cumulative_infected[0], tr.cumulative_infected[1]];
    let in_s = boxes.contains_susceptible(s, tr.m0);
    let in_i = boxes.contains_cumulative(c);
    let curve = sys.curve_membership_residual(s).unwrap();
    verdict(
        in_s && in_i && curve <= 1e-3,
        format!(
            "S = ({:.5}, {:.5}) in omega_S: {in_s}; I = ({:.4}, {:.4}) in omega_I: {in_i}; curve residual {curve:.2e} (bound 1e-3)",
            s[0], s[1], c[0], c[1]
        ),
    )
}

fn lambert() -> Verdict {
    const INV_E: f64 = 1.0 / std::f64::consts::E;
    let mut rng = StdRng::seed_from_u64(6);
    let rel = |w: f64, x: f64| (w * w.exp() - x).abs() / x.abs();
    let (mut worst0, mut worst1) = (0.0f64, 0.0f64);
    for k in 0..1_000_000 {
        let x = match k % 3 {
            0 => rng.random_range(-INV_E..0.0),
            1 => 10f64.powf(rng.random_range(-300.0..300.0)),
            _ => -(10f64.powf(rng.random_range(-300.0..0.0)) * INV_E),
        };
        if x == 0.0 {
            continue;
        }
        worst0 = worst0.max(rel(lambert_w0(x).unwrap(), x));
    }
    for k in 0..1_000_000 {
        let x = if k % 2 == 0 {
            rng.random_range(-INV_E..-1e-3)
        } else {
            -(10f64.powf(rng.random_range(-300.0..0.0)) * INV_E)
        };
        worst1 = worst1.max(rel(lambert_wm1(x).unwrap(), x));
    }
    let bp = [lambert_w0(-INV_E).unwrap(), lambert_wm1(-INV_E).unwrap()];
    let bp_err = bp.iter().map(|w| (w + 1.0).abs()).fold(0.0, f64::max);
    let specials = lambert_w0(0.0).unwrap() == 0.0 && (lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() <= 1e-15;
    verdict(
        worst0 <= 1e-12 && worst1 <= 1e-12 && bp_err <= 1e-8 && specials,
        format!("worst relative residual W0 {worst0:.1e}, W-1 {worst1:.1e} (bound 1e-12); branch point error {bp_err:.1e} (bound 1e-8)"),
    )
}

fn peak_delays() -> Verdict {
    let values: Vec<f64> = (1..=19).map(|k| 0.05 * k as f64).collect();
    let text = format!(
        "preset = \"two_vertex\"\n[scheme]\nt_end = 400.0\nscalar_every = 100\n[output]\ndirectory = \"\"\ntrajectory = \"\"\nsummary = \"\"\nsweep = \"\"\n[sweep]\nparameter = \"overrides.lambda1\"\nvalues = {values:?}\n"
    );
    let outcome = sweep(&parse_config_str(&text).unwrap(), None).unwrap();
    let delays: Vec<(f64, f64)> = values
        .iter()
        .zip(&outcome.rows)
        .map(|(&l, r)| {
            let s = r.as_ref().unwrap();
            (l, s.vertices[1].peak_time - s.vertices[0].peak_time)
        })
        .collect();
    let wrong_sign: Vec<String> =
        delays.iter().filter(|(l, d)| *l >= 0.1 - 1e-12 && *d >= 0.0).map(|(l, d)| format!("{l:.2}:{d:+.3}")).collect();

    let sc = preset("two_vertex", &[("d", 1e-3)]);
    let slow = run_to(&sc, 0.05, 0.01, 3000.0).peaks.delay(0, 1);
    let within = slow > 1e4 / 3.0 && slow < 3e4;
    verdict(
        wrong_sign.is_empty() && within,
        format!(
            "lambda1 >= 0.1 with delay >= 0: [{}]; d=1e-3 delay {slow:.2} (needs 3.3e3..3e4)",
            wrong_sign.join(", ")
        ),
    )
}

fn travelling_wave() -> Verdict {
    let sc = preset("lattice(24)", &[("d", 1e-3)]);
    let tr = run_to(&sc, 0.05, 0.01, 7000.0);
    let times = tr.peaks.times();
    let increasing = times.windows(2).all(|w| w[1] > w[0]);
    let n = times.len() as f64;
    let xs: Vec<f64> = (0..times.len()).map(|k| k as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, times.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&times).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = times.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    verdict(
        increasing && r2 >= 0.99,
        format!(
            "{} vertices, peaks {:.1}..{:.1}, strictly increasing: {increasing}, R^2 {r2:.5} (bound 0.99)",
            times.len(),
            times[0],
            times[times.len() - 1]
        ),
    )
}

fn order(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| ((a[k] - b[k]) / (b[k] - c[k])).abs().log2())
}

fn convergence_orders() -> Verdict {
    let sc = preset("two_vertex", &[]);
    let q = |dt: f64, dx: f64| {
        let tr = run_to(&sc, dt, dx, 40.0);
        [tr.final_state.i[0], tr.final_state.i[1], tr.final_state.s[1]]
    };
    let time = order(q(0.02, 0.01), q(0.01, 0.01), q(0.005, 0.01));
    let space = order(q(1e-3, 0.1), q(1e-3, 0.05), q(1e-3, 0.025));
    let ok = time.iter().all(|p| (p - 1.0).abs() <= 0.3) && space.iter().all(|p| (p - 2.0).abs() <= 0.3);
    verdict(
        ok,
        format!(
            "time orders (I1, I2, S2 at t=40) {:.3}/{:.3}/{:.3}, space orders {:.3}/{:.3}/{:.3}",
            time[0], time[1], time[2], space[0], space[1], space[2]
        ),
    )
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("discrete mass conservation", mass_conservation),
        ("positivity on random admissible graphs", positivity),
        ("symmetric final size", symmetric_final_size),
        ("manifold residual", manifold_residuals),
        ("two-vertex boxes and curve", two_vertex_boxes),
        ("Lambert W round trips", lambert),
        ("peak-delay signs and magnitude", peak_delays),
        ("travelling wave on lattice(24)", travelling_wave),
        ("self-convergence orders", convergence_orders),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {status} {name}: {} [{:.1?}]", k + 1, v.detail, start.elapsed());
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
