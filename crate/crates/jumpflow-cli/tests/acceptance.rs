//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured quantity, the threshold and the
//! wall time against its budget. The tests hold a shared lock so that wall
//! times are measured one at a time.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use jumpflow::brackets::{bracket_chain, Convention, GridSpec};
use jumpflow::coeffs::families::*;
use jumpflow::coeffs::CoefficientSet;
use jumpflow::flow::{max_inverse_defect, simulate, SimConfig, Simulator};
use jumpflow::kernel::{self, DuhamelOptions};
use jumpflow::levy::{LevyModel, Profile};
use jumpflow::linalg;
use jumpflow::malliavin::{analyze_path, ibp_test, laplace_scan, reduced_matrix, reduced_matrix_series, Analysis, Covariance, Functional};
use jumpflow::operator::{Operator, OperatorKind, OperatorSpec, Resolution, TestFunction};
use jumpflow::quad::{self, Tolerance};
use jumpflow::reversal::{reversal_check, ReversalMode};
use jumpflow::stats::line_fit;
use jumpflow::{Matrix, Vector};
use jumpflow_cli::{run_config, ExperimentConfig, RunOptions};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line (bypassing the test harness capture) and returns
/// whether the criterion holds, runtime budget included.
fn verdict(id: u32, name: &str, ok: bool, detail: String, started: Instant, budget: Duration) -> bool {
    let took = started.elapsed();
    let pass = ok && took <= budget;
    let line = format!(
        "ACCEPTANCE {id:>2} {} {name}: {detail} [{:.1}s / budget {}s]\n",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

// Truncations keep the per-path jump count in the hundreds; the dropped
// second moment enters every check identically on both sides.
fn model1() -> LevyModel<1> {
    LevyModel::<1>::smooth(1.0, 1.0).unwrap().with_trunc_low(0.01).unwrap()
}

fn model2() -> LevyModel<2> {
    LevyModel::<2>::smooth(1.0, 1.0).unwrap().with_trunc_low(0.02).unwrap()
}

fn systems1() -> Vec<CoefficientSet<1>> {
    vec![additive::<1>(), multiplicative(0.4, 0.5), sine(0.4, 0.5)]
}

fn systems2() -> Vec<CoefficientSet<2>> {
    vec![
        constant(Matrix::<2>::new(1.0, 0.5, 0.0, 2.0)),
        linear(Matrix::<2>::new(-0.5, 1.0, -1.0, -0.5)),
        kinetic(),
    ]
}

fn x1() -> Vector<1> {
    Vector::<1>::new(0.8)
}

fn x2() -> Vector<2> {
    Vector::<2>::new(0.3, -0.2)
}

#[test]
fn criterion_01_jacobian_inverse_identity() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SimConfig::new(1.0, 10_000, 11).with_dt_max(1e-3);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in systems1() {
        let d = max_inverse_defect(&c, &model1(), &cfg, &x1()).unwrap();
        parts.push(format!("{}={d:.1e}", c.name()));
        worst = worst.max(d);
    }
    for c in systems2() {
        let d = max_inverse_defect(&c, &model2(), &cfg, &x2()).unwrap();
        parts.push(format!("{}={d:.1e}", c.name()));
        worst = worst.max(d);
    }
    let ok = worst <= 1e-6;
    let detail = format!("max ‖JK−I‖ = {worst:.2e} ≤ 1e-6 ({})", parts.join(", "));
    assert!(verdict(1, "Jacobian inverse identity", ok, detail, start, Duration::from_secs(60)));
}

#[test]
fn criterion_02_linear_oracle() {
    let _g = serial();
    let start = Instant::now();
    let a = Matrix::<2>::new(-0.5, 1.0, -1.0, 0.2);
    let c = linear(a);
    let m = LevyModel::<2>::smooth(1.0, 1.0).unwrap().silenced();
    let x0 = Vector::<2>::new(1.0, -0.5);
    let p = simulate(&c, &m, &SimConfig::new(1.0, 1, 0), &x0, 0).unwrap();
    let e = linalg::expm(&a);
    let j = p.jacobian.as_ref().unwrap().last().copied().unwrap();
    let k = p.inverse_jacobian.as_ref().unwrap().last().copied().unwrap();
    let ex = (p.final_state() - e * x0).amax();
    let ej = (j - e).amax();
    let ek = (k - linalg::expm(&(-a))).amax();
    let worst = ex.max(ej).max(ek);
    let detail = format!("|ΔX| = {ex:.1e}, |ΔJ| = {ej:.1e}, |ΔK| = {ek:.1e} ≤ 1e-8");
    assert!(verdict(2, "linear-system oracle", worst <= 1e-8, detail, start, Duration::from_secs(10)));
}

#[test]
fn criterion_03_time_reversal_round_trip() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SimConfig::new(1.0, 10_000, 13).with_dt_max(1e-3);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in systems1() {
        let r = reversal_check(&c, &model1(), &cfg, &x1(), ReversalMode::Reduced).unwrap();
        parts.push(format!("{}={:.1e}", c.name(), r.max_roundtrip_error));
        worst = worst.max(r.max_roundtrip_error);
    }
    for c in systems2() {
        let r = reversal_check(&c, &model2(), &cfg, &x2(), ReversalMode::Reduced).unwrap();
        parts.push(format!("{}={:.1e}", c.name(), r.max_roundtrip_error));
        worst = worst.max(r.max_roundtrip_error);
    }
    let detail = format!("max roundtrip error = {worst:.2e} ≤ 1e-6 ({})", parts.join(", "));
    assert!(verdict(3, "time-reversal round trip", worst <= 1e-6, detail, start, Duration::from_secs(60)));
}

#[test]
fn criterion_04_uh_checker() {
    let _g = serial();
    let start = Instant::now();
    let grid = GridSpec::new(Vector::<2>::new(-2.0, -2.0), Vector::<2>::new(2.0, 2.0), 0.25);
    let c0 = |c: &CoefficientSet<2>, j0| bracket_chain(c, j0, Convention::default(), &grid).unwrap().check_uh().unwrap().c0;
    let k1 = c0(&kinetic(), 1);
    let k2 = c0(&kinetic(), 2);
    let id = c0(&additive::<2>(), 1);
    let ok = k1 == 0.0 && (k2 - 1.0).abs() <= 1e-6 && id == 1.0;
    let detail = format!("kinetic c0(j0=1) = {k1}, c0(j0=2) = {k2:.12}, identity c0 = {id}");
    assert!(verdict(4, "UH checker", ok, detail, start, Duration::from_secs(10)));
}

/// Worst column-wise relative gap between the finite-difference and
/// closed-form jump derivatives over `n` paths.
fn var_gap<const D: usize>(c: &CoefficientSet<D>, m: &LevyModel<D>, x0: &Vector<D>, n: u64) -> f64 {
    let sim = Simulator::new(c, m, &SimConfig::new(1.0, n as usize, 17)).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let a = analyze_path(&sim, x0, i, Analysis { integrals: false, fd_eps: Some(1e-5) }).unwrap();
        let fd = a.fd_derivative.unwrap();
        let cf = a.closed_form_derivative();
        let floor = 1e-8 * cf.norm();
        for j in 0..D {
            let den = cf.column(j).norm().max(floor).max(1e-300);
            worst = worst.max((fd.column(j) - cf.column(j)).norm() / den);
        }
    }
    worst
}

#[test]
fn criterion_05_bismut_variation_identity() {
    let _g = serial();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in systems1() {
        let g = var_gap(&c, &model1(), &x1(), 100);
        parts.push(format!("{}={g:.1e}", c.name()));
        worst = worst.max(g);
    }
    for c in systems2() {
        let g = var_gap(&c, &model2(), &x2(), 100);
        parts.push(format!("{}={g:.1e}", c.name()));
        worst = worst.max(g);
    }
    let detail = format!("max relative gap FD vs JΣ = {worst:.2e} ≤ 1e-3 ({})", parts.join(", "));
    assert!(verdict(5, "Bismut variation identity", worst <= 1e-3, detail, start, Duration::from_secs(60)));
}

#[test]
fn criterion_06_integration_by_parts() {
    let _g = serial();
    let start = Instant::now();
    let cfg = SimConfig::new(1.0, 100_000, 7).with_dt_max(1e-2);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    let one = [(Functional::TanhCoord(0), 0), (Functional::One, 0)];
    for c in systems1() {
        for r in ibp_test(&c, &model1(), &cfg, &x1(), &one, Some(1e-5)).unwrap() {
            worst = worst.max(r.z_score().abs());
            pairs += 1;
        }
    }
    let two = [
        (Functional::TanhCoord(0), 0),
        (Functional::TanhCoord(0), 1),
        (Functional::TanhCoord(1), 0),
        (Functional::TanhCoord(1), 1),
    ];
    for c in [linear(Matrix::<2>::new(-0.5, 1.0, -1.0, -0.5)), kinetic()] {
        for r in ibp_test(&c, &model2(), &cfg, &x2(), &two, Some(1e-5)).unwrap() {
            worst = worst.max(r.z_score().abs());
            pairs += 1;
        }
    }
    let detail = format!("max |lhs−rhs| = {worst:.2} pooled stderr ≤ 4 over {pairs} pairs at n = 1e5");
    assert!(verdict(6, "integration by parts", worst <= 4.0 && pairs >= 6, detail, start, Duration::from_secs(300)));
}

#[test]
fn criterion_07_reduced_matrix_oracle() {
    let _g = serial();
    let start = Instant::now();
    let c = additive::<2>();
    let p = simulate(&c, &model2(), &SimConfig::new(0.7, 1, 4), &x2(), 0).unwrap();
    let gap = (reduced_matrix(&p, &c).unwrap() - Matrix::<2>::identity() * 0.7).amax();
    let k = kinetic();
    let p = simulate(&k, &model2(), &SimConfig::new(1.0, 1, 4), &x2(), 0).unwrap();
    let series = reduced_matrix_series(&p, &k).unwrap();
    let (mut lt, mut ll) = (Vec::new(), Vec::new());
    for target in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
        let (t, s) = series.iter().min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs())).unwrap();
        lt.push(t.ln());
        ll.push(linalg::min_eigen(s).0.ln());
    }
    let slope = line_fit(&lt, &ll, None).unwrap().slope;
    let ok = gap <= 1e-10 && (2.7..=3.3).contains(&slope);
    let detail = format!("|Σ̂_t − tI| = {gap:.1e} ≤ 1e-10; kinetic λ_min slope = {slope:.3} ∈ [2.7, 3.3]");
    assert!(verdict(7, "reduced Malliavin matrix oracle", ok, detail, start, Duration::from_secs(60)));
}

#[test]
fn criterion_08_laplace_decay() {
    let _g = serial();
    let start = Instant::now();
    // δ small enough that λ·uΣu stays of order one across the λ range, so
    // the tail λ values are resolved rather than underflowing to zero.
    let m = LevyModel::<2>::smooth(1.0, 0.1).unwrap().with_trunc_low(0.005).unwrap();
    let lambdas = [1.0, 10.0, 100.0, 1e3, 1e4];
    let mut ok = true;
    let mut parts = Vec::new();
    for u in [Vector::<2>::new(1.0, 0.0), Vector::<2>::new(0.0, 1.0)] {
        let l = laplace_scan(&kinetic(), &m, &SimConfig::new(0.5, 100_000, 5), &x2(), &u, &lambdas, Covariance::JumpWeighted)
            .unwrap();
        let gamma = l.scan.fitted_exponent;
        ok &= l.strictly_decreasing && gamma.is_some_and(|g| g > 0.0);
        parts.push(format!(
            "u=({},{}): strict = {} (min z {:.0}), γ̂ = {}",
            u[0],
            u[1],
            l.strictly_decreasing,
            l.min_decrease_z,
            gamma.map_or("none".into(), |g| format!("{g:.3}"))
        ));
    }
    assert!(verdict(8, "Laplace-transform decay", ok, parts.join("; "), start, Duration::from_secs(300)));
}

#[test]
fn criterion_09_operator_quadrature_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut halving: f64 = 0.0;
    for (alpha, delta) in [(1.0, 1.0), (0.5, 1.5), (1.5, 0.8)] {
        let m = LevyModel::<1>::new(alpha, delta, Profile::HardCutoff { radius: delta }, Some(0.0)).unwrap();
        let spec = OperatorSpec::new(OperatorKind::SmallJumpL0, m, additive::<1>());
        let op = Operator::new(spec.clone()).unwrap();
        let want = 2.0 * delta.powf(2.0 - alpha) / (2.0 - alpha);
        let f = TestFunction::<1>::Quadratic(Matrix::<1>::new(1.0));
        for x in [-1.0, 0.0, 2.5] {
            worst = worst.max((op.apply(&f, &Vector::<1>::new(x)).unwrap() - want).abs());
        }
        let g = TestFunction::<1>::Cos(Vector::<1>::new(1.3));
        let x = Vector::<1>::new(0.4);
        let cut = delta / 8.0;
        let a = Operator::new(spec.clone().with_cut(cut)).unwrap().apply(&g, &x).unwrap();
        let b = Operator::new(spec.with_cut(cut / 2.0)).unwrap().apply(&g, &x).unwrap();
        halving = halving.max((a - b).abs());
    }
    let ok = worst <= 1e-8 && halving <= 1e-8;
    let detail = format!("|apply x² − 2δ^(2−α)/(2−α)| = {worst:.1e} ≤ 1e-8; cut halving = {halving:.1e} ≤ 1e-8");
    assert!(verdict(9, "operator quadrature oracle", ok, detail, start, Duration::from_secs(10)));
}

#[test]
fn criterion_10_characteristic_function_oracle() {
    let _g = serial();
    let start = Instant::now();
    let m = model1();
    let c = additive::<1>();
    let psi = m
        .integrate(|z: &Vector<1>| scalar(1.0 - z[0].cos()), m.trunc_low(), m.delta(), 1)
        .unwrap()[0];
    let f = TestFunction::<1>::Cos(Vector::<1>::new(1.0));
    let xs = [Vector::<1>::new(0.0), Vector::<1>::new(0.7), Vector::<1>::new(2.0)];
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let s = kernel::semigroup(&c, &m, &SimConfig::new(1.0, 100_000, 21), &f, t, &xs).unwrap();
        for (k, x) in xs.iter().enumerate() {
            let want = (-t * psi).exp() * x[0].cos();
            worst = worst.max((s.values[k] - want).abs() / s.stderr[k]);
        }
    }
    let detail = format!("max |MC − e^(−tψ)cos x| = {worst:.2} stderr ≤ 4 at t ∈ {{0.25, 0.5, 1}}, n = 1e5");
    assert!(verdict(10, "characteristic-function semigroup oracle", worst <= 4.0, detail, start, Duration::from_secs(120)));
}

/// One-component integrand value.
fn scalar(v: f64) -> jumpflow::Vector<1> {
    Vector::<1>::new(v)
}

#[test]
fn criterion_11_density_mass() {
    let _g = serial();
    let start = Instant::now();
    let d = kernel::density(&kinetic(), &model2(), &SimConfig::new(0.5, 100_000, 5), 0.5, &x2(), None, None).unwrap();
    let ok = (0.98..=1.02).contains(&d.mass);
    let detail = format!("KDE mass = {:.5} ∈ [0.98, 1.02]", d.mass);
    assert!(verdict(11, "density mass", ok, detail, start, Duration::from_secs(120)));
}

/// `∫(1 - cos z) μ(dz)` for the d = 1 big-jump measure: adaptive radial
/// quadrature up to `R` plus the tail `1/R + sin R/R²`.
fn big_jump_symbol(m: &LevyModel<1>) -> f64 {
    let mu = m.big_jumps();
    let r_max = 400.0;
    let tol = Tolerance::rel(1e-11).with_abs(1e-13);
    let body = quad::adaptive(|r| mu.weight(r) * (1.0 - r.cos()), 0.5 * m.delta(), r_max, tol).unwrap();
    2.0 * (body + 1.0 / r_max + r_max.sin() / (r_max * r_max))
}

#[test]
fn criterion_12_generator_residual() {
    let _g = serial();
    let start = Instant::now();
    let m = LevyModel::<1>::smooth(1.0, 2.0).unwrap().with_trunc_low(0.01).unwrap();
    let c = additive::<1>();
    let op = Operator::new(OperatorSpec::new(OperatorKind::Full, m.clone(), c.clone())).unwrap();
    let f = TestFunction::<1>::Cos(Vector::<1>::new(1.0));
    let xs: Vec<Vector<1>> = [0.0, 0.6, 1.2, -0.9].iter().map(|x| Vector::<1>::new(*x)).collect();
    let (t, h) = (0.5, 0.01);
    let r = kernel::generator_residual(&c, &m, &SimConfig::new(t, 1_000_000, 3), &f, t, &xs, &op, h).unwrap();
    let psi_small = m.integrate(|z: &Vector<1>| scalar(1.0 - z[0].cos()), m.trunc_low(), m.delta(), 1).unwrap()[0];
    let psi = psi_small + big_jump_symbol(&m);
    let mut oracle_gap: f64 = 0.0;
    for row in &r.rows {
        let want = -psi * (-t * psi).exp() * row.x[0].cos();
        oracle_gap = oracle_gap.max((row.operator - want).abs()).max((row.time_derivative - want).abs());
    }
    let oracle_rel = oracle_gap / r.scale;
    let d1_ok = r.relative <= 0.05 && oracle_rel <= 0.05;

    let m2 = LevyModel::<2>::smooth(1.5, 1.0).unwrap().with_trunc_low(0.03).unwrap();
    let k = kinetic();
    let op2 = Operator::new(OperatorSpec::new(OperatorKind::Full, m2.clone(), k.clone())).unwrap();
    let f2 = TestFunction::<2>::tanh_coord(0);
    let xs2: Vec<Vector<2>> = [(0.0, 0.0), (0.5, -0.5), (-0.3, 0.8)].iter().map(|p| Vector::<2>::new(p.0, p.1)).collect();
    let r2 = kernel::generator_residual(&k, &m2, &SimConfig::new(t, 1_000_000, 3), &f2, t, &xs2, &op2, h).unwrap();
    let ok = d1_ok && r2.relative <= 0.05;
    let detail = format!(
        "d=1 residual {:.2}% and oracle gap {:.2}% of scale {:.3}; kinetic residual {:.2}% of scale {:.3} (gate 5%, n = 1e6)",
        100.0 * r.relative,
        100.0 * oracle_rel,
        r.scale,
        100.0 * r2.relative,
        r2.scale
    );
    assert!(verdict(12, "generator residual", ok, detail, start, Duration::from_secs(900)));
}

#[test]
fn criterion_13_duhamel_consistency() {
    let _g = serial();
    let start = Instant::now();
    let m = LevyModel::<2>::smooth(1.5, 2.0).unwrap().with_trunc_low(0.03).unwrap();
    let c = kinetic();
    let f = TestFunction::<2>::Tanh(Vector::<2>::new(1.0, 1.0));
    let xs: Vec<Vector<2>> = [(0.0, 0.0), (0.5, -0.5), (-0.3, 0.8)].iter().map(|p| Vector::<2>::new(p.0, p.1)).collect();
    let t = 0.5;
    let opts = DuhamelOptions::new(5, vec![kernel::uniform_axis(-4.0, 4.0, 33), kernel::stretched_axis(20.0, 1.5, 41)]);

    let cfg = SimConfig::new(t, 8000, 5);
    let degenerate = kernel::duhamel(&c, &m, &cfg, &f, t, &xs, None, &opts).unwrap();
    let t0 = kernel::semigroup(&c, &m, &cfg, &f, t, &xs).unwrap();
    let exact = degenerate.estimate.values == t0.values;

    let op = Operator::new(OperatorSpec::new(OperatorKind::BigJumpScriptL, m.clone(), c.clone()).with_resolution(Resolution::COARSE))
        .unwrap();
    let d = kernel::duhamel(&c, &m, &cfg, &f, t, &xs, Some(&op), &opts).unwrap();
    let direct = kernel::semigroup(&c, &m, &SimConfig::new(t, 100_000, 99).with_big_jumps(true), &f, t, &xs).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..xs.len() {
        let se = (d.estimate.stderr[k].powi(2) + direct.stderr[k].powi(2)).sqrt();
        worst = worst.max((d.estimate.values[k] - direct.values[k]).abs() / se);
    }
    let detail = format!(
        "ℒ≡0 equals T⁰ exactly: {exact}; Duhamel vs direct = {worst:.2} combined stderr ≤ 4 ({} sweeps)",
        d.sweeps
    );
    assert!(verdict(13, "Duhamel consistency", exact && worst <= 4.0, detail, start, Duration::from_secs(600)));
}

const DETERMINISM_CONFIGS: [&str; 4] = [
    r#"
task = "semigroup"
[system]
family = "kinetic"
dim = 2
[levy]
alpha = 1.0
delta = 1.0
trunc_low = 0.02
[sim]
t_end = 0.5
n_paths = 3000
seed = 41
big_jumps = true
[task_params]
t = 0.5
points = [[0.0, 0.0], [0.5, -0.5]]
function = { kind = "tanh", k = [1.0, 1.0] }
"#,
    r#"
task = "malliavin-scan"
[system]
family = "sine"
dim = 1
[levy]
alpha = 1.0
delta = 1.0
trunc_low = 0.01
[sim]
t_end = 0.5
n_paths = 2000
seed = 42
[task_params]
x0 = [0.8]
u = [1.0]
lambdas = [1.0, 10.0, 100.0, 1000.0]
"#,
    r#"
task = "density"
[system]
family = "multiplicative"
dim = 1
[levy]
alpha = 1.2
delta = 1.0
trunc_low = 0.01
[sim]
t_end = 0.5
n_paths = 5000
seed = 43
[task_params]
t = 0.5
x0 = [1.0]
"#,
    r#"
task = "generator-check"
[system]
family = "additive"
dim = 1
[levy]
alpha = 1.0
delta = 1.0
trunc_low = 0.02
[sim]
t_end = 0.5
n_paths = 4000
seed = 44
[task_params]
t = 0.5
points = [[0.0], [0.6]]
resolution = "coarse"
function = { kind = "cos", k = [1.0] }
"#,
];

#[test]
fn criterion_14_determinism_across_threads() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut compared = 0;
    for (i, text) in DETERMINISM_CONFIGS.iter().enumerate() {
        let cfg = ExperimentConfig::parse(text).unwrap();
        let name = format!("{}.csv", cfg.task.name());
        let mut reference: Option<Vec<u8>> = None;
        for (run, threads) in [1, 4, 8, 4].into_iter().enumerate() {
            let out = dir.path().join(format!("c{i}-r{run}-t{threads}"));
            let opts = RunOptions { threads: Some(threads), out: Some(out.clone()) };
            run_config(&cfg, &opts).unwrap();
            let bytes = std::fs::read(out.join(&name)).unwrap();
            match &reference {
                None => reference = Some(bytes),
                Some(r) => {
                    identical &= *r == bytes;
                    compared += 1;
                }
            }
        }
    }
    let detail = format!(
        "{} tasks × threads 1/4/8 plus a repeat: {compared} CSV comparisons, byte-identical = {identical}",
        DETERMINISM_CONFIGS.len()
    );
    assert!(verdict(14, "determinism", identical, detail, start, Duration::from_secs(300)));
}
