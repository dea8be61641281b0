//! One pass/fail line per acceptance criterion. Exits non-zero if any fails.
//!
//! Criteria 4 and 5 share one seeded full-size comparison run.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use agc_cli::compare::{run_comparison, ComparisonReport, Tuning};
use agc_cli::config::RunConfig;
use agc_core::lqrsyn::lqr_gain_matrix;
use agc_core::numkern::{frobenius_norm, Matrix};
use agc_core::plant::{DF1, DF2};
use agc_core::psoopt::{fitness, FitnessSettings};
use agc_core::*;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[rustfmt::skip]
const PRINTED_A: [[f64; 11]; 11] = [
    [-0.05, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -6.0, 0.0, 0.0],
    [0.0, -3.33, 3.33, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-2.08, 0.0, -0.1, -6.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-4.16, 0.0, 0.0, -12.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -0.05, 6.0, 0.0, 0.0, 6.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, -3.33, 3.33, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -2.08, 0.0, -0.1, -6.1, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -4.16, 0.0, 0.0, -12.5, 0.0, 0.0, 0.0],
    [3.42, 0.0, 0.0, 0.0, -3.42, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
];

fn reference_lqr_pi_gain() -> FeedbackGain {
    FeedbackGain::full(Matrix::from_rows(&[
        [0.4896, 1.0873, 2.3995, 0.7172, 0.026, 0.0026, 0.1621, 0.053, 0.823, 1.0, 0.0],
        [0.026, 0.0026, 0.1621, 0.053, 0.4896, 1.0873, 2.3995, 0.7172, 0.823, 0.0, 1.0],
    ]))
    .unwrap()
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

fn criterion_1() -> Check {
    let m = paper_model();
    let mut b = Matrix::zeros(11, 2);
    b[(2, 0)] = 6.25;
    b[(3, 0)] = 12.5;
    b[(6, 1)] = 6.25;
    b[(7, 1)] = 12.5;
    let golden = m.a == Matrix::from_rows(&PRINTED_A) && m.b == b;
    let exact = from_params(&PlantParams::PAPER).map_err(|e| e.to_string())?;
    let gap = max_abs_diff(&exact.a, &m.a);
    ensure(
        golden && gap <= 0.06 && exact.b == m.b,
        format!("golden A/B {golden}, max |A_params - A_printed| = {gap:.4} (limit 0.06)"),
    )
}

fn care_ok(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<CareSolution, String> {
    let sol = solve_care(a, b, q, r).map_err(|e| e.to_string())?;
    if !sol.residual_within_bound() || !sol.is_symmetric() || !sol.is_positive_semidefinite() {
        return Err(format!("residual {:e}, symmetric {}, psd {}", sol.residual, sol.is_symmetric(), sol.is_positive_semidefinite()));
    }
    Ok(sol)
}

fn criterion_2() -> Check {
    let m = paper_model();
    let (q, r) = (Matrix::identity(11), Matrix::identity(2));
    let sol = care_ok(&m.a, &m.b, &q, &r)?;
    let gain = lqr_gain(&sol, &m.b, &r).map_err(|e| e.to_string())?;
    let traj = simulate(&m, &gain, &Scenario::step(Area::One, 0.01)).map_err(|e| e.to_string())?;
    let last = traj.states.last().unwrap();
    let tail = last[DF1].abs().max(last[DF2].abs());

    let one = Matrix::identity(1);
    let scalar = care_ok(&one.scale(-1.0), &one, &one, &one)?;
    let scalar_err = (scalar.p[(0, 0)] - (2f64.sqrt() - 1.0)).abs();
    let di_a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
    let di_b = Matrix::from_rows(&[[0.0], [1.0]]);
    let di = care_ok(&di_a, &di_b, &Matrix::identity(2), &one)?;
    let k = lqr_gain_matrix(&di.p, &di_b, &one).map_err(|e| e.to_string())?;
    let di_err = (k[(0, 0)] - 1.0).abs().max((k[(0, 1)] - 3f64.sqrt()).abs());

    // Random systems with full actuation are always stabilizable.
    let mut runner = TestRunner::new(PropConfig { cases: 64, failure_persistence: None, ..PropConfig::default() });
    let prop = runner.run(
        &(prop::collection::vec(-2.0..2.0f64, 9), prop::collection::vec(0.1..3.0f64, 3)),
        |(a, q)| {
            let a = Matrix::from_row_major(3, 3, a);
            let q = Matrix::diagonal(&q);
            let i3 = Matrix::identity(3);
            prop_assert!(care_ok(&a, &i3, &q, &i3).is_ok());
            Ok(())
        },
    );

    ensure(
        tail < 1e-6 && scalar_err < 1e-6 && di_err < 1e-6 && prop.is_ok(),
        format!(
            "paper residual {:e} (bound {:e}), |df| at 120 s {tail:.2e}, scalar err {scalar_err:.1e}, double integrator err {di_err:.1e}, random systems {}",
            sol.residual,
            1e-8 * (1.0 + frobenius_norm(&sol.p)),
            if prop.is_ok() { "ok".to_string() } else { format!("{prop:?}") }
        ),
    )
}

fn criterion_3() -> Check {
    let m = paper_model();
    let traj = simulate(&m, &reference_lqr_pi_gain(), &Scenario::step(Area::One, 0.01)).map_err(|e| e.to_string())?;
    let band = simkit::DEFAULT_SETTLING_BAND;
    let u1 = metrics(&traj, Channel::Df1, band).map_err(|e| e.to_string())?.peak_undershoot;
    let u2 = metrics(&traj, Channel::Df2, band).map_err(|e| e.to_string())?.peak_undershoot;
    ensure(
        (-0.045..=-0.02).contains(&u1) && (-0.06..=-0.02).contains(&u2),
        format!("delf11 undershoot {u1:.5} in [-0.045, -0.02], delf21 undershoot {u2:.5} in [-0.06, -0.02]"),
    )
}

fn full_run(seed: u64) -> &'static ComparisonReport {
    static RUNS: OnceLock<std::sync::Mutex<BTreeMap<u64, &'static ComparisonReport>>> = OnceLock::new();
    let mut map = RUNS.get_or_init(Default::default).lock().unwrap();
    map.entry(seed).or_insert_with(|| {
        let mut cfg = RunConfig::default();
        cfg.set_seed(seed);
        Box::leak(Box::new(run_comparison(&cfg, &mut ()).expect("full run")))
    })
}

fn criterion_4() -> Check {
    let report = full_run(0);
    let mut failures = Vec::new();
    let mut checked = 0;
    for row in report.rows().filter(|r| r.controller == "lqr_pi") {
        let get = |c: &str| report.metrics(c, row.scenario_index, row.channel).unwrap();
        let (i, l, p) = (get("integral"), get("lqr_pi"), get("pso_k"));
        let label = agc_cli::compare::delf_label(row.channel, row.disturbance_area);
        checked += 1;
        if !(p.peak_undershoot.abs() <= l.peak_undershoot.abs() && l.peak_undershoot.abs() <= i.peak_undershoot.abs()) {
            failures.push(format!(
                "{label} undershoot {:.6}/{:.6}/{:.6}",
                p.peak_undershoot, l.peak_undershoot, i.peak_undershoot
            ));
        }
        if !(p.peak_overshoot <= l.peak_overshoot && l.peak_overshoot <= i.peak_overshoot) {
            failures.push(format!(
                "{label} overshoot {:.6}/{:.6}/{:.6}",
                p.peak_overshoot, l.peak_overshoot, i.peak_overshoot
            ));
        }
        let settle = |s: Settling| s.seconds().unwrap_or(f64::INFINITY);
        if settle(p.settling_time) < settle(l.settling_time) {
            failures.push(format!("{label} settling {}/{}", p.settling_time, l.settling_time));
        }
    }
    let detail = format!(
        "seed 0, {checked} channels, band ±{} Hz; violations (pso_k/lqr_pi[/integral]): {}",
        report.settling_band,
        if failures.is_empty() { "none".to_string() } else { failures.join("; ") }
    );
    ensure(failures.is_empty() && checked == 4, detail)
}

fn criterion_5() -> Check {
    let model = paper_model();
    let settings = FitnessSettings::default();
    let eval = |g: &FeedbackGain| fitness(&g.to_position(), GainMask::Full, &model, &settings).map_err(|e| e.to_string());
    let zero = eval(&FeedbackGain::zero())?;
    let lqr = eval(&full_run(0).controller("lqr_pi").unwrap().gain)?;
    let mut reports = Vec::new();
    let mut passed = false;
    for seed in 0..3 {
        let c = full_run(seed).controller("pso_k").unwrap();
        let Tuning::Swarm { history, best_fitness, .. } = &c.tuning else { unreachable!() };
        let monotone = history.len() == 100 && history.windows(2).all(|w| w[1] <= w[0]);
        let ok = monotone && *best_fitness < zero && *best_fitness < lqr;
        reports.push(format!("seed {seed}: pso_k {best_fitness:.4e}, monotone {monotone}, {}", if ok { "pass" } else { "fail" }));
        if ok {
            passed = true;
            break;
        }
    }
    ensure(
        passed,
        format!("zero gain {zero:.4e}, lqr_pi(I,I) {lqr:.4e}; {}", reports.join("; ")),
    )
}

fn criterion_6() -> Check {
    let m = paper_model();
    let gains = [
        ("lqr_pi(I,I)", {
            let sol = solve_care(&m.a, &m.b, &Matrix::identity(11), &Matrix::identity(2)).map_err(|e| e.to_string())?;
            lqr_gain(&sol, &m.b, &Matrix::identity(2)).map_err(|e| e.to_string())?
        }),
        ("integral", FeedbackGain::integral(0.05, 0.05)),
    ];
    let sim = |g: &FeedbackGain, s: &Scenario| simulate(&m, g, s).map_err(|e| e.to_string());
    let (mut lin, mut swap) = (0.0f64, 0.0f64);
    for (_, g) in &gains {
        let a = sim(g, &Scenario::step(Area::One, 0.01))?;
        let b = sim(g, &Scenario::step(Area::One, 0.03))?;
        let scale = a.states.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for (xa, xb) in a.states.iter().zip(&b.states) {
            for (va, vb) in xa.iter().zip(xb) {
                lin = lin.max((3.0 * va - vb).abs() / (3.0 * scale));
            }
        }
        let mirrored = sim(g, &Scenario::step(Area::Two, 0.01))?;
        for (xa, xb) in a.states.iter().zip(&mirrored.states) {
            swap = swap.max((xa[DF1] - xb[DF2]).abs()).max((xa[DF2] - xb[DF1]).abs());
        }
    }
    let base = Scenario::step(Area::One, 0.01);
    let coarse = ise(&sim(&gains[0].1, &base)?).map_err(|e| e.to_string())?;
    let fine = ise(&sim(&gains[0].1, &base.with_dt(0.0025))?).map_err(|e| e.to_string())?;
    let refine = (coarse - fine).abs() / fine;

    let dt = 1e-3;
    let n = (40.0 / dt) as usize;
    let e: Vec<f64> = (0..=n).map(|k| (-(k as f64) * dt).exp()).collect();
    let oracle = ise(&Trajectory::from_frequencies(dt, &e, &vec![0.0; e.len()])).map_err(|e| e.to_string())?;

    ensure(
        lin <= 1e-9 && swap <= 1e-9 && refine <= 1e-6 && (oracle - 0.25).abs() <= 1e-4,
        format!(
            "linearity {lin:.1e}, swap {swap:.1e}, dt refinement {refine:.1e}, exponential ISE {oracle:.6}"
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 11
[pso]
population = 12
iterations = 8
[fitness]
horizon = 20.0
[[scenarios]]
area = 1
horizon = 40.0
[[scenarios]]
area = 2
horizon = 40.0
"#;

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "dat")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn criterion_7() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_agc"))
            .args(["run", "--seed", "11", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("agc run failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        runs.push(outputs(&out));
    }
    let tables = runs[0].keys().filter(|k| k.ends_with(".csv") && !k.starts_with("traj_")).count();
    let dats = runs[0].keys().filter(|k| k.ends_with(".dat")).count();
    let differing: Vec<&String> = runs[0]
        .iter()
        .filter(|(k, v)| runs[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    ensure(
        runs[0].len() == runs[1].len() && differing.is_empty() && tables >= 6 && dats == 12,
        format!("{tables} table/gain CSVs and {dats} .dat traces compared, differing: {differing:?}"),
    )
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 7] = [
        ("matrix fidelity", criterion_1),
        ("CARE correctness", criterion_2),
        ("LQR-PI response bands", criterion_3),
        ("controller ordering", criterion_4),
        ("PSO behaviour", criterion_5),
        ("simulation invariants", criterion_6),
        ("end-to-end determinism", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{tag}] {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
