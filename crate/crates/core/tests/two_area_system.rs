use agc_core::lqrsyn::{lqr_gain_matrix, solve_care_with, CareOptions};
use agc_core::numkern::frobenius_norm;
use agc_core::plant::{DF1, DF2, N_STATES};
use agc_core::psoopt::FitnessScenarios;
use agc_core::*;
use proptest::prelude::*;

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

fn reference_gain() -> FeedbackGain {
    FeedbackGain::full(Matrix::from_rows(&[
        [0.4896, 1.0873, 2.3995, 0.7172, 0.026, 0.0026, 0.1621, 0.053, 0.823, 1.0, 0.0],
        [0.026, 0.0026, 0.1621, 0.053, 0.4896, 1.0873, 2.3995, 0.7172, 0.823, 0.0, 1.0],
    ]))
    .unwrap()
}

fn lqr_identity() -> (CareSolution, FeedbackGain) {
    let m = paper_model();
    let q = Matrix::identity(11);
    let r = Matrix::identity(2);
    let sol = solve_care(&m.a, &m.b, &q, &r).unwrap();
    let gain = lqr_gain(&sol, &m.b, &r).unwrap();
    (sol, gain)
}

#[test]
fn printed_matrices_are_golden() {
    let m = paper_model();
    assert_eq!(m.a, Matrix::from_rows(&PRINTED_A));
    let mut b = Matrix::zeros(11, 2);
    b[(2, 0)] = 6.25;
    b[(3, 0)] = 12.5;
    b[(6, 1)] = 6.25;
    b[(7, 1)] = 12.5;
    assert_eq!(m.b, b);
}

#[test]
fn open_loop_frequency_stays_droop_limited() {
    let m = paper_model();
    let s = Scenario::step(Area::One, 0.01).with_horizon(200.0);
    let traj = simulate(&m, &FeedbackGain::zero(), &s).unwrap();
    assert!(!traj.is_diverged());
    for x in &traj.states {
        assert!(x[DF1].abs() <= 0.2 && x[DF2].abs() <= 0.2);
    }
}

#[test]
fn care_on_paper_system() {
    let m = paper_model();
    let (sol, gain) = lqr_identity();
    assert!(sol.residual_within_bound(), "residual {}", sol.residual);
    assert!(sol.is_symmetric());
    assert!(sol.is_positive_semidefinite());
    let r = care_residual(&m.a, &m.b, &Matrix::identity(11), &Matrix::identity(2), &sol.p).unwrap();
    assert!(r <= 1e-8 * (1.0 + frobenius_norm(&sol.p)));

    let s = Scenario::step(Area::One, 0.01);
    let traj = simulate(&m, &gain, &s).unwrap();
    let last = traj.states.last().unwrap();
    assert_eq!(*traj.times.last().unwrap(), 120.0);
    assert!(last[DF1].abs() < 1e-6 && last[DF2].abs() < 1e-6);

    // Diagnostic comparison with the reference LQR-PI gain.
    let k = gain.matrix();
    let reference = reference_gain();
    let gap = frobenius_norm(&k.sub(reference.matrix()).unwrap());
    eprintln!("LQR(I,I) K = {k:?}\n‖K − K_reference‖_F = {gap:.4}");
}

#[test]
fn refinement_agrees_with_plain_integration() {
    let m = paper_model();
    let q = Matrix::identity(11);
    let r = Matrix::identity(2);
    let plain = solve_care_with(
        &m.a,
        &m.b,
        &q,
        &r,
        &CareOptions {
            newton_refine: false,
            ..CareOptions::default()
        },
    )
    .unwrap();
    let refined = solve_care(&m.a, &m.b, &q, &r).unwrap();
    let rel = frobenius_norm(&plain.p.sub(&refined.p).unwrap()) / frobenius_norm(&refined.p);
    assert!(rel <= 1e-6, "relative gap {rel}");
    assert!(refined.residual <= plain.residual);
}

#[test]
fn gain_is_invariant_to_common_weight_scaling() {
    let m = paper_model();
    let (_, base) = lqr_identity();
    for alpha in [0.1, 10.0] {
        let q = Matrix::identity(11).scale(alpha);
        let r = Matrix::identity(2).scale(alpha);
        let sol = solve_care(&m.a, &m.b, &q, &r).unwrap();
        let k = lqr_gain_matrix(&sol.p, &m.b, &r).unwrap();
        let rel = frobenius_norm(&k.sub(base.matrix()).unwrap()) / frobenius_norm(base.matrix());
        assert!(rel <= 1e-8, "alpha {alpha}: {rel}");
    }
}

fn assert_traces_close(a: &Trajectory, b: &Trajectory, scale: f64, tol: f64) {
    assert_eq!(a.len(), b.len());
    for (xa, xb) in a.states.iter().zip(&b.states) {
        for i in 0..N_STATES {
            assert!((scale * xa[i] - xb[i]).abs() <= tol * (1e-12 + xb[i].abs().max(scale * xa[i].abs())));
        }
    }
}

#[test]
fn response_is_linear_in_disturbance() {
    let m = paper_model();
    let (_, gain) = lqr_identity();
    let base = simulate(&m, &gain, &Scenario::step(Area::One, 0.01).with_horizon(60.0)).unwrap();
    for alpha in [0.5, 2.0] {
        let scaled = simulate(&m, &gain, &Scenario::step(Area::One, 0.01 * alpha).with_horizon(60.0)).unwrap();
        assert_traces_close(&base, &scaled, alpha, 1e-9);
    }
}

#[test]
fn symmetric_gains_give_mirrored_responses() {
    let m = paper_model();
    let (_, lqr) = lqr_identity();
    assert!(frobenius_norm(&lqr.area_swap().matrix().sub(lqr.matrix()).unwrap()) < 1e-9);
    for gain in [lqr, FeedbackGain::integral(0.05, 0.05)] {
        let one = simulate(&m, &gain, &Scenario::step(Area::One, 0.01).with_horizon(60.0)).unwrap();
        let two = simulate(&m, &gain, &Scenario::step(Area::Two, 0.01).with_horizon(60.0)).unwrap();
        for (a, b) in one.channel(Channel::Df1).zip(two.channel(Channel::Df2)) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn reference_gain_is_not_swap_symmetric() {
    // The tie-line column carries the same sign in both rows.
    let g = reference_gain();
    let swapped = g.area_swap();
    assert_eq!(swapped.matrix()[(0, 8)], -0.823);
    assert_ne!(&swapped, &g);
}

#[test]
fn ise_is_stable_under_dt_refinement() {
    let m = paper_model();
    let (_, gain) = lqr_identity();
    let coarse = ise(&simulate(&m, &gain, &Scenario::step(Area::One, 0.01).with_horizon(60.0)).unwrap()).unwrap();
    let fine = ise(
        &simulate(&m, &gain, &Scenario::step(Area::One, 0.01).with_horizon(60.0).with_dt(0.0025)).unwrap(),
    )
    .unwrap();
    assert!(((coarse - fine) / fine).abs() < 1e-6, "{coarse} vs {fine}");
}

/// Trapezoid sum written out independently of the library accumulator.
fn trapezoid_ise(traj: &Trajectory) -> f64 {
    let g: Vec<f64> = traj
        .states
        .iter()
        .map(|x| 0.5 * (x[DF1].powi(2) + x[DF2].powi(2)))
        .collect();
    let n = g.len();
    let mut s = 0.0;
    for k in 0..n - 1 {
        s += 0.5 * traj.dt * (g[k] + g[k + 1]);
    }
    s
}

#[test]
fn fitness_equals_summed_ise() {
    let m = paper_model();
    let settings = FitnessSettings::default();
    let gain = reference_gain();
    let f = fitness(&gain.to_position(), GainMask::Full, &m, &settings).unwrap();
    let mut library = 0.0;
    let mut oracle = 0.0;
    for area in [Area::One, Area::Two] {
        let traj = simulate(&m, &gain, &Scenario::step(area, 0.01).with_horizon(60.0)).unwrap();
        library += ise(&traj).unwrap();
        oracle += trapezoid_ise(&traj);
    }
    assert_eq!(f, library);
    assert!(((f - oracle) / oracle).abs() < 1e-10);

    let open = fitness(&[0.0; 22], GainMask::Full, &m, &settings).unwrap();
    assert!(open.is_finite() && open > f, "open {open} vs reference {f}");

    let single = FitnessSettings {
        scenarios: FitnessScenarios::Area1Only,
        ..settings
    };
    let one = fitness(&gain.to_position(), GainMask::Full, &m, &single).unwrap();
    assert!(one < f);
}

#[test]
fn exact_and_printed_models_respond_alike() {
    let printed = paper_model();
    let exact = from_params(&PlantParams::PAPER).unwrap();
    let (_, gain) = lqr_identity();
    let s = Scenario::step(Area::One, 0.01).with_horizon(60.0);
    let a = metrics(&simulate(&printed, &gain, &s).unwrap(), Channel::Df1, 5e-4).unwrap();
    let b = metrics(&simulate(&exact, &gain, &s).unwrap(), Channel::Df1, 5e-4).unwrap();
    assert!((a.peak_undershoot - b.peak_undershoot).abs() < 0.1 * a.peak_undershoot.abs());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn metric_peaks_bound_every_sample(ki1 in 0.005f64..0.06, ki2 in 0.005f64..0.06, area2 in any::<bool>()) {
        let m = paper_model();
        let area = if area2 { Area::Two } else { Area::One };
        let traj = simulate(&m, &FeedbackGain::integral(ki1, ki2), &Scenario::step(area, 0.01).with_horizon(30.0)).unwrap();
        for ch in Channel::ALL {
            let r = metrics(&traj, ch, 5e-4).unwrap();
            prop_assert!(r.peak_undershoot <= 0.0 && r.peak_overshoot >= 0.0);
            for v in traj.channel(ch) {
                prop_assert!(r.peak_undershoot <= v && v <= r.peak_overshoot);
            }
            if let Settling::At(t) = r.settling_time {
                prop_assert!(t <= 30.0);
            }
        }
    }
}
