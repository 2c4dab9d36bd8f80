use std::f64::consts::FRAC_PI_2;

use pfeigen::backward::{run_backward, twisted_row};
use pfeigen::bellman::estimate_value_function;
use pfeigen::forward::{log_lambda_average, run_forward, InitialLaw};
use pfeigen::models::{neutron_preset, CirModel, RareEventModel};
use pfeigen::oracle::{build_grid_operator, power_iteration, DEFAULT_MAX_ITER};
use pfeigen::rare_event::{lambda_curve, lambda_derivative, naive_is, rate_function, replicated_conditional_is, ConditionalDesign};
use pfeigen::oracle::brute_force_deviation_prob;
use pfeigen::stats::Summary;
use proptest::prelude::*;

fn oracle_log_lambda(model: &RareEventModel, grid: usize) -> f64 {
    let op = build_grid_operator(model, grid).unwrap();
    power_iteration(&op, 1e-11, DEFAULT_MAX_ITER).unwrap().lambda_star.ln()
}

#[test]
fn particle_lambda_tracks_oracle() {
    let base = RareEventModel::new(2.0, 0.0).unwrap();
    let alphas = [-2.0, 1.0, 3.0];
    let curve = lambda_curve(&base, &alphas, 250, 500, 2, 0.0, 11).unwrap();
    for (&a, &l) in alphas.iter().zip(&curve.log_lambda_hat) {
        let exact = oracle_log_lambda(&base.with_alpha(a).unwrap(), 301);
        assert!((l - exact).abs() < 0.02, "α = {a}: {l} vs {exact}");
    }
}

#[test]
fn rate_function_is_zero_at_the_mean_slope() {
    let base = RareEventModel::new(2.0, 0.0).unwrap();
    let alphas: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.25).collect();
    let curve = lambda_curve(&base, &alphas, 200, 100, 2, 0.0, 12).unwrap();
    let slope = lambda_derivative(&curve, 0.0, 0.25).unwrap();
    // The stationary law of M is symmetric, so the mean of U is 0.
    assert!(slope.abs() < 0.02, "{slope}");
    let (i, _) = rate_function(&curve, slope).unwrap();
    assert!(i < 0.01);
    for t in [-0.5, 0.2, 0.6] {
        assert!(rate_function(&curve, t).unwrap().0 >= 0.0);
    }
}

#[test]
fn deviation_probabilities_decrease_in_delta() {
    let model = RareEventModel::new(2.0, 6.0).unwrap();
    let design = ConditionalDesign { n_particles: 40, n: 6, systems: 300, chains: 5, x0: 0.0 };
    let est = replicated_conditional_is(&model, design, &[6], &[0.6, 0.7, 0.8], 21).unwrap();
    for w in est.windows(2) {
        let slack = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        assert!(w[1].mean <= w[0].mean + slack);
    }
}

#[test]
fn naive_estimate_inside_oracle_bracket() {
    let model = RareEventModel::new(2.0, 0.0).unwrap();
    let (lo, hi) = brute_force_deviation_prob(&model, 3, 0.4, 0.0, 1024).unwrap();
    let e = naive_is(&model, 3, 0.4, 200_000, 0.0, 4).unwrap();
    assert!(e.mean >= lo - 4.0 * e.std_error && e.mean <= hi + 4.0 * e.std_error);
}

#[test]
fn value_function_variance_falls_with_n() {
    let model = neutron_preset(1.0).unwrap();
    let point = [0.6];
    let spreads: Vec<f64> = [50usize, 100, 500]
        .iter()
        .map(|&size| {
            let values: Vec<f64> = (0..30)
                .map(|s| {
                    let traj = run_forward(&model, size, 40, InitialLaw::Uniform, 1000 + s).unwrap();
                    let b = run_backward(&model, &traj).unwrap();
                    estimate_value_function(&model, &traj, &b, &point, 5).unwrap().v_hat[0]
                })
                .collect();
            Summary::of(&values).variance
        })
        .collect();
    assert!(spreads[0] > spreads[1] && spreads[1] > spreads[2], "{spreads:?}");
}

#[test]
fn cir_particle_value_function_has_steps() {
    let model = CirModel::standard(5.0).unwrap();
    let traj = run_forward(&model, 60, 40, InitialLaw::Dirac(10.0), 5).unwrap();
    let b = run_backward(&model, &traj).unwrap();
    let xs: Vec<f64> = (0..=32).map(|k| 4.0 + 0.5 * k as f64).collect();
    let est = estimate_value_function(&model, &traj, &b, &xs, 5).unwrap();
    let jumps = est.jump_locations(2);
    assert!((jumps[0] - 5.0).abs() <= 0.5 && (jumps[1] - 15.0).abs() <= 0.5, "{jumps:?}");
    assert!(est.varsigma_hat.is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn twisted_rows_are_distributions(seed in 0u64..1000, x in 0.0f64..FRAC_PI_2, delta in 0.0f64..2.0) {
        let model = neutron_preset(delta).unwrap();
        let traj = run_forward(&model, 20, 8, InitialLaw::Uniform, seed).unwrap();
        let b = run_backward(&model, &traj).unwrap();
        for p in 5..=8 {
            let row = twisted_row(&model, &traj, &b, p, x).unwrap();
            prop_assert!(row.probabilities.iter().all(|&v| v >= 0.0));
            prop_assert!((row.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_normalisation_holds(seed in 0u64..1000, alpha in -8.0f64..8.0) {
        let model = RareEventModel::new(2.0, alpha).unwrap();
        let traj = run_forward(&model, 25, 10, InitialLaw::Dirac(0.0), seed).unwrap();
        let b = run_backward(&model, &traj).unwrap();
        for p in 5..=10 {
            let mean = b.layer(p).iter().sum::<f64>() / 25.0;
            prop_assert!((mean - 1.0).abs() < 1e-10);
        }
        prop_assert!(log_lambda_average(&traj, 5).unwrap().is_finite());
    }

    #[test]
    fn oracle_lambda_is_convex_in_alpha(a in -6.0f64..6.0, d in 0.5f64..3.0) {
        let base = RareEventModel::new(2.0, 0.0).unwrap();
        let f = |x: f64| oracle_log_lambda(&base.with_alpha(x).unwrap(), 101);
        prop_assert!(f(a) <= 0.5 * (f(a - d) + f(a + d)) + 1e-9);
    }
}
