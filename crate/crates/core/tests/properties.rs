use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbell::bell::{cached_bell_operator, probability_table, s_from_table};
use qbell::concentration::{apply_filter, FilterSpec};
use qbell::sim::{
    counts_from_table, crosstalk_mix, crosstalk_state, estimate_s_with_sigma, read_counts_csv,
    simulate_counts, write_counts_csv, ExperimentPlan,
};
use qbell::spdc::{coincidence_closed_form, fit_gamma, lorentzian_state, synthetic_rates};
use qbell::state::{random_density, DensityMatrix};

fn state(d: usize, seed: u64) -> DensityMatrix {
    random_density(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operator_is_hermitian_nonnegative_with_zero_diagonal(d in 2usize..=9) {
        let m = cached_bell_operator(d).unwrap().matrix();
        prop_assert!(m.hermitian_asymmetry() < 1e-12);
        for i in 0..d * d {
            prop_assert_eq!(m.get(i, i).norm(), 0.0);
            for j in 0..d * d {
                prop_assert!(m.get(i, j).re >= 0.0);
            }
        }
    }

    #[test]
    fn table_and_operator_agree_below_top_eigenvalue(d in 2usize..=6, seed in any::<u64>()) {
        let rho = state(d, seed);
        let op = cached_bell_operator(d).unwrap();
        let via_op = op.expectation(&rho).unwrap();
        let via_table = s_from_table(&probability_table(&rho).unwrap()).s;
        prop_assert!((via_op - via_table).abs() < 1e-9);
        prop_assert!(via_op <= op.spectrum().unwrap().eigenvalues[0] + 1e-9);
    }

    #[test]
    fn fringe_bounded_and_even(d in 2usize..=14, delta in -10.0f64..10.0) {
        let p = coincidence_closed_form(delta, 0.0, d);
        prop_assert!(p >= 0.0 && p <= 1.0 / d as f64 + 1e-15);
        prop_assert!((p - coincidence_closed_form(-delta, 0.0, d)).abs() < 1e-15);
        prop_assert!((p - coincidence_closed_form(delta + 2.0 * std::f64::consts::PI, 0.0, d)).abs() < 1e-12);
    }

    #[test]
    fn crosstalk_keeps_tables_normalized(d in 2usize..=7, seed in any::<u64>(), eps in 0.0f64..0.5) {
        let t = probability_table(&state(d, seed)).unwrap();
        let mixed = crosstalk_mix(&t, eps).unwrap();
        let via_state = probability_table(&crosstalk_state(&state(d, seed), eps).unwrap()).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                prop_assert!((mixed.block(a, b).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!((via_state.block(a, b).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filtering_returns_a_valid_state(d in 2usize..=6, seed in any::<u64>(), lo in 0.05f64..1.0) {
        let diag: Vec<f64> = (0..d).map(|i| lo + (1.0 - lo) * i as f64 / d as f64).collect();
        let f = FilterSpec::symmetric(diag).unwrap();
        let out = apply_filter(&state(d, seed), &f).unwrap();
        prop_assert!(out.success_probability > 0.0 && out.success_probability <= 1.0 + 1e-12);
        prop_assert!((out.state.matrix().trace().re - 1.0).abs() < 1e-10);
        prop_assert!(DensityMatrix::new(d, out.state.matrix().clone()).is_ok());
    }

    #[test]
    fn gamma_fit_round_trip(gamma in 1.0f64..60.0, amp in 0.1f64..1e3) {
        let fit = fit_gamma(&synthetic_rates(gamma, amp, -5..=5)).unwrap();
        prop_assert!((fit.gamma - gamma).abs() / gamma < 1e-6);
        prop_assert!((fit.amplitude - amp).abs() / amp < 1e-6);
    }

    #[test]
    fn count_csv_round_trip(d in 2usize..=5, seed in any::<u64>()) {
        let t = probability_table(&state(d, seed)).unwrap();
        let recs = counts_from_table(&t, 1e3, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut buf = Vec::new();
        write_counts_csv(&recs, &mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();
        prop_assert_eq!(read_counts_csv(&path).unwrap(), recs);
    }
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let rho = lorentzian_state(7.58, 5).unwrap().to_density();
    let plan = ExperimentPlan::new(rho, 500.0, 99);
    assert_eq!(
        simulate_counts(&plan).unwrap(),
        simulate_counts(&plan).unwrap()
    );
    let other = ExperimentPlan {
        seed: 100,
        ..plan.clone()
    };
    assert_ne!(
        simulate_counts(&plan).unwrap(),
        simulate_counts(&other).unwrap()
    );
}

#[test]
fn estimator_error_shrinks_as_inverse_root_counts() {
    let d = 4;
    let t = probability_table(&lorentzian_state(7.58, d).unwrap().to_density()).unwrap();
    let truth = s_from_table(&t).s;
    // log |error| against log lambda, averaged over replicas
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, lambda) in [1e3, 1e4, 1e5, 1e6].into_iter().enumerate() {
        let mse: f64 = (0..40u64)
            .map(|r| {
                let recs = counts_from_table(&t, lambda, 1000 * i as u64 + r);
                (estimate_s_with_sigma(d, &recs).unwrap().s - truth).powi(2)
            })
            .sum::<f64>()
            / 40.0;
        xs.push(f64::ln(lambda));
        ys.push(0.5 * mse.ln());
    }
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}
