mod common;

use common::close;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use recdiag::diagnostics::classical_diagnostics;
use recdiag::engine::{recursive_trace, Method};
use recdiag::linalg::{fit_ols, hat_matrix_diag, Dataset};
use recdiag::permute::{Permutation, PermutationSchedule};
use recdiag::simgen::{generate_clean, inject_outliers, resolve_positions, Positions, ScenarioSpec, Target};

/// Full-rank design with an intercept column and a response.
fn design(max_n: usize) -> impl Strategy<Value = Dataset> {
    (1usize..=4)
        .prop_flat_map(move |p| (Just(p), p + 2..=max_n))
        .prop_flat_map(|(p, n)| {
            (
                Just((n, p)),
                prop::collection::vec(-10.0f64..10.0, n * p),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
        .prop_filter_map("full rank", |((n, p), xs, ys)| {
            let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { xs[i * p + j] });
            Dataset::from_parts(x, DVector::from_vec(ys)).ok()
        })
}

fn shuffled(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

/// The hat matrix assembled column by column from fits of unit responses.
fn hat_matrix(data: &Dataset) -> DMatrix<f64> {
    let n = data.n();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
        let fit = fit_ols(&data.with_response(e.clone()).unwrap()).unwrap();
        h.set_column(j, &(e - fit.residuals));
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hat_matrix_is_a_projector(data in design(20)) {
        let h = hat_matrix(&data);
        let hh = &h * &h;
        prop_assert!((hh - &h).amax() <= 1e-8);
        let diag = hat_matrix_diag(&data).unwrap();
        prop_assert!((h.diagonal() - &diag).amax() <= 1e-10);
        prop_assert!((diag.sum() - data.p() as f64).abs() <= 1e-8);
        let n = data.n() as f64;
        for &v in diag.iter() {
            prop_assert!(v >= 1.0 / n - 1e-12 && v <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_columns(data in design(30)) {
        let fit = fit_ols(&data).unwrap();
        let xtr = data.x().transpose() * &fit.residuals;
        prop_assert!(xtr.amax() <= 1e-8 * data.y().norm().max(1.0));
    }

    #[test]
    fn batch_fit_ignores_row_order((data, order) in design(25).prop_flat_map(|d| { let n = d.n(); (Just(d), shuffled(n)) })) {
        let a = fit_ols(&data).unwrap();
        let b = fit_ols(&data.select_rows(&order).unwrap()).unwrap();
        for (u, v) in a.beta_hat.iter().zip(b.beta_hat.iter()) {
            prop_assert!(close(*u, *v, 1e-12), "{} vs {}", u, v);
        }
    }

    #[test]
    fn trace_ends_at_the_batch_fit((data, order) in design(25).prop_flat_map(|d| { let n = d.n(); (Just(d), shuffled(n)) })) {
        let full = fit_ols(&data).unwrap();
        let perm = Permutation::from_zero_based(order).unwrap();
        for method in [Method::Resolve, Method::Update] {
            let trace = recursive_trace(&data, &perm, method).unwrap();
            prop_assume!(trace.is_valid());
            let last = trace.last().unwrap();
            for (u, v) in last.beta.iter().zip(full.beta_hat.iter()) {
                prop_assert!(close(*u, *v, 1e-9), "{}: {} vs {}", method, u, v);
            }
            prop_assert!(close(last.sigma2.unwrap(), full.sigma2_hat.unwrap(), 1e-9));
            match (last.r2, full.r2) {
                (Some(u), Some(v)) => prop_assert!(close(u, v, 1e-9)),
                (u, v) => prop_assert_eq!(u, v),
            }
        }
    }

    #[test]
    fn cook_distance_ignores_response_units(data in design(25), c in 0.01f64..100.0) {
        let a = classical_diagnostics(&data);
        prop_assume!(a.is_ok());
        let scaled = data.with_response(data.y() * c).unwrap();
        let b = classical_diagnostics(&scaled).unwrap();
        for (u, v) in a.unwrap().observations.iter().zip(&b.observations) {
            prop_assert!(close(u.cook_distance, v.cook_distance, 1e-9));
            prop_assert!(close(u.dffit, v.dffit, 1e-9));
        }
    }

    #[test]
    fn closed_forms_match_every_deletion(data in design(25)) {
        let report = classical_diagnostics(&data);
        prop_assume!(report.is_ok());
        let report = report.unwrap();
        let full = fit_ols(&data).unwrap();
        let p = data.p() as f64;
        for (i, o) in report.observations.iter().enumerate() {
            let fit_i = fit_ols(&data.without_rows(&[i]).unwrap()).unwrap();
            let shift = data.x() * (&full.beta_hat - &fit_i.beta_hat);
            let cook = shift.norm_squared() / (p * full.sigma2_hat.unwrap());
            prop_assert!(close(o.cook_distance, cook, 1e-7), "{} vs {}", o.cook_distance, cook);
            let xi = data.row(i);
            let s_i = fit_i.sigma2_hat.unwrap().sqrt();
            let dffit = (xi.dot(&full.beta_hat) - xi.dot(&fit_i.beta_hat)) / (s_i * o.leverage.sqrt());
            prop_assert!(close(o.dffit, dffit, 1e-7), "{} vs {}", o.dffit, dffit);
        }
    }

    #[test]
    fn schedules_are_reproducible(n in 1usize..60, count in 1usize..30, seed in any::<u64>()) {
        let s = PermutationSchedule::random(n, count, seed);
        prop_assert_eq!(s.permutations().unwrap(), s.permutations().unwrap());
        let circ = PermutationSchedule::circular(n).permutations().unwrap();
        let mut firsts: Vec<usize> = circ.iter().map(|p| p.as_slice()[0]).collect();
        firsts.sort_unstable();
        prop_assert_eq!(firsts, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn injection_changes_exactly_the_chosen_rows(
        n in 10usize..150,
        seed in any::<u64>(),
        target in prop::sample::select(Target::ALL.to_vec()),
        kind in 0usize..3,
        k in 1usize..5,
    ) {
        let positions = match kind {
            0 => Positions::Middle,
            1 => Positions::Consecutive(k),
            _ => Positions::RandomK { k, seed: seed ^ 0x5eed },
        };
        let spec = ScenarioSpec::clean(n, seed).with_outliers(target, positions);
        let (clean, _) = generate_clean(&spec).unwrap();
        let dirty = inject_outliers(&clean, &spec).unwrap();
        let changed: Vec<usize> = (0..n)
            .filter(|&i| clean.row(i) != dirty.row(i) || clean.y()[i] != dirty.y()[i])
            .map(|i| i + 1)
            .collect();
        let expected = if target == Target::None { Vec::new() } else { resolve_positions(n, positions).unwrap() };
        prop_assert_eq!(changed, expected);
    }
}
