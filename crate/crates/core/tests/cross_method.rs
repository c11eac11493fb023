use std::sync::Arc;

use kkl_core::analysis::{compare_transforms, unicity_report};
use kkl_core::design::{
    build_filter, euler_filter, example_coeffs, poly_transform, CoeffVariant, ExampleTransform, SeriesTransform,
};
use kkl_core::linalg::c64;
use kkl_core::system::make_oscillator_system;

const DT: f64 = 0.01;

#[test]
fn closed_form_matches_sylvester_solution() {
    let sys = make_oscillator_system(DT).unwrap();
    for lambda in [-10.0, -20.0, -30.0] {
        let closed = ExampleTransform::new(CoeffVariant::Discrete, &[lambda], DT).unwrap().to_poly();
        let solved = poly_transform(&sys, &euler_filter(&[lambda], DT).unwrap()).unwrap();
        let gap = closed.coefficients().sub(solved.coefficients()).unwrap().max_abs();
        assert!(gap <= 1e-10, "lambda = {lambda}: gap {gap:e}");
    }
}

#[test]
fn continuous_coefficients_do_not_solve_the_discrete_equation() {
    let sys = make_oscillator_system(DT).unwrap();
    let closed = ExampleTransform::new(CoeffVariant::Continuous, &[-10.0], DT).unwrap().to_poly();
    let residual = closed.sylvester_residual(&sys, &euler_filter(&[-10.0], DT).unwrap()).unwrap();
    assert!(residual > 1e-6, "residual {residual:e}");
    assert!(example_coeffs(CoeffVariant::Continuous, -10.0, DT).unwrap().defining_residual() <= 1e-12);
}

#[test]
fn mismatched_filters_fail_unicity() {
    let sys = Arc::new(make_oscillator_system(DT).unwrap());
    let f1 = build_filter(&[c64(0.5, 0.0), c64(0.3, 0.2), c64(-0.4, 0.0)], 1).unwrap();
    let f2 = build_filter(&[c64(0.6, 0.0), c64(0.3, -0.2), c64(-0.1, 0.0)], 1).unwrap();
    let poly = poly_transform(&sys, &f2).unwrap();
    let series = SeriesTransform::new(sys.clone(), f1.clone(), 200, 0.05).unwrap();
    let report = compare_transforms(&series, &poly, 20, 1).unwrap();
    assert!(!report.pass);
    assert!(report.max_deviation > 1e3 * report.tail_bound);
    assert!(unicity_report(sys, &f1, 200, 20, 1).unwrap().pass);
}

#[test]
fn unicity_deviation_shrinks_with_truncation() {
    let sys = Arc::new(make_oscillator_system(DT).unwrap());
    let filter = build_filter(&[c64(0.9, 0.0), c64(0.5, 0.4), c64(0.5, -0.4)], 1).unwrap();
    let mut previous = f64::INFINITY;
    for n in [10, 20, 40, 80, 160] {
        let dev = unicity_report(sys.clone(), &filter, n, 20, 3).unwrap().max_deviation;
        assert!(dev <= previous * 1.1 || dev < 1e-12, "N = {n}: {dev:e} after {previous:e}");
        previous = dev;
    }
}

#[test]
fn zero_output_gives_zero_transforms() {
    let sys = make_oscillator_system(DT)
        .unwrap()
        .with_output(kkl_core::linalg::Matrix::zeros(1, 6))
        .unwrap();
    let filter = build_filter(&[c64(0.5, 0.0), c64(0.2, 0.0), c64(-0.3, 0.0)], 1).unwrap();
    let report = unicity_report(Arc::new(sys), &filter, 50, 10, 0).unwrap();
    assert_eq!(report.max_deviation, 0.0);
}
