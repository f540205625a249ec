mod common;

use common::{numeric_elasticities, oracle_discrepancy, oracle_draw};
use fuelshock_core::aids::{fit_aids, FitOptions};
use fuelshock_core::elasticity::{
    delta_method, delta_method_se, expenditure_elasticities, price_elasticities, ElasticityTable, EvaluationPoint,
};
use fuelshock_core::synth::{random_restricted_parameters, simulate, SyntheticDesign};
use fuelshock_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_matches_numeric_derivatives_over_100_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for draw in 0..100 {
        let d = oracle_draw(&mut rng);
        let gap = oracle_discrepancy(&d, 1e-3);
        assert!(gap < 1e-5, "draw {draw}: relative gap {gap:e}");
    }
}

#[test]
fn numeric_oracle_sees_a_wrong_formula() {
    // Leaving the gamma ln p terms out of the index gradient is detectable.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = oracle_draw(&mut rng);
    let (num, _) = numeric_elasticities(&d.params, &d.log_prices, d.log_expenditure, 1e-5);
    let e = price_elasticities(&d.params, &d.shares, &d.log_prices).unwrap();
    let n = d.shares.len();
    let wrong = DMatrix::from_fn(n, n, |i, j| {
        let kron = if i == j { 1.0 } else { 0.0 };
        -kron + (d.params.gamma[(i, j)] - d.params.beta[i] * d.params.alpha[j]) / d.shares[i]
    });
    assert!((&e - &num).amax() < 1e-8);
    assert!((&wrong - &num).amax() > 1e-4);
}

#[test]
fn engel_homogeneity_and_cournot() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let d = oracle_draw(&mut rng);
        let e = price_elasticities(&d.params, &d.shares, &d.log_prices).unwrap();
        let x = expenditure_elasticities(&d.params, &d.shares).unwrap();
        let n = d.shares.len();
        let engel: f64 = (0..n).map(|i| d.shares[i] * x[i]).sum();
        assert!((engel - 1.0).abs() < 1e-10, "engel {engel}");
        for i in 0..n {
            assert!((e.row(i).sum() + x[i]).abs() < 1e-8);
        }
        // Shares here are the model's own shares at the point.
        for j in 0..n {
            let cournot: f64 = (0..n).map(|i| d.shares[i] * e[(i, j)]).sum();
            assert!((cournot + d.shares[j]).abs() < 1e-8, "cournot {j}: {cournot}");
        }
    }
}

#[test]
fn engel_holds_at_arbitrary_evaluation_shares() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = random_restricted_parameters(&mut rng, 6);
    let w = DVector::from_vec(vec![0.05, 0.1, 0.15, 0.2, 0.22, 0.28]);
    let x = expenditure_elasticities(&p, &w).unwrap();
    assert!((w.dot(&x) - 1.0).abs() < 1e-10);
}

#[test]
fn direct_substitution_and_zero_share() {
    let mut p = random_restricted_parameters(&mut ChaCha8Rng::seed_from_u64(2), 2);
    p.beta = DVector::from_vec(vec![-0.05, 0.05]);
    let x = expenditure_elasticities(&p, &DVector::from_vec(vec![0.1, 0.9])).unwrap();
    assert!((x[0] - 0.5).abs() < 1e-15);
    assert!(matches!(
        expenditure_elasticities(&p, &DVector::from_vec(vec![0.0, 1.0])),
        Err(Error::ZeroShare { .. })
    ));
    assert!(price_elasticities(&p, &DVector::from_vec(vec![1.0, 0.0]), &DVector::zeros(2)).is_err());
}

#[test]
fn delta_method_linear_target_is_exact() {
    let theta = DVector::from_vec(vec![0.3, -1.2, 2.0]);
    let l = DMatrix::from_row_slice(3, 3, &[0.2, 0.0, 0.0, 0.05, 0.1, 0.0, -0.03, 0.02, 0.3]);
    let cov = &l * l.transpose();
    let a = DVector::from_vec(vec![1.5, -0.7, 0.25]);
    let se = delta_method(&theta, &cov, |t| Ok(DVector::from_element(1, a.dot(t)))).unwrap();
    let exact = (a.transpose() * &cov * &a)[(0, 0)].sqrt();
    assert!((se[0] - exact).abs() < 1e-9 * exact, "{} vs {exact}", se[0]);

    let zero = delta_method(&theta, &DMatrix::zeros(3, 3), |t| Ok(t.map(|v| v * v))).unwrap();
    assert_eq!(zero, DVector::zeros(3));
}

#[test]
fn delta_method_errors() {
    let theta = DVector::from_vec(vec![1.0, 2.0]);
    assert!(matches!(
        delta_method(&theta, &DMatrix::identity(3, 3), |t| Ok(t.clone())),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(
        delta_method(&theta, &DMatrix::identity(2, 2), |t| Ok(t.map(|v| if v > 1.5 { f64::NAN } else { v }))),
        Err(Error::NonFinite(_))
    ));

    let s = simulate(&SyntheticDesign::new(3, 100, 0.005, 3)).unwrap();
    let mut fit = fit_aids(&s.data, &FitOptions::default()).unwrap();
    fit.covariance = None;
    assert!(matches!(
        delta_method_se(&fit, |p| Ok(p.beta.clone())),
        Err(Error::MissingCovariance)
    ));
    let table = ElasticityTable::from_fit(&fit, None).unwrap();
    assert!(table.price_se.is_none());
}

#[test]
fn table_on_fit_and_point_selection() {
    let s = simulate(&SyntheticDesign::new(5, 300, 0.005, 77)).unwrap();
    let fit = fit_aids(&s.data, &FitOptions::default()).unwrap();
    let at_means = ElasticityTable::from_fit(&fit, None).unwrap();
    assert!((at_means.engel_aggregation() - 1.0).abs() < 1e-10);
    assert!(at_means.homogeneity_residual() < 1e-8);
    assert!(at_means.price_se.as_ref().unwrap().iter().all(|v| v.is_finite() && *v > 0.0));

    let lp = vec![0.2, -0.1, 0.05, 0.3, -0.25];
    let point = EvaluationPoint::fitted(&fit.params, &lp, 0.1).unwrap();
    let elsewhere = ElasticityTable::from_fit(&fit, Some(point.clone())).unwrap();
    assert_ne!(elsewhere.price, at_means.price);
    assert_eq!(elsewhere.point, point);
    assert!((elsewhere.engel_aggregation() - 1.0).abs() < 1e-10);

    let bad = EvaluationPoint {
        shares: vec![0.5, 0.5, 0.1, 0.1, 0.1],
        log_prices: lp,
    };
    assert!(ElasticityTable::from_fit(&fit, Some(bad)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity_for_any_restricted_draw(seed in any::<u64>()) {
        let d = oracle_draw(&mut ChaCha8Rng::seed_from_u64(seed));
        let e = price_elasticities(&d.params, &d.shares, &d.log_prices).unwrap();
        let x = expenditure_elasticities(&d.params, &d.shares).unwrap();
        for i in 0..x.len() {
            prop_assert!((e.row(i).sum() + x[i]).abs() < 1e-8);
        }
        prop_assert!((d.shares.dot(&x) - 1.0).abs() < 1e-10);
    }
}
