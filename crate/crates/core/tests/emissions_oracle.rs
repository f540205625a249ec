mod common;

use common::{brute_force_pi, random_weights};
use fuelshock_core::aids::Good;
use fuelshock_core::data::Pollutant;
use fuelshock_core::emissions::{
    emission_expenditure_elasticity, emission_price_elasticities, emission_weights, ActivityBasis, ClassActivity,
    EmissionElasticityTable, EmissionWeights,
};
use fuelshock_core::params::ParameterSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn brute_force_equality_and_bounds_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let k = rng.random_range(1..=3);
        let w = random_weights(&mut rng, k, n);
        let e = DMatrix::from_fn(n, n, |_, _| rng.random_range(-3.0..1.0));
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..3.0));
        let pi = emission_price_elasticities(&e, &w).unwrap();
        assert!((&pi - brute_force_pi(&e, &w.weights)).amax() <= 1e-12);

        let eta = emission_expenditure_elasticity(&x, &w).unwrap();
        for p in 0..k {
            let brute: f64 = (0..n).map(|i| w.weights[(p, i)] * x[i]).sum();
            assert!((eta[p] - brute).abs() <= 1e-12);
            assert!((w.weights.row(p).sum() - 1.0).abs() <= 1e-12);
            assert!(eta[p] >= x.min() - 1e-12 && eta[p] <= x.max() + 1e-12);
            for j in 0..n {
                let col = e.column(j);
                assert!(pi[(p, j)] >= col.min() - 1e-12 && pi[(p, j)] <= col.max() + 1e-12);
            }
        }
    }
}

#[test]
fn fleet_totals_match_spreadsheet_sum() {
    // Factors (g/km) and baseline VMT (km/vehicle-year) transcribed by hand,
    // with an illustrative fleet of vehicles per class.
    let factors: [(&str, f64, f64, f64, f64); 10] = [
        ("LPV-D", 6.7, 12.772, 0.2567, 48600.0),
        ("MPV-G", 4.1, 0.47, 0.126, 47300.0),
        ("SPV-G", 1.57, 0.37, 0.117, 33600.0),
        ("MNPV-G", 3.33, 1.24, 0.09, 34000.0),
        ("HDT-D", 6.3, 10.2, 0.23, 50000.0),
        ("MDT-D", 1.5, 6.4, 0.11, 24000.0),
        ("LDT-D", 2.9, 3.2, 0.17, 20000.0),
        ("MNT-G", 1.57, 0.37, 0.09, 38400.0),
        ("PB-D", 6.7, 12.772, 0.35, 57200.0),
        ("Taxi-G", 0.927, 0.148, 0.117, 74900.0),
    ];
    let fleet_size = [1.2e6, 0.9e6, 6.1e7, 2.4e6, 3.8e6, 2.1e6, 1.0e7, 2.9e6, 0.6e6, 1.1e6];

    let mut psi = [0.0_f64; 3];
    for (row, n) in factors.iter().zip(fleet_size) {
        let km = n * row.4;
        psi[0] += row.1 * km;
        psi[1] += row.2 * km;
        psi[2] += row.3 * km;
    }

    let params = ParameterSet::builtin();
    let ids: Vec<String> = params.fleet.ids();
    assert_eq!(ids, factors.iter().map(|r| r.0.to_string()).collect::<Vec<_>>());
    let activity = ClassActivity::from_fleet(&params.fleet, &fleet_size, ActivityBasis::Km).unwrap();
    let w = emission_weights(&params.fleet, &activity, &Pollutant::ALL).unwrap();
    for k in 0..3 {
        assert!((w.totals[k] / psi[k] - 1.0).abs() < 1e-9, "{k}: {} vs {}", w.totals[k], psi[k]);
        assert!((w.weights.row(k).sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn scale_invariance_sign_propagation_and_degenerate_cases() {
    let params = ParameterSet::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = params.fleet.classes().len();
    let pops: Vec<f64> = (0..n).map(|_| rng.random_range(1e5..1e7)).collect();
    let e = DMatrix::from_fn(n, n, |_, _| -rng.random_range(0.01..1.5));
    let x = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));

    let base = emission_weights(
        &params.fleet,
        &ClassActivity::from_fleet(&params.fleet, &pops, ActivityBasis::Km).unwrap(),
        &Pollutant::ALL,
    )
    .unwrap();
    let scaled_pops: Vec<f64> = pops.iter().map(|p| p * 37.5).collect();
    let scaled = emission_weights(
        &params.fleet,
        &ClassActivity::from_fleet(&params.fleet, &scaled_pops, ActivityBasis::Km).unwrap(),
        &Pollutant::ALL,
    )
    .unwrap();
    let a = EmissionElasticityTable::from_demand(&e, Some(&x), &base).unwrap();
    let b = EmissionElasticityTable::from_demand(&e, Some(&x), &scaled).unwrap();
    assert!((&a.price - &b.price).amax() < 1e-12);
    assert!((a.expenditure.as_ref().unwrap() - b.expenditure.as_ref().unwrap()).amax() < 1e-12);
    assert!(a.price.iter().all(|&v| v < 0.0));

    // Constant elasticities pass through unchanged.
    let c = emission_price_elasticities(&DMatrix::from_element(n, n, -0.4), &base).unwrap();
    assert!(c.iter().all(|&v| (v + 0.4).abs() < 1e-12));
    let ones = emission_expenditure_elasticity(&DVector::from_element(n, 1.0), &base).unwrap();
    assert!(ones.iter().all(|&v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn single_class_and_equal_activity() {
    let one = EmissionWeights {
        pollutants: vec![Pollutant::Co],
        classes: vec!["a".into()],
        emissions: DMatrix::from_element(1, 1, 5.0),
        totals: DVector::from_element(1, 5.0),
        weights: DMatrix::from_element(1, 1, 1.0),
    };
    let e = DMatrix::from_element(1, 1, -0.7);
    assert_eq!(emission_price_elasticities(&e, &one).unwrap()[(0, 0)], -0.7);
    assert_eq!(emission_expenditure_elasticity(&DVector::from_element(1, 1.3), &one).unwrap()[0], 1.3);

    let params = ParameterSet::builtin();
    let mut pops = vec![0.0; 10];
    // MPV-G and LDT-D: equal a*q for CO when populations offset factor*VMT.
    pops[1] = 1.0 / (4.1 * 47300.0);
    pops[6] = 1.0 / (2.9 * 20000.0);
    let w = emission_weights(
        &params.fleet,
        &ClassActivity::from_fleet(&params.fleet, &pops, ActivityBasis::Km).unwrap(),
        &[Pollutant::Co],
    )
    .unwrap();
    assert!((w.weights[(0, 1)] - 0.5).abs() < 1e-12);
    assert!((w.weights[(0, 6)] - 0.5).abs() < 1e-12);

    assert!(emission_weights(
        &params.fleet,
        &ClassActivity::from_fleet(&params.fleet, &[0.0; 10], ActivityBasis::Km).unwrap(),
        &Pollutant::ALL,
    )
    .is_err());
    assert!(emission_price_elasticities(&DMatrix::zeros(3, 3), &w).is_err());
}

#[test]
fn pooled_goods_sum_member_weights() {
    let params = ParameterSet::builtin();
    let pops: Vec<f64> = (1..=10).map(|i| i as f64 * 1e5).collect();
    let w = emission_weights(
        &params.fleet,
        &ClassActivity::from_fleet(&params.fleet, &pops, ActivityBasis::Litres).unwrap(),
        &Pollutant::ALL,
    )
    .unwrap();
    let ids = params.fleet.ids();
    let mut goods: Vec<Good> = ids[2..].iter().map(|c| Good::single(c.clone())).collect();
    goods.insert(
        0,
        Good {
            name: format!("{}+{}", ids[0], ids[1]),
            members: vec![ids[0].clone(), ids[1].clone()],
        },
    );
    let pooled = w.aggregate(&goods).unwrap();
    for k in 0..3 {
        assert!((pooled.weights[(k, 0)] - w.weights[(k, 0)] - w.weights[(k, 1)]).abs() < 1e-15);
        assert!((pooled.weights.row(k).sum() - 1.0).abs() < 1e-12);
    }
    assert!(w.aggregate(&goods[1..]).is_err());
}

#[test]
fn published_table_round_trips() {
    let path = common::published_dir().join("emission_price_elasticities.csv");
    let t = EmissionElasticityTable::load_price_csv(&path).unwrap();
    assert_eq!(t.classes.len(), 10);
    assert_eq!(t.get(Pollutant::Nox, "HDT-D"), Some(-0.350));
    assert!(t.price.iter().all(|&v| v < 0.0));
    let mut buf = Vec::new();
    t.write_price_csv(&mut buf).unwrap();
    let back = EmissionElasticityTable::read_price_csv(buf.as_slice(), &path).unwrap();
    assert_eq!(back, t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn negative_columns_stay_negative(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, 3, n);
        let e = DMatrix::from_fn(n, n, |_, _| -rng.random_range(1e-6..2.0));
        let pi = emission_price_elasticities(&e, &w).unwrap();
        prop_assert!(pi.iter().all(|&v| v < 0.0));
    }
}
