//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use fuelshock_core::aids::{fit_aids, AidsParameters, DemandData, FitOptions, PriceGrouping, RESTRICTION_TOLERANCE};
use fuelshock_core::data::{derive_activity, load_panel, PanelSchema, Pollutant};
use fuelshock_core::elasticity::{expenditure_elasticities, price_elasticities, EvaluationPoint};
use fuelshock_core::emissions::EmissionWeights;
use fuelshock_core::params::ParameterSet;
use fuelshock_core::synth::{simulate, SyntheticDesign};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn published_dir() -> PathBuf {
    workspace_root().join("data/published")
}

pub fn sample_dir() -> PathBuf {
    workspace_root().join("data/sample")
}

/// Log quantity `ln(w_i X / p_i)` implied by the translog share system.
fn log_quantities(params: &AidsParameters, lp: &DVector<f64>, lx: f64) -> DVector<f64> {
    let w = params.shares(lp, lx).unwrap();
    DVector::from_fn(w.len(), |i, _| w[i].ln() + lx - lp[i])
}

/// Price and expenditure elasticities by central differences of implied
/// log quantities, step `h` in log units.
pub fn numeric_elasticities(
    params: &AidsParameters,
    lp: &DVector<f64>,
    lx: f64,
    h: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = lp.len();
    let mut price = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut up = lp.clone();
        up[j] += h;
        let mut down = lp.clone();
        down[j] -= h;
        let d = (log_quantities(params, &up, lx) - log_quantities(params, &down, lx)) / (2.0 * h);
        price.set_column(j, &d);
    }
    let expenditure = (log_quantities(params, lp, lx + h) - log_quantities(params, lp, lx - h)) / (2.0 * h);
    (price, expenditure)
}

/// A restricted parameter draw with a point where all shares are interior.
pub struct OracleDraw {
    pub params: AidsParameters,
    pub log_prices: DVector<f64>,
    pub log_expenditure: f64,
    pub shares: DVector<f64>,
}

pub fn oracle_draw(rng: &mut ChaCha8Rng) -> OracleDraw {
    let n = rng.random_range(2..=10);
    loop {
        let params = fuelshock_core::synth::random_restricted_parameters(rng, n);
        let lp = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
        let lx = rng.random_range(-0.5..0.5);
        let w = params.shares(&lp, lx).unwrap();
        if w.iter().all(|&v| v > 0.01) {
            return OracleDraw {
                params,
                log_prices: lp,
                log_expenditure: lx,
                shares: w,
            };
        }
    }
}

/// Largest `|analytic - numeric| / max(|numeric|, floor)` over both tables.
pub fn oracle_discrepancy(d: &OracleDraw, floor: f64) -> f64 {
    let e = price_elasticities(&d.params, &d.shares, &d.log_prices).unwrap();
    let x = expenditure_elasticities(&d.params, &d.shares).unwrap();
    let (ne, nx) = numeric_elasticities(&d.params, &d.log_prices, d.log_expenditure, 1e-5);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(floor);
    let pe = e.iter().zip(ne.iter()).map(|(&a, &b)| rel(a, b)).fold(0.0, f64::max);
    let xe = x.iter().zip(nx.iter()).map(|(&a, &b)| rel(a, b)).fold(0.0, f64::max);
    pe.max(xe)
}

/// `pi_kj = sum_i w_ki e_ij` by explicit loops.
pub fn brute_force_pi(e: &DMatrix<f64>, weights: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, n) = weights.shape();
    let mut out = DMatrix::zeros(k, n);
    for p in 0..k {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += weights[(p, i)] * e[(i, j)];
            }
            out[(p, j)] = acc;
        }
    }
    out
}

/// Random emission weights; roughly one class in seven emits nothing of a
/// pollutant.
pub fn random_weights(rng: &mut ChaCha8Rng, k: usize, n: usize) -> EmissionWeights {
    let mut emissions = DMatrix::from_fn(k, n, |_, _| {
        if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(0.0..1e6)
        }
    });
    for p in 0..k {
        emissions[(p, 0)] += 1.0;
    }
    let totals = DVector::from_fn(k, |p, _| emissions.row(p).sum());
    let weights = DMatrix::from_fn(k, n, |p, i| emissions[(p, i)] / totals[p]);
    EmissionWeights {
        pollutants: Pollutant::ALL[..k].to_vec(),
        classes: (0..n).map(|i| format!("c{i}")).collect(),
        emissions,
        totals,
        weights,
    }
}

/// Outcome of the seeded recovery replications.
pub struct Coverage {
    pub replications: usize,
    pub parameters: usize,
    pub covered: usize,
    /// Replications in which every free parameter is within 3 SE.
    pub all_covered: usize,
    pub max_restriction_residual: f64,
    pub max_dropped_equation_change: f64,
}

/// 100 seeded designs cycling through 4..=10 goods, 300 observations,
/// noise 0.005. Each fit is repeated with the first equation dropped.
pub fn recovery_coverage(replications: usize) -> Coverage {
    let results: Vec<(usize, usize, f64, f64)> = parallel_map(replications, |r| {
        let n = 4 + r % 7;
        let s = simulate(&SyntheticDesign::new(n, 300, 0.005, 10_000 + r as u64)).unwrap();
        let fit = fit_aids(&s.data, &FitOptions::default()).unwrap();
        let truth = fit.map.reduce(&s.truth).unwrap();
        let est = fit.free_parameters();
        let se = fit.free_standard_errors().unwrap();
        let covered = (0..est.len()).filter(|&k| (est[k] - truth[k]).abs() <= 3.0 * se[k]).count();
        let other = fit_aids(
            &s.data,
            &FitOptions {
                dropped_equation: Some(s.data.good_names()[0].clone()),
                ..FitOptions::default()
            },
        )
        .unwrap();
        let a = fit.map.full_vector(&fit.params);
        let b = other.map.full_vector(&other.params);
        let residual = fit.restriction_residuals().max().max(other.restriction_residuals().max());
        (covered, est.len(), residual, (a - b).amax())
    });
    Coverage {
        replications,
        parameters: results.iter().map(|r| r.1).sum(),
        covered: results.iter().map(|r| r.0).sum(),
        all_covered: results.iter().filter(|r| r.0 == r.1).count(),
        max_restriction_residual: results.iter().map(|r| r.2).fold(0.0, f64::max),
        max_dropped_equation_change: results.iter().map(|r| r.3).fold(0.0, f64::max),
    }
}

impl Coverage {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.parameters as f64
    }
}

/// Runs `f(0..count)` on all available cores and returns results in order.
pub fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, f: F) -> Vec<T> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(count.max(1));
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..workers)
            .map(|w| scope.spawn(move || (w..count).step_by(workers).map(|r| (r, f(r))).collect::<Vec<_>>()))
            .collect();
        for h in handles {
            for (r, v) in h.join().unwrap() {
                out[r] = Some(v);
            }
        }
    });
    out.into_iter().map(|v| v.unwrap()).collect()
}

pub fn sample_demand() -> DemandData {
    let params = ParameterSet::builtin();
    let panel = load_panel(sample_dir().join("panel.csv"), &PanelSchema::default()).unwrap();
    let derived = derive_activity(&panel, &params.fleet).unwrap();
    DemandData::from_panel(&derived, &params.fleet.ids(), PriceGrouping::Distinct).unwrap()
}

/// Delta-method and bootstrap standard errors of every price and
/// expenditure elasticity, stacked as `vec(price)` then expenditure.
pub struct BootstrapComparison {
    pub delta: DVector<f64>,
    pub bootstrap: DVector<f64>,
    pub replications: usize,
}

impl BootstrapComparison {
    /// Largest `|delta / bootstrap - 1|`.
    pub fn max_relative_gap(&self) -> f64 {
        self.delta
            .iter()
            .zip(self.bootstrap.iter())
            .map(|(d, b)| (d / b - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn stacked(params: &AidsParameters, point: &EvaluationPoint) -> DVector<f64> {
    let w = DVector::from_column_slice(&point.shares);
    let lp = DVector::from_column_slice(&point.log_prices);
    let e = price_elasticities(params, &w, &lp).unwrap();
    let x = expenditure_elasticities(params, &w).unwrap();
    DVector::from_iterator(e.len() + x.len(), e.iter().chain(x.iter()).copied())
}

/// Nonparametric bootstrap over observations. Every replicate is evaluated
/// at the full-sample mean point, matching the delta method, which holds
/// the evaluation shares fixed.
pub fn bootstrap_comparison(data: &DemandData, replications: usize, seed: u64) -> BootstrapComparison {
    let fit = fit_aids(data, &FitOptions::default()).unwrap();
    assert!(fit.restriction_residuals().max() < RESTRICTION_TOLERANCE);
    let point = EvaluationPoint::sample_means(&fit);
    let table = fuelshock_core::elasticity::ElasticityTable::from_fit(&fit, Some(point.clone())).unwrap();
    let delta = DVector::from_iterator(
        table.price.len() + table.expenditure.len(),
        table
            .price_se
            .as_ref()
            .unwrap()
            .iter()
            .chain(table.expenditure_se.as_ref().unwrap().iter())
            .copied(),
    );
    let n = data.n_obs();
    let draws = parallel_map(replications, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let f = fit_aids(&data.resample(&rows), &FitOptions::default()).unwrap();
        stacked(&f.params, &point)
    });
    let m = delta.len();
    let reps = replications as f64;
    let mean = draws.iter().fold(DVector::zeros(m), |acc, d| acc + d) / reps;
    let var = draws
        .iter()
        .fold(DVector::zeros(m), |acc: DVector<f64>, d| acc + (d - &mean).map(|v| v * v))
        / (reps - 1.0);
    BootstrapComparison {
        delta,
        bootstrap: var.map(f64::sqrt),
        replications,
    }
}
