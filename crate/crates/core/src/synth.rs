//! Synthetic demand data drawn from known restricted AIDS parameters.
//!
//! Used by the test suites for simulate-and-recover checks and to build the
//! shipped sample panel. Everything is seeded and deterministic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::aids::{stone_price_index, AidsParameters, DemandData, Good, PriceIndex};
use crate::data::{FleetParams, FuelPanel, PanelObservation};
use crate::error::{Error, Result};

/// Lowest noiseless share accepted when drawing observations.
const MIN_SHARE: f64 = 0.02;

/// Draws a restricted parameter set with interior shares near zero log
/// prices: alpha on the simplex, beta summing to zero, gamma symmetric with
/// zero row sums.
pub fn random_restricted_parameters<R: Rng + ?Sized>(rng: &mut R, n: usize) -> AidsParameters {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let alpha = DVector::from_iterator(n, raw.iter().map(|a| a / total));

    let scale = 0.3 / n as f64;
    let mut beta = DVector::from_fn(n, |_, _| rng.random_range(-scale..scale));
    let mean = beta.mean();
    beta.add_scalar_mut(-mean);

    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-scale..scale);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let centering = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let gamma = &centering * g * &centering;
    let gamma = (&gamma + gamma.transpose()) * 0.5;

    AidsParameters {
        alpha0: 0.0,
        alpha,
        beta,
        gamma,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    pub n_goods: usize,
    pub n_obs: usize,
    /// Standard deviation of the share disturbances before the adding-up
    /// projection.
    pub noise_sd: f64,
    pub seed: u64,
    pub index: PriceIndex,
    /// Spread of the log prices around zero.
    pub log_price_sd: f64,
    pub log_expenditure_sd: f64,
    /// Centre of the log prices, i.e. the log price level.
    pub log_price_mean: f64,
    pub log_expenditure_mean: f64,
}

impl SyntheticDesign {
    pub fn new(n_goods: usize, n_obs: usize, noise_sd: f64, seed: u64) -> Self {
        Self {
            n_goods,
            n_obs,
            noise_sd,
            seed,
            index: PriceIndex::Translog,
            log_price_sd: 0.3,
            log_expenditure_sd: 0.4,
            log_price_mean: 0.0,
            log_expenditure_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub truth: AidsParameters,
    pub data: DemandData,
    /// Noiseless model shares.
    pub expected_shares: DMatrix<f64>,
}

/// Draws parameters and data for a design. With nonzero price and
/// expenditure levels, alpha is shifted by `-beta (mean ln X - mean ln p)`
/// so that shares stay near their centred values.
pub fn simulate(design: &SyntheticDesign) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut truth = random_restricted_parameters(&mut rng, design.n_goods);
    let shift = design.log_expenditure_mean - design.log_price_mean;
    truth.alpha -= &truth.beta * shift;
    simulate_from(&truth, design, &mut rng)
}

/// Draws data from given parameters.
pub fn simulate_from<R: Rng + ?Sized>(
    truth: &AidsParameters,
    design: &SyntheticDesign,
    rng: &mut R,
) -> Result<SyntheticSample> {
    let n = truth.n_goods();
    if n != design.n_goods {
        return Err(Error::DimensionMismatch {
            context: "synthetic design".into(),
            expected: design.n_goods,
            actual: n,
        });
    }
    let price = Normal::new(design.log_price_mean, design.log_price_sd).map_err(|e| Error::invalid("log_price_sd", e.to_string()))?;
    let expend = Normal::new(design.log_expenditure_mean, design.log_expenditure_sd)
        .map_err(|e| Error::invalid("log_expenditure_sd", e.to_string()))?;
    let noise = Normal::new(0.0, design.noise_sd).map_err(|e| Error::invalid("noise_sd", e.to_string()))?;

    let mut log_prices = DMatrix::zeros(design.n_obs, n);
    let mut log_x = DVector::zeros(design.n_obs);
    let mut expected = DMatrix::zeros(design.n_obs, n);
    let mut shares = DMatrix::zeros(design.n_obs, n);
    for t in 0..design.n_obs {
        let mut attempts = 0;
        let (lp, lx, w) = loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::invalid("synthetic design", "cannot draw interior shares"));
            }
            let lp = DVector::from_fn(n, |_, _| price.sample(rng));
            let lx = expend.sample(rng);
            let w = truth.shares(&lp, lx)?;
            if w.iter().all(|&v| v >= MIN_SHARE) {
                break (lp, lx, w);
            }
        };
        let mut e = DVector::from_fn(n, |_, _| noise.sample(rng));
        let mean = e.mean();
        e.add_scalar_mut(-mean);
        log_prices.set_row(t, &lp.transpose());
        log_x[t] = lx;
        expected.set_row(t, &w.transpose());
        shares.set_row(t, &(&w + e).transpose());
    }

    if design.index == PriceIndex::Stone {
        // Regenerate shares so that ln P is the Stone index of the noiseless
        // shares; iterate the fixed point w = f(ln P*(w)).
        for t in 0..design.n_obs {
            let lp = log_prices.row(t).transpose();
            let mut w = expected.row(t).transpose();
            for _ in 0..200 {
                let lnp = stone_price_index(&lp, &w)?;
                w = truth.shares_given_index(&lp, log_x[t], lnp);
            }
            let noise_row = shares.row(t) - expected.row(t);
            expected.set_row(t, &w.transpose());
            shares.set_row(t, &(w.transpose() + noise_row));
        }
    }

    let goods = (0..n).map(|i| Good::single(format!("G{}", i + 1))).collect();
    let data = DemandData::new(goods, shares, log_prices, log_x)?;
    Ok(SyntheticSample {
        truth: truth.clone(),
        data,
        expected_shares: expected,
    })
}

/// Layout for turning synthetic share data into a province-year panel.
#[derive(Debug, Clone)]
pub struct PanelLayout {
    pub provinces: Vec<String>,
    pub first_year: i32,
    pub n_years: usize,
}

impl PanelLayout {
    pub fn n_obs(&self) -> usize {
        self.provinces.len() * self.n_years
    }
}

/// Maps share data onto a raw panel: observation `t` becomes province
/// `t / n_years`, year `first_year + t % n_years`. Goods are matched to fleet
/// classes in fleet order; prices are `exp(ln p)` in currency per litre and
/// `exp(ln X)` is the province-year fuel expenditure. VMT varies by province
/// around the fleet baseline and vehicle populations are backed out so that
/// derived quantities equal `w X / p`.
pub fn panel_from_shares(
    data: &DemandData,
    fleet: &FleetParams,
    layout: &PanelLayout,
    seed: u64,
) -> Result<FuelPanel> {
    if data.n_obs() != layout.n_obs() {
        return Err(Error::DimensionMismatch {
            context: "panel layout".into(),
            expected: layout.n_obs(),
            actual: data.n_obs(),
        });
    }
    if data.n_goods() != fleet.classes().len() {
        return Err(Error::DimensionMismatch {
            context: "fleet classes".into(),
            expected: data.n_goods(),
            actual: fleet.classes().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let province_index: Vec<f64> = layout.provinces.iter().map(|_| rng.random_range(0.8..1.2)).collect();
    let mut obs = Vec::with_capacity(data.n_obs() * data.n_goods());
    for t in 0..data.n_obs() {
        let p_idx = t / layout.n_years;
        let year = layout.first_year + (t % layout.n_years) as i32;
        let x = data.log_expenditure()[t].exp();
        for (i, class) in fleet.classes().iter().enumerate() {
            let price = data.log_prices()[(t, i)].exp();
            let litres = data.shares()[(t, i)] * x / price;
            let vmt = class.baseline_vmt * province_index[p_idx];
            let population = litres / (vmt * class.fuel_economy / 100.0);
            obs.push(PanelObservation::new(
                layout.provinces[p_idx].clone(),
                year,
                class.class.id.clone(),
                price,
                population,
                vmt,
            ));
        }
    }
    FuelPanel::new(obs)
}

/// Seed of the shipped sample panel.
pub const SAMPLE_SEED: u64 = 2012;

/// The shipped sample: 31 provinces by 10 years by the 10 fleet classes,
/// each class with its own price series.
#[derive(Debug, Clone)]
pub struct SamplePanel {
    pub panel: FuelPanel,
    /// Generating parameters in the panel's units (currency per litre and
    /// currency per province-year).
    pub truth: AidsParameters,
    pub noise_sd: f64,
}

pub fn sample_layout() -> PanelLayout {
    PanelLayout {
        provinces: (1..=31).map(|i| format!("P{i:02}")).collect(),
        first_year: 2003,
        n_years: 10,
    }
}

pub fn sample_panel(fleet: &FleetParams) -> Result<SamplePanel> {
    let layout = sample_layout();
    let n = fleet.classes().len();
    let mut design = SyntheticDesign::new(n, layout.n_obs(), 0.005, SAMPLE_SEED);
    // Around 7.5 per litre and 5e9 of fuel spending per province-year.
    design.log_price_mean = 7.5_f64.ln();
    design.log_expenditure_mean = 5.0e9_f64.ln();
    let s = simulate(&design)?;
    let panel = panel_from_shares(&s.data, fleet, &layout, SAMPLE_SEED + 1)?;
    Ok(SamplePanel {
        panel,
        truth: s.truth,
        noise_sd: design.noise_sd,
    })
}
