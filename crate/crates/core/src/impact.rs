//! Concentration, acute mortality and monetary valuation.

use serde::{Deserialize, Serialize};

use crate::data::{Pollutant, PollutantParams, PopulationParams, ValuationParams};
use crate::error::{Error, Result};

/// Well-mixed box over a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxModelParams {
    /// Area emission rate, µg/s/m².
    pub emission_rate: f64,
    /// Box length along the wind, m.
    pub length: f64,
    pub mixing_height: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
    pub background: f64,
}

/// `C = b + S L / (H u)`.
pub fn box_concentration(p: &BoxModelParams) -> Result<f64> {
    for (name, v) in [
        ("length", p.length),
        ("mixing_height", p.mixing_height),
        ("wind_speed", p.wind_speed),
    ] {
        if !(v > 0.0) {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    if !(p.emission_rate >= 0.0) {
        return Err(Error::invalid("emission_rate", format!("must be nonnegative, got {}", p.emission_rate)));
    }
    Ok(p.background + p.emission_rate * p.length / (p.mixing_height * p.wind_speed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationDelta {
    pub pollutant: Pollutant,
    pub baseline: f64,
    pub scenario: f64,
    pub delta: f64,
}

/// Scenario concentration when emissions change by `emission_ratio`
/// (`E2 / E1`): the above-background part scales with emissions.
pub fn scale_concentration(pp: &PollutantParams, emission_ratio: f64) -> Result<ConcentrationDelta> {
    pp.validate()?;
    if !(emission_ratio >= 0.0) || !emission_ratio.is_finite() {
        return Err(Error::invalid("emission_ratio", format!("must be nonnegative, got {emission_ratio}")));
    }
    let b = pp.background_concentration;
    let c1 = pp.baseline_concentration;
    let c2 = b + (c1 - b) * emission_ratio;
    Ok(ConcentrationDelta {
        pollutant: pp.pollutant,
        baseline: c1,
        scenario: c2,
        delta: (c1 - b) * (emission_ratio - 1.0),
    })
}

/// Linear exposure-response: `(er / 100) * dC * N * M`.
pub fn linear_acute_deaths(delta_concentration: f64, er_coefficient: f64, pop: &PopulationParams) -> Result<f64> {
    if !delta_concentration.is_finite() || !er_coefficient.is_finite() {
        return Err(Error::NonFinite("linear mortality inputs".into()));
    }
    Ok(crate::data::er_fraction(er_coefficient) * delta_concentration * pop.baseline_deaths())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearMortality {
    pub relative_risk: f64,
    pub attributable_fraction: f64,
    pub deaths: f64,
}

/// Log-linear relative risk above background:
/// `RR = exp(beta (C - b))`, `AF = (RR - 1) / RR`, deaths `= AF N M`.
pub fn nonlinear_acute_deaths(
    concentration: f64,
    pp: &PollutantParams,
    pop: &PopulationParams,
) -> Result<NonlinearMortality> {
    if !concentration.is_finite() {
        return Err(Error::NonFinite("concentration".into()));
    }
    let b = pp.background_concentration;
    if concentration < b {
        return Err(Error::BelowBackground {
            pollutant: pp.pollutant.to_string(),
            concentration,
            background: b,
        });
    }
    let x = pp.er_per_unit() * (concentration - b);
    let rr = x.exp();
    // (RR - 1) / RR = 1 - exp(-x), computed without cancellation.
    let af = -(-x).exp_m1();
    Ok(NonlinearMortality {
        relative_risk: rr,
        attributable_fraction: af,
        deaths: af * pop.baseline_deaths(),
    })
}

/// Change in nonlinear attributable deaths between two concentrations.
pub fn nonlinear_death_delta(
    baseline: f64,
    scenario: f64,
    pp: &PollutantParams,
    pop: &PopulationParams,
) -> Result<f64> {
    Ok(nonlinear_acute_deaths(scenario, pp, pop)?.deaths - nonlinear_acute_deaths(baseline, pp, pop)?.deaths)
}

/// `VOSL = VOSL_BL (I / I_BL)^e`.
pub fn vosl_transfer(v: &ValuationParams) -> Result<f64> {
    v.validate()?;
    Ok(v.vosl_baseline * (v.income / v.income_baseline).powf(v.wtp_elasticity))
}

/// Deaths valued at `vosl`, in millions of currency units.
pub fn monetize(deaths: f64, vosl: f64) -> Result<f64> {
    if !(vosl > 0.0) {
        return Err(Error::invalid("vosl", format!("must be positive, got {vosl}")));
    }
    Ok(deaths * vosl / 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MortalityModel {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortalityResult {
    pub pollutant: Pollutant,
    pub model: MortalityModel,
    pub deaths: f64,
    /// Scenario attributable fraction, nonlinear model only.
    pub attributable_fraction: Option<f64>,
    /// Millions of currency units.
    pub monetary_loss: f64,
}

/// Linear and nonlinear mortality changes for one concentration change.
pub fn mortality(
    c: &ConcentrationDelta,
    pp: &PollutantParams,
    pop: &PopulationParams,
    vosl: f64,
) -> Result<[MortalityResult; 2]> {
    let linear = linear_acute_deaths(c.delta, pp.er_coefficient, pop)?;
    let scenario = nonlinear_acute_deaths(c.scenario, pp, pop)?;
    let nonlinear = scenario.deaths - nonlinear_acute_deaths(c.baseline, pp, pop)?.deaths;
    Ok([
        MortalityResult {
            pollutant: c.pollutant,
            model: MortalityModel::Linear,
            deaths: linear,
            attributable_fraction: None,
            monetary_loss: monetize(linear, vosl)?,
        },
        MortalityResult {
            pollutant: c.pollutant,
            model: MortalityModel::Nonlinear,
            deaths: nonlinear,
            attributable_fraction: Some(scenario.attributable_fraction),
            monetary_loss: monetize(nonlinear, vosl)?,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterSet;

    fn box_params(s: f64) -> BoxModelParams {
        BoxModelParams {
            emission_rate: s,
            length: 1000.0,
            mixing_height: 100.0,
            wind_speed: 2.0,
            background: 10.0,
        }
    }

    #[test]
    fn box_model() {
        assert_eq!(box_concentration(&box_params(0.0)).unwrap(), 10.0);
        assert_eq!(box_concentration(&box_params(1.0)).unwrap(), 15.0);
        assert_eq!(box_concentration(&box_params(2.0)).unwrap() - 10.0, 10.0);
        let mut p = box_params(1.0);
        p.wind_speed = 0.0;
        assert!(box_concentration(&p).is_err());
    }

    #[test]
    fn concentration_scaling() {
        let set = ParameterSet::builtin();
        let nox = set.pollutant(Pollutant::Nox).unwrap();
        let d = scale_concentration(nox, 1.0 - 0.02594).unwrap();
        assert!((d.delta + 0.960).abs() < 5e-4, "{}", d.delta);
        let co = set.pollutant(Pollutant::Co).unwrap();
        let d = scale_concentration(co, 1.0 - 0.01074).unwrap();
        assert!((d.delta + 0.00322).abs() < 5e-6, "{}", d.delta);
        for p in &set.pollutants {
            assert_eq!(scale_concentration(p, 1.0).unwrap().delta, 0.0);
            assert_eq!(scale_concentration(p, 0.0).unwrap().scenario, p.background_concentration);
        }
        let mut bad = nox.clone();
        bad.baseline_concentration = bad.background_concentration;
        assert!(scale_concentration(&bad, 0.9).is_err());
    }

    #[test]
    fn linear_deaths() {
        let set = ParameterSet::builtin();
        let d = linear_acute_deaths(-0.960, 0.13, &set.population).unwrap();
        assert!((d / -12080.0 - 1.0).abs() < 0.01, "{d}");
        let d = linear_acute_deaths(-0.0792, 0.042, &set.population).unwrap();
        assert!((d / -322.0 - 1.0).abs() < 0.01, "{d}");
        assert_eq!(linear_acute_deaths(0.0, 0.13, &set.population).unwrap(), 0.0);
    }

    #[test]
    fn nonlinear_deaths() {
        let set = ParameterSet::builtin();
        let nox = set.pollutant(Pollutant::Nox).unwrap();
        let at_b = nonlinear_acute_deaths(10.0, nox, &set.population).unwrap();
        assert_eq!((at_b.relative_risk, at_b.attributable_fraction, at_b.deaths), (1.0, 0.0, 0.0));

        let base = nonlinear_acute_deaths(47.0, nox, &set.population).unwrap();
        let rr = (0.0013_f64 * 37.0).exp();
        assert!((base.relative_risk - rr).abs() < 1e-12);
        assert!((base.attributable_fraction - (rr - 1.0) / rr).abs() < 1e-12);
        assert!((base.deaths / 454_700.0 - 1.0).abs() < 1e-3, "{}", base.deaths);

        let delta = nonlinear_death_delta(47.0, 46.040, nox, &set.population).unwrap();
        assert!((delta / -11520.0 - 1.0).abs() < 0.01, "{delta}");

        assert!(matches!(
            nonlinear_acute_deaths(9.0, nox, &set.population),
            Err(Error::BelowBackground { .. })
        ));
    }

    #[test]
    fn valuation() {
        let mut v = ParameterSet::builtin().valuation;
        assert_eq!(vosl_transfer(&v).unwrap(), v.vosl_baseline);
        v.wtp_elasticity = 1.0;
        v.income = 2.0 * v.income_baseline;
        assert!((vosl_transfer(&v).unwrap() - 2.0 * v.vosl_baseline).abs() < 1e-6);

        let vosl = 855_642.81;
        assert!((monetize(-12080.0, vosl).unwrap() / -10336.235 - 1.0).abs() < 1e-3);
        assert!((monetize(-1154.0, vosl).unwrap() / -987.292 - 1.0).abs() < 1e-3);
        assert_eq!(monetize(0.0, vosl).unwrap(), 0.0);
        assert!(monetize(1.0, 0.0).is_err());
    }
}
