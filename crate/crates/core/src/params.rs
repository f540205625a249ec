//! Versioned parameter file: fleet, pollutant, population and valuation
//! tables in one TOML document. Every numeric field may carry a free-text
//! source annotation in a `sources` sub-table keyed by field name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    ClassParams, FleetParams, Pollutant, PollutantParams, PopulationParams, ValuationParams,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// File name of the parameter document inside a parameter directory.
pub const PARAMETER_FILE: &str = "parameters.toml";

const BUILTIN: &str = include_str!("../../../data/published/parameters.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawFile {
    schema_version: u32,
    population: Annotated<PopulationParams>,
    valuation: Annotated<ValuationParams>,
    #[serde(rename = "pollutant")]
    pollutants: Vec<Annotated<PollutantParams>>,
    #[serde(rename = "vehicle_class")]
    classes: Vec<Annotated<ClassParams>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Annotated<T> {
    #[serde(flatten)]
    value: T,
    #[serde(default)]
    sources: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ParameterSet {
    pub fleet: FleetParams,
    pub pollutants: Vec<PollutantParams>,
    pub population: PopulationParams,
    pub valuation: ValuationParams,
    /// `section.field` -> source annotation.
    pub sources: BTreeMap<String, String>,
}

impl ParameterSet {
    /// The parameter set shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("shipped parameter file is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    /// Loads `parameters.toml` from a parameter directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load(dir.as_ref().join(PARAMETER_FILE))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawFile = toml::from_str(text).map_err(|e| Error::parse("parameters", e))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", raw.schema_version),
            ));
        }
        raw.population.value.validate()?;
        raw.valuation.value.validate()?;

        let mut sources = BTreeMap::new();
        let mut note = |prefix: &str, map: &BTreeMap<String, String>| {
            for (k, v) in map {
                sources.insert(format!("{prefix}.{k}"), v.clone());
            }
        };
        note("population", &raw.population.sources);
        note("valuation", &raw.valuation.sources);

        let mut pollutants: Vec<PollutantParams> = Vec::new();
        for p in &raw.pollutants {
            p.value.validate()?;
            if pollutants.iter().any(|q| q.pollutant == p.value.pollutant) {
                return Err(Error::invalid(
                    "pollutant",
                    format!("duplicate entry for {}", p.value.pollutant),
                ));
            }
            note(p.value.pollutant.as_str(), &p.sources);
            pollutants.push(p.value.clone());
        }
        pollutants.sort_by_key(|p| p.pollutant);
        let configured: Vec<Pollutant> = pollutants.iter().map(|p| p.pollutant).collect();

        for c in &raw.classes {
            note(&c.value.class.id, &c.sources);
        }
        let fleet = FleetParams::new(
            raw.classes.into_iter().map(|c| c.value).collect(),
            &configured,
        )?;

        Ok(Self {
            fleet,
            pollutants,
            population: raw.population.value,
            valuation: raw.valuation.value,
            sources,
        })
    }

    pub fn pollutant(&self, p: Pollutant) -> Option<&PollutantParams> {
        self.pollutants.iter().find(|q| q.pollutant == p)
    }

    /// Numeric fields that carry no source annotation, as `section.field`.
    pub fn unsourced_fields(&self) -> Vec<String> {
        let mut expected: Vec<String> = Vec::new();
        for f in ["exposed_population", "mortality_rate"] {
            expected.push(format!("population.{f}"));
        }
        for f in ["vosl_baseline", "income_baseline", "income", "wtp_elasticity"] {
            expected.push(format!("valuation.{f}"));
        }
        for p in &self.pollutants {
            for f in [
                "background_concentration",
                "baseline_concentration",
                "baseline_emissions",
                "er_coefficient",
            ] {
                expected.push(format!("{}.{f}", p.pollutant));
            }
        }
        for c in self.fleet.classes() {
            for f in ["baseline_vmt", "fuel_economy"] {
                expected.push(format!("{}.{f}", c.class.id));
            }
            for p in c.emission_factors.keys() {
                expected.push(format!("{}.emission_factors.{p}", c.class.id));
            }
        }
        expected
            .into_iter()
            .filter(|k| !self.sources.contains_key(k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads_and_is_fully_sourced() {
        let p = ParameterSet::builtin();
        assert_eq!(p.fleet.classes().len(), 10);
        assert_eq!(p.pollutants.len(), 3);
        assert_eq!(p.unsourced_fields(), Vec::<String>::new());
    }

    #[test]
    fn builtin_values() {
        let p = ParameterSet::builtin();
        assert_eq!(p.population.exposed_population, 1_354_040_000.0);
        assert_eq!(p.population.mortality_rate, 0.00715);
        assert_eq!(p.valuation.vosl_baseline, 855_642.81);
        let nox = p.pollutant(Pollutant::Nox).unwrap();
        assert_eq!(
            (nox.background_concentration, nox.baseline_concentration, nox.baseline_emissions, nox.er_coefficient),
            (10.0, 47.0, 640.0, 0.13)
        );
        let co = p.pollutant(Pollutant::Co).unwrap();
        assert_eq!(co.baseline_emissions, 3471.0);
        let pm = p.pollutant(Pollutant::Pm25).unwrap();
        assert_eq!((pm.background_concentration, pm.baseline_concentration), (39.0, 44.7));
        let taxi = p.fleet.get("Taxi-G").unwrap();
        assert_eq!((taxi.baseline_vmt, taxi.fuel_economy), (74_900.0, 8.7));
        assert_eq!(taxi.emission_factors[&Pollutant::Co], 0.927);
        assert_eq!(p.fleet.get("LPV-D").unwrap().emission_factors[&Pollutant::Pm25], 0.2567);
    }

    #[test]
    fn rejects_bad_version_and_invariants() {
        let text = BUILTIN.replace("schema_version = 1", "schema_version = 2");
        assert!(ParameterSet::from_toml_str(&text).is_err());
        let text = BUILTIN.replace("mortality_rate = 0.00715", "mortality_rate = 1.5");
        assert!(ParameterSet::from_toml_str(&text).is_err());
    }
}
