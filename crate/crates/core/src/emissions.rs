//! Emission elasticities: demand elasticities averaged over vehicle classes
//! with weights given by each class's share of a pollutant's emissions.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aids::Good;
use crate::data::{FleetParams, FuelPanel, Pollutant};
use crate::error::{Error, Result};

/// Unit of the class activity `q_i` that multiplies the per-km emission
/// factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityBasis {
    /// Fleet vehicle-km per year; `a_ki q_i` is then grams per year.
    #[default]
    Km,
    /// Fuel litres per year, for sensitivity runs.
    Litres,
}

impl std::str::FromStr for ActivityBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "km" => Ok(ActivityBasis::Km),
            "litres" | "liters" => Ok(ActivityBasis::Litres),
            other => Err(Error::invalid("activity basis", format!("expected km or litres, got `{other}`"))),
        }
    }
}

/// Per-class activity levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassActivity {
    pub basis: ActivityBasis,
    pub classes: Vec<String>,
    pub values: Vec<f64>,
}

impl ClassActivity {
    /// Activity of `populations[i]` vehicles of each fleet class driving the
    /// class's baseline VMT.
    pub fn from_fleet(fleet: &FleetParams, populations: &[f64], basis: ActivityBasis) -> Result<Self> {
        if populations.len() != fleet.classes().len() {
            return Err(Error::DimensionMismatch {
                context: "fleet populations".into(),
                expected: fleet.classes().len(),
                actual: populations.len(),
            });
        }
        let values = fleet
            .classes()
            .iter()
            .zip(populations)
            .map(|(c, &n)| {
                let km = n * c.baseline_vmt;
                match basis {
                    ActivityBasis::Km => km,
                    ActivityBasis::Litres => km * c.fuel_economy / 100.0,
                }
            })
            .collect();
        Ok(Self {
            basis,
            classes: fleet.ids(),
            values,
        })
    }

    /// Mean per province-year activity of each class in a panel, in fleet
    /// order.
    pub fn from_panel(panel: &FuelPanel, fleet: &FleetParams, basis: ActivityBasis) -> Result<Self> {
        let ids = fleet.ids();
        let mut totals = vec![0.0; ids.len()];
        for o in &panel.observations {
            let idx = ids
                .iter()
                .position(|c| *c == o.vehicle_class)
                .ok_or_else(|| Error::MissingFleetEntry {
                    class: o.vehicle_class.clone(),
                })?;
            let km = o.vehicle_population * o.vmt;
            totals[idx] += match basis {
                ActivityBasis::Km => km,
                ActivityBasis::Litres => km * fleet.classes()[idx].fuel_economy / 100.0,
            };
        }
        let groups = panel.groups().len().max(1) as f64;
        Ok(Self {
            basis,
            classes: ids,
            values: totals.into_iter().map(|t| t / groups).collect(),
        })
    }
}

/// Emission shares `a_ki q_i / psi_k` by pollutant (rows) and class (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionWeights {
    pub pollutants: Vec<Pollutant>,
    pub classes: Vec<String>,
    /// `a_ki q_i`, grams per year under the km basis.
    pub emissions: DMatrix<f64>,
    /// `psi_k = sum_i a_ki q_i`.
    pub totals: DVector<f64>,
    pub weights: DMatrix<f64>,
}

/// Builds emission weights for every pollutant in `pollutants`. `activity`
/// must list classes in fleet order.
pub fn emission_weights(
    fleet: &FleetParams,
    activity: &ClassActivity,
    pollutants: &[Pollutant],
) -> Result<EmissionWeights> {
    let ids = fleet.ids();
    if activity.classes != ids {
        return Err(Error::invalid(
            "activity",
            format!("classes {:?} do not match fleet order {:?}", activity.classes, ids),
        ));
    }
    if let Some(v) = activity.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("activity", format!("activity must be finite and nonnegative, got {v}")));
    }
    let n = ids.len();
    let mut emissions = DMatrix::zeros(pollutants.len(), n);
    for (k, &p) in pollutants.iter().enumerate() {
        for (i, class) in fleet.classes().iter().enumerate() {
            let a = *class.emission_factors.get(&p).ok_or_else(|| {
                Error::invalid(format!("{}.emission_factors", class.class.id), format!("no factor for {p}"))
            })?;
            emissions[(k, i)] = a * activity.values[i];
        }
    }
    let totals = DVector::from_fn(pollutants.len(), |k, _| emissions.row(k).sum());
    for (k, &p) in pollutants.iter().enumerate() {
        if !(totals[k] > 0.0) {
            return Err(Error::invalid("activity", format!("total {p} emissions are zero")));
        }
    }
    let weights = DMatrix::from_fn(pollutants.len(), n, |k, i| emissions[(k, i)] / totals[k]);
    Ok(EmissionWeights {
        pollutants: pollutants.to_vec(),
        classes: ids,
        emissions,
        totals,
        weights,
    })
}

impl EmissionWeights {
    /// Weights summed over the members of each good, for demand systems
    /// estimated on pooled classes.
    pub fn aggregate(&self, goods: &[Good]) -> Result<EmissionWeights> {
        let mut seen = vec![false; self.classes.len()];
        let mut emissions = DMatrix::zeros(self.pollutants.len(), goods.len());
        for (g, good) in goods.iter().enumerate() {
            for m in &good.members {
                let i = self
                    .classes
                    .iter()
                    .position(|c| c == m)
                    .ok_or_else(|| Error::MissingFleetEntry { class: m.clone() })?;
                if seen[i] {
                    return Err(Error::invalid("goods", format!("class `{m}` appears in two goods")));
                }
                seen[i] = true;
                for k in 0..self.pollutants.len() {
                    emissions[(k, g)] += self.emissions[(k, i)];
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invalid("goods", format!("class `{}` is not in any good", self.classes[i])));
        }
        let weights = DMatrix::from_fn(self.pollutants.len(), goods.len(), |k, g| {
            emissions[(k, g)] / self.totals[k]
        });
        Ok(EmissionWeights {
            pollutants: self.pollutants.clone(),
            classes: goods.iter().map(|g| g.name.clone()).collect(),
            emissions,
            totals: self.totals.clone(),
            weights,
        })
    }
}

/// `pi_kj = sum_i (a_ki q_i / psi_k) e_ij`.
pub fn emission_price_elasticities(e: &DMatrix<f64>, w: &EmissionWeights) -> Result<DMatrix<f64>> {
    let n = w.classes.len();
    if e.nrows() != n || e.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "demand price elasticities".into(),
            expected: n,
            actual: e.nrows().max(e.ncols()),
        });
    }
    Ok(&w.weights * e)
}

/// `eta_k = sum_i (a_ki q_i / psi_k) e_i`.
pub fn emission_expenditure_elasticity(e: &DVector<f64>, w: &EmissionWeights) -> Result<DVector<f64>> {
    if e.len() != w.classes.len() {
        return Err(Error::DimensionMismatch {
            context: "expenditure elasticities".into(),
            expected: w.classes.len(),
            actual: e.len(),
        });
    }
    Ok(&w.weights * e)
}

/// Emission price elasticities `price[(k, j)]` for pollutant `k` and the
/// price of class (or good) `j`, plus optional expenditure elasticities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionElasticityTable {
    pub pollutants: Vec<Pollutant>,
    pub classes: Vec<String>,
    pub price: DMatrix<f64>,
    pub expenditure: Option<DVector<f64>>,
}

impl EmissionElasticityTable {
    pub fn from_demand(
        price: &DMatrix<f64>,
        expenditure: Option<&DVector<f64>>,
        w: &EmissionWeights,
    ) -> Result<Self> {
        Ok(Self {
            pollutants: w.pollutants.clone(),
            classes: w.classes.clone(),
            price: emission_price_elasticities(price, w)?,
            expenditure: expenditure.map(|e| emission_expenditure_elasticity(e, w)).transpose()?,
        })
    }

    pub fn get(&self, pollutant: Pollutant, class: &str) -> Option<f64> {
        let k = self.pollutants.iter().position(|&p| p == pollutant)?;
        let j = self.classes.iter().position(|c| c == class)?;
        Some(self.price[(k, j)])
    }

    /// Reads a price table: header `class,<pollutant>...`, one row per class.
    pub fn read_price_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::parse(source, e))?.clone();
        if header.get(0) != Some("class") {
            return Err(Error::MissingColumn { column: "class".into() });
        }
        let pollutants: Vec<Pollutant> = header
            .iter()
            .skip(1)
            .map(|h| h.parse())
            .collect::<Result<_>>()
            .map_err(|e| Error::parse(source, e))?;
        if pollutants.is_empty() {
            return Err(Error::parse(source, "no pollutant columns"));
        }
        let mut classes = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(source, e))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(row + 2);
            let class = rec.get(0).unwrap_or_default().to_string();
            if classes.contains(&class) {
                return Err(Error::parse(source, format!("line {line}: duplicate class `{class}`")));
            }
            let mut vals = Vec::with_capacity(pollutants.len());
            for (k, p) in pollutants.iter().enumerate() {
                let cell = rec.get(k + 1).unwrap_or_default();
                let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                    line,
                    column: p.to_string(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonNumeric {
                        line,
                        column: p.to_string(),
                        value: cell.to_string(),
                    });
                }
                vals.push(v);
            }
            classes.push(class);
            cols.push(vals);
        }
        if classes.is_empty() {
            return Err(Error::parse(source, "no class rows"));
        }
        let price = DMatrix::from_fn(pollutants.len(), classes.len(), |k, j| cols[j][k]);
        Ok(Self {
            pollutants,
            classes,
            price,
            expenditure: None,
        })
    }

    pub fn load_price_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_price_csv(f, path)
    }

    /// Writes the price table in the layout read by [`read_price_csv`].
    ///
    /// [`read_price_csv`]: EmissionElasticityTable::read_price_csv
    pub fn write_price_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::parse("emission elasticity table", e);
        let mut header = vec!["class".to_string()];
        header.extend(self.pollutants.iter().map(|p| p.to_string()));
        w.write_record(&header).map_err(err)?;
        for (j, c) in self.classes.iter().enumerate() {
            let mut rec = vec![c.clone()];
            rec.extend((0..self.pollutants.len()).map(|k| self.price[(k, j)].to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("emission elasticity table", e))?;
        Ok(())
    }

    /// Writes expenditure elasticities as `pollutant,elasticity`.
    pub fn write_expenditure_csv<W: Write>(&self, writer: W) -> Result<()> {
        let e = self
            .expenditure
            .as_ref()
            .ok_or_else(|| Error::MissingInput("no emission expenditure elasticities".into()))?;
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::parse("emission expenditure elasticities", e);
        w.write_record(["pollutant", "elasticity"]).map_err(err)?;
        for (k, p) in self.pollutants.iter().enumerate() {
            w.write_record([p.to_string(), e[k].to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("emission expenditure elasticities", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterSet;

    fn fleet() -> FleetParams {
        ParameterSet::builtin().fleet
    }

    #[test]
    fn single_class_weight_is_one() {
        let f = fleet();
        let mut pops = vec![0.0; f.classes().len()];
        pops[3] = 250.0;
        let a = ClassActivity::from_fleet(&f, &pops, ActivityBasis::Km).unwrap();
        let w = emission_weights(&f, &a, &Pollutant::ALL).unwrap();
        for k in 0..3 {
            assert_eq!(w.weights[(k, 3)], 1.0);
            let factor = f.classes()[3].emission_factors[&Pollutant::ALL[k]];
            assert!((w.totals[k] - factor * 250.0 * f.classes()[3].baseline_vmt).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_elasticities_pass_through() {
        let f = fleet();
        let a = ClassActivity::from_fleet(&f, &[1000.0; 10], ActivityBasis::Km).unwrap();
        let w = emission_weights(&f, &a, &Pollutant::ALL).unwrap();
        let pi = emission_price_elasticities(&DMatrix::from_element(10, 10, -0.3), &w).unwrap();
        assert!(pi.iter().all(|v| (v + 0.3).abs() < 1e-14));
        let eta = emission_expenditure_elasticity(&DVector::from_element(10, 1.0), &w).unwrap();
        assert!(eta.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn price_table_round_trip() {
        let t = EmissionElasticityTable {
            pollutants: Pollutant::ALL.to_vec(),
            classes: vec!["A".into(), "B".into()],
            price: DMatrix::from_row_slice(3, 2, &[-0.1, -0.2, -0.3, -0.4, -0.5, -0.625]),
            expenditure: None,
        };
        let mut buf = Vec::new();
        t.write_price_csv(&mut buf).unwrap();
        let back = EmissionElasticityTable::read_price_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dimension_mismatch() {
        let f = fleet();
        let a = ClassActivity::from_fleet(&f, &[1.0; 10], ActivityBasis::Litres).unwrap();
        let w = emission_weights(&f, &a, &Pollutant::ALL).unwrap();
        assert!(emission_price_elasticities(&DMatrix::zeros(9, 9), &w).is_err());
        assert!(emission_expenditure_elasticity(&DVector::zeros(3), &w).is_err());
    }
}
