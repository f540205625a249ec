//! Input data: vehicle classes, fleet and pollutant parameters, and the
//! province-year fuel panel.
//!
//! Units are fixed at ingestion and never converted implicitly:
//! prices are currency per litre, VMT is km per vehicle-year, fuel economy is
//! litres per 100 km, emissions are 10^4 tonnes per year, CO concentrations
//! are mg/m3 and NOx / PM2.5 concentrations are ug/m3.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-group share sum after derivation.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fuel {
    Gasoline,
    Diesel,
}

impl fmt::Display for Fuel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fuel::Gasoline => f.write_str("gasoline"),
            Fuel::Diesel => f.write_str("diesel"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "CO")]
    Co,
    #[serde(rename = "NOx")]
    Nox,
    #[serde(rename = "PM2.5")]
    Pm25,
}

impl Pollutant {
    pub const ALL: [Pollutant; 3] = [Pollutant::Co, Pollutant::Nox, Pollutant::Pm25];

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::Co => "CO",
            Pollutant::Nox => "NOx",
            Pollutant::Pm25 => "PM2.5",
        }
    }

    /// Concentration unit used throughout for this pollutant.
    pub fn concentration_unit(self) -> &'static str {
        match self {
            Pollutant::Co => "mg/m3",
            Pollutant::Nox | Pollutant::Pm25 => "ug/m3",
        }
    }
}

impl fmt::Display for Pollutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pollutant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "CO" | "co" => Ok(Pollutant::Co),
            "NOx" | "NOX" | "nox" => Ok(Pollutant::Nox),
            "PM2.5" | "pm2.5" | "PM25" | "pm25" => Ok(Pollutant::Pm25),
            other => Err(Error::invalid("pollutant", format!("unknown pollutant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleClass {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub fuel: Fuel,
}

/// Per-class activity and emission parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    #[serde(flatten)]
    pub class: VehicleClass,
    /// National average annual VMT, km per vehicle.
    pub baseline_vmt: f64,
    /// Litres per 100 km.
    pub fuel_economy: f64,
    /// Grams per km.
    pub emission_factors: BTreeMap<Pollutant, f64>,
}

/// Fleet parameters in configured class order.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetParams {
    classes: Vec<ClassParams>,
}

impl FleetParams {
    pub fn new(classes: Vec<ClassParams>, pollutants: &[Pollutant]) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &classes {
            let id = &c.class.id;
            if !seen.insert(id.clone()) {
                return Err(Error::invalid("vehicle_class.id", format!("duplicate class `{id}`")));
            }
            positive(&format!("{id}.baseline_vmt"), c.baseline_vmt)?;
            positive(&format!("{id}.fuel_economy"), c.fuel_economy)?;
            for p in pollutants {
                match c.emission_factors.get(p) {
                    Some(&v) => positive(&format!("{id}.emission_factors.{p}"), v)?,
                    None => {
                        return Err(Error::invalid(
                            format!("{id}.emission_factors"),
                            format!("no emission factor for {p}"),
                        ))
                    }
                }
            }
        }
        if classes.is_empty() {
            return Err(Error::invalid("vehicle_class", "fleet has no classes"));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[ClassParams] {
        &self.classes
    }

    pub fn get(&self, id: &str) -> Option<&ClassParams> {
        self.classes.iter().find(|c| c.class.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.class.id.clone()).collect()
    }

    pub fn fuel_of(&self, id: &str) -> Option<Fuel> {
        self.get(id).map(|c| c.class.fuel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantParams {
    pub pollutant: Pollutant,
    /// b_k, in the pollutant's concentration unit.
    pub background_concentration: f64,
    /// C_k1, in the pollutant's concentration unit.
    pub baseline_concentration: f64,
    /// E_k1, 10^4 tonnes per year.
    pub baseline_emissions: f64,
    /// Percent change in mortality per unit concentration.
    pub er_coefficient: f64,
}

impl PollutantParams {
    pub fn validate(&self) -> Result<()> {
        let p = self.pollutant;
        positive(&format!("{p}.background_concentration"), self.background_concentration)?;
        positive(&format!("{p}.baseline_emissions"), self.baseline_emissions)?;
        positive(&format!("{p}.er_coefficient"), self.er_coefficient)?;
        if !(self.baseline_concentration > self.background_concentration) {
            return Err(Error::invalid(
                format!("{p}.baseline_concentration"),
                format!(
                    "baseline {} must exceed background {}",
                    self.baseline_concentration, self.background_concentration
                ),
            ));
        }
        Ok(())
    }

    /// ER coefficient as a fraction per concentration unit. This is the only
    /// place the percent-to-fraction conversion happens.
    pub fn er_per_unit(&self) -> f64 {
        er_fraction(self.er_coefficient)
    }
}

/// Converts a percent-per-unit ER coefficient to a fraction per unit.
pub fn er_fraction(er_percent: f64) -> f64 {
    er_percent / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub exposed_population: f64,
    pub mortality_rate: f64,
}

impl PopulationParams {
    pub fn validate(&self) -> Result<()> {
        positive("population.exposed_population", self.exposed_population)?;
        if !(self.mortality_rate > 0.0 && self.mortality_rate < 1.0) {
            return Err(Error::invalid(
                "population.mortality_rate",
                format!("must lie in (0, 1), got {}", self.mortality_rate),
            ));
        }
        Ok(())
    }

    /// N x M, baseline deaths per year.
    pub fn baseline_deaths(&self) -> f64 {
        self.exposed_population * self.mortality_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationParams {
    pub vosl_baseline: f64,
    pub income_baseline: f64,
    pub income: f64,
    #[serde(default = "default_wtp_elasticity")]
    pub wtp_elasticity: f64,
}

fn default_wtp_elasticity() -> f64 {
    1.0
}

impl ValuationParams {
    pub fn validate(&self) -> Result<()> {
        positive("valuation.vosl_baseline", self.vosl_baseline)?;
        positive("valuation.income_baseline", self.income_baseline)?;
        positive("valuation.income", self.income)?;
        positive("valuation.wtp_elasticity", self.wtp_elasticity)
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive, got {v}")))
    }
}

/// One province-year-class row. Derived fields are `None` until
/// [`derive_activity`] runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub province: String,
    pub year: i32,
    pub vehicle_class: String,
    pub price: f64,
    pub vehicle_population: f64,
    pub vmt: f64,
    pub quantity: Option<f64>,
    pub expenditure: Option<f64>,
    pub group_expenditure: Option<f64>,
    pub share: Option<f64>,
}

impl PanelObservation {
    pub fn new(
        province: impl Into<String>,
        year: i32,
        vehicle_class: impl Into<String>,
        price: f64,
        vehicle_population: f64,
        vmt: f64,
    ) -> Self {
        Self {
            province: province.into(),
            year,
            vehicle_class: vehicle_class.into(),
            price,
            vehicle_population,
            vmt,
            quantity: None,
            expenditure: None,
            group_expenditure: None,
            share: None,
        }
    }

    pub fn group_key(&self) -> (&str, i32) {
        (&self.province, self.year)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FuelPanel {
    pub observations: Vec<PanelObservation>,
}

impl FuelPanel {
    pub fn new(observations: Vec<PanelObservation>) -> Result<Self> {
        let mut keys = HashSet::new();
        for (i, o) in observations.iter().enumerate() {
            let line = i + 2;
            check_row(line, o)?;
            if !keys.insert((o.province.clone(), o.year, o.vehicle_class.clone())) {
                return Err(Error::DuplicateKey {
                    line,
                    province: o.province.clone(),
                    year: o.year,
                    class: o.vehicle_class.clone(),
                });
            }
        }
        Ok(Self { observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_derived(&self) -> bool {
        !self.observations.is_empty() && self.observations.iter().all(|o| o.share.is_some())
    }

    /// Distinct vehicle classes in first-appearance order.
    pub fn classes(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.observations
            .iter()
            .filter(|o| seen.insert(o.vehicle_class.as_str()))
            .map(|o| o.vehicle_class.clone())
            .collect()
    }

    /// Observation indices grouped by (province, year), groups sorted by key.
    pub fn groups(&self) -> BTreeMap<(String, i32), Vec<usize>> {
        let mut out: BTreeMap<(String, i32), Vec<usize>> = BTreeMap::new();
        for (i, o) in self.observations.iter().enumerate() {
            out.entry((o.province.clone(), o.year)).or_default().push(i);
        }
        out
    }
}

fn check_row(line: usize, o: &PanelObservation) -> Result<()> {
    if !(o.price.is_finite() && o.price > 0.0) {
        return Err(Error::NonPositivePrice { line, value: o.price });
    }
    for (column, v) in [("vehicle_population", o.vehicle_population), ("vmt", o.vmt)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidCell {
                line,
                column: column.into(),
                message: format!("must be non-negative, got {v}"),
            });
        }
    }
    Ok(())
}

/// Column names of the panel file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSchema {
    pub province: String,
    pub year: String,
    pub class: String,
    pub price: String,
    pub vehicle_population: String,
    pub vmt: String,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            province: "province".into(),
            year: "year".into(),
            class: "class".into(),
            price: "price".into(),
            vehicle_population: "vehicle_population".into(),
            vmt: "vmt".into(),
        }
    }
}

impl PanelSchema {
    fn columns(&self) -> [&str; 6] {
        [
            &self.province,
            &self.year,
            &self.class,
            &self.price,
            &self.vehicle_population,
            &self.vmt,
        ]
    }
}

pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<FuelPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

/// Reads a panel from comma-delimited text with a header row. Line numbers
/// in errors count the header as line 1.
pub fn read_panel<R: Read>(reader: R, schema: &PanelSchema) -> Result<FuelPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse("panel", e))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut cols = [0usize; 6];
    for (slot, name) in cols.iter_mut().zip(schema.columns()) {
        *slot = *index.get(name).ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })?;
    }
    let names = schema.columns();

    let mut observations = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse("panel", e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |k: usize| rec.get(cols[k]).unwrap_or("");
        let number = |k: usize| -> Result<f64> {
            let raw = cell(k);
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                line,
                column: names[k].to_string(),
                value: raw.to_string(),
            })
        };
        let year = cell(1).parse::<i32>().map_err(|_| Error::NonNumeric {
            line,
            column: names[1].to_string(),
            value: cell(1).to_string(),
        })?;
        let obs = PanelObservation::new(cell(0), year, cell(2), number(3)?, number(4)?, number(5)?);
        if obs.province.is_empty() || obs.vehicle_class.is_empty() {
            return Err(Error::InvalidCell {
                line,
                column: if obs.province.is_empty() { names[0] } else { names[2] }.to_string(),
                message: "empty identifier".into(),
            });
        }
        check_row(line, &obs)?;
        observations.push((line, obs));
    }

    let mut keys = HashSet::new();
    for (line, o) in &observations {
        if !keys.insert((o.province.as_str(), o.year, o.vehicle_class.as_str())) {
            return Err(Error::DuplicateKey {
                line: *line,
                province: o.province.clone(),
                year: o.year,
                class: o.vehicle_class.clone(),
            });
        }
    }
    Ok(FuelPanel {
        observations: observations.into_iter().map(|(_, o)| o).collect(),
    })
}

/// Writes the raw (non-derived) columns in the default schema.
pub fn write_panel<W: Write>(panel: &FuelPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = PanelSchema::default();
    let io = |e: csv::Error| Error::parse("panel output", e);
    w.write_record(schema.columns()).map_err(io)?;
    for o in &panel.observations {
        w.write_record([
            o.province.clone(),
            o.year.to_string(),
            o.vehicle_class.clone(),
            o.price.to_string(),
            o.vehicle_population.to_string(),
            o.vmt.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("panel output", e))?;
    Ok(())
}

/// Fills quantity (litres), expenditure, group expenditure X and shares.
pub fn derive_activity(panel: &FuelPanel, fleet: &FleetParams) -> Result<FuelPanel> {
    let mut out = panel.clone();
    for o in &mut out.observations {
        let params = fleet.get(&o.vehicle_class).ok_or_else(|| Error::MissingFleetEntry {
            class: o.vehicle_class.clone(),
        })?;
        let q = fuel_quantity(o.vehicle_population, o.vmt, params.fuel_economy);
        o.quantity = Some(q);
        o.expenditure = Some(q * o.price);
    }
    for idx in out.groups().into_values() {
        let total: f64 = idx.iter().map(|&i| out.observations[i].expenditure.unwrap()).sum();
        if !(total > 0.0) {
            let o = &out.observations[idx[0]];
            return Err(Error::InvalidCell {
                line: idx[0] + 2,
                column: "vehicle_population".into(),
                message: format!(
                    "total fuel expenditure for {} {} is zero",
                    o.province, o.year
                ),
            });
        }
        for &i in &idx {
            let o = &mut out.observations[i];
            o.group_expenditure = Some(total);
            o.share = Some(o.expenditure.unwrap() / total);
        }
    }
    Ok(out)
}

/// Litres per year: vehicles x km per vehicle x litres per 100 km / 100.
pub fn fuel_quantity(vehicle_population: f64, vmt: f64, fuel_economy: f64) -> f64 {
    vehicle_population * vmt * fuel_economy / 100.0
}

/// Scales a national baseline VMT by the ratio of a provincial transport
/// distance index to the national one.
pub fn derive_vmt(baseline_vmt: f64, provincial_index: f64, national_index: f64) -> Result<f64> {
    positive("provincial_distance_index", provincial_index)?;
    positive("national_distance_index", national_index)?;
    Ok(baseline_vmt * provincial_index / national_index)
}

pub fn pm10_to_pm25(pm10_emissions: f64, factor: f64) -> Result<f64> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::invalid("pm10_conversion_factor", format!("must lie in (0, 1], got {factor}")));
    }
    if !(pm10_emissions >= 0.0) {
        return Err(Error::invalid("pm10_emissions", format!("must be non-negative, got {pm10_emissions}")));
    }
    Ok(pm10_emissions * factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fleet() -> FleetParams {
        let mk = |id: &str, fuel, vmt, fe| ClassParams {
            class: VehicleClass {
                id: id.into(),
                label: String::new(),
                fuel,
            },
            baseline_vmt: vmt,
            fuel_economy: fe,
            emission_factors: Pollutant::ALL.iter().map(|&p| (p, 1.0)).collect(),
        };
        FleetParams::new(
            vec![
                mk("Taxi-G", Fuel::Gasoline, 74_900.0, 8.7),
                mk("PB-D", Fuel::Diesel, 57_200.0, 33.0),
            ],
            &Pollutant::ALL,
        )
        .unwrap()
    }

    #[test]
    fn taxi_quantity() {
        let panel = FuelPanel::new(vec![PanelObservation::new("BJ", 2010, "Taxi-G", 6.0, 1000.0, 74_900.0)]).unwrap();
        let d = derive_activity(&panel, &fleet()).unwrap();
        let q = d.observations[0].quantity.unwrap();
        assert!((q - 6_516_300.0).abs() < 1e-6, "{q}");
        assert_eq!(d.observations[0].share, Some(1.0));
    }

    #[test]
    fn equal_expenditure_splits_evenly() {
        // 1000 * 100 * 10 / 100 * 2 = 20000 for both.
        let mut f = fleet();
        f.classes[0].fuel_economy = 10.0;
        f.classes[1].fuel_economy = 20.0;
        let panel = FuelPanel::new(vec![
            PanelObservation::new("BJ", 2010, "Taxi-G", 2.0, 1000.0, 100.0),
            PanelObservation::new("BJ", 2010, "PB-D", 1.0, 1000.0, 100.0),
        ])
        .unwrap();
        let d = derive_activity(&panel, &f).unwrap();
        for o in &d.observations {
            assert!((o.share.unwrap() - 0.5).abs() < 1e-15);
            assert_eq!(o.group_expenditure, Some(40_000.0));
        }
    }

    #[test]
    fn missing_fleet_entry() {
        let panel = FuelPanel::new(vec![PanelObservation::new("BJ", 2010, "HDT-D", 6.0, 1.0, 1.0)]).unwrap();
        assert!(matches!(
            derive_activity(&panel, &fleet()),
            Err(Error::MissingFleetEntry { class }) if class == "HDT-D"
        ));
    }

    #[test]
    fn vmt_scaling() {
        assert_eq!(derive_vmt(48_600.0, 1.7, 1.7).unwrap(), 48_600.0);
        assert!((derive_vmt(50_000.0, 1.2, 1.0).unwrap() - 60_000.0).abs() < 1e-9);
        assert!((derive_vmt(48_600.0, 0.9, 1.0).unwrap() - 43_740.0).abs() < 1e-9);
        assert!(derive_vmt(1.0, 0.0, 1.0).is_err());
        assert!(derive_vmt(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn pm_conversion() {
        assert!((pm10_to_pm25(62.2, 0.65).unwrap() - 40.43).abs() < 1e-12);
        assert_eq!(pm10_to_pm25(0.0, 0.65).unwrap(), 0.0);
        assert_eq!(pm10_to_pm25(100.0, 1.0).unwrap(), 100.0);
        assert!(pm10_to_pm25(1.0, 0.0).is_err());
        assert!(pm10_to_pm25(1.0, 1.5).is_err());
    }

    #[test]
    fn missing_price_column() {
        let text = "province,year,class,vehicle_population,vmt\nBJ,2010,Taxi-G,1,1\n";
        match read_panel(text.as_bytes(), &PanelSchema::default()) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "price"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_price_reports_line() {
        let text = "province,year,class,price,vehicle_population,vmt\n\
                    BJ,2010,Taxi-G,6.1,1,1\n\
                    BJ,2010,PB-D,-1,1,1\n";
        match read_panel(text.as_bytes(), &PanelSchema::default()) {
            Err(Error::NonPositivePrice { line, value }) => {
                assert_eq!(line, 3);
                assert_eq!(value, -1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_duplicate() {
        let text = "province,year,class,price,vehicle_population,vmt\nBJ,2010,Taxi-G,abc,1,1\n";
        assert!(matches!(
            read_panel(text.as_bytes(), &PanelSchema::default()),
            Err(Error::NonNumeric { line: 2, ref column, .. }) if column == "price"
        ));
        let text = "province,year,class,price,vehicle_population,vmt\n\
                    BJ,2010,Taxi-G,1,1,1\nBJ,2010,Taxi-G,2,1,1\n";
        assert!(matches!(
            read_panel(text.as_bytes(), &PanelSchema::default()),
            Err(Error::DuplicateKey { line: 3, .. })
        ));
    }

    #[test]
    fn custom_schema_columns() {
        let schema = PanelSchema {
            price: "p".into(),
            ..PanelSchema::default()
        };
        let text = "province,year,class,p,vehicle_population,vmt\nBJ,2010,Taxi-G,6,1,1\n";
        let panel = read_panel(text.as_bytes(), &schema).unwrap();
        assert_eq!(panel.observations[0].price, 6.0);
    }

    #[test]
    fn pollutant_validation() {
        let mut p = PollutantParams {
            pollutant: Pollutant::Nox,
            background_concentration: 10.0,
            baseline_concentration: 47.0,
            baseline_emissions: 640.0,
            er_coefficient: 0.13,
        };
        p.validate().unwrap();
        assert!((p.er_per_unit() - 0.0013).abs() < 1e-18);
        p.baseline_concentration = 9.0;
        assert!(p.validate().is_err());
    }
}
