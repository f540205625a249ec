//! Fuel-price shock scenarios driven through emissions, concentrations,
//! mortality and valuation, plus the regression harness against the
//! published results grid.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Fuel, Pollutant};
use crate::emissions::EmissionElasticityTable;
use crate::error::{Error, Result};
use crate::impact::{mortality, scale_concentration, vosl_transfer, ConcentrationDelta};
use crate::params::{ParameterSet, PARAMETER_FILE};

pub const SCENARIO_FILE: &str = "scenarios.toml";
pub const EMISSION_ELASTICITY_FILE: &str = "emission_price_elasticities.csv";
pub const PUBLISHED_RESULTS_FILE: &str = "published_results.csv";

/// Label used for the per-scenario totals row.
pub const TOTAL: &str = "Total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub label: String,
    /// Fractional price change per fuel.
    pub shock: BTreeMap<Fuel, f64>,
    #[serde(default)]
    pub notes: String,
}

impl Scenario {
    pub fn uniform(id: impl Into<String>, shock: f64) -> Self {
        let id = id.into();
        Self {
            label: id.clone(),
            id,
            shock: [(Fuel::Gasoline, shock), (Fuel::Diesel, shock)].into_iter().collect(),
            notes: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (fuel, &s) in &self.shock {
            if !s.is_finite() || s <= -1.0 {
                return Err(Error::invalid(
                    format!("{}.shock.{fuel}", self.id),
                    format!("shock must be greater than -1 so prices stay positive, got {s}"),
                ));
            }
        }
        Ok(())
    }

    pub fn shock_for(&self, fuel: Fuel) -> Result<f64> {
        self.shock.get(&fuel).copied().ok_or_else(|| Error::MissingShock {
            scenario: self.id.clone(),
            fuel: fuel.to_string(),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScenarioFile {
    #[serde(rename = "scenario", default)]
    scenarios: Vec<Scenario>,
}

pub fn parse_scenarios(text: &str, source: &Path) -> Result<Vec<Scenario>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::parse(source, e))?;
    let mut ids: Vec<&str> = Vec::new();
    for s in &file.scenarios {
        s.validate().map_err(|e| Error::parse(source, e))?;
        if ids.contains(&s.id.as_str()) {
            return Err(Error::parse(source, format!("duplicate scenario id `{}`", s.id)));
        }
        ids.push(&s.id);
    }
    Ok(file.scenarios)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text, path)
}

/// How per-class emission elasticities combine under a shock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationRule {
    /// `dE_k % = (1/N) sum_j pi_kj shock_j * 100`.
    #[default]
    Mean,
    /// `dE_k % = sum_j pi_kj shock_j * 100`.
    WeightedSum,
}

impl std::str::FromStr for AggregationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AggregationRule::Mean),
            "weighted-sum" => Ok(AggregationRule::WeightedSum),
            other => Err(Error::invalid("aggregation", format!("expected mean or weighted-sum, got `{other}`"))),
        }
    }
}

impl fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationRule::Mean => "mean",
            AggregationRule::WeightedSum => "weighted-sum",
        })
    }
}

/// Percent emission change per pollutant of `pi`, in the table's pollutant
/// order. `fuels[j]` is the fuel of column `j`.
pub fn apply_shock(
    s: &Scenario,
    pi: &EmissionElasticityTable,
    fuels: &[Fuel],
    rule: AggregationRule,
) -> Result<DVector<f64>> {
    let n = pi.classes.len();
    if fuels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "class fuels".into(),
            expected: n,
            actual: fuels.len(),
        });
    }
    s.validate()?;
    let shocks: Vec<f64> = fuels.iter().map(|&f| s.shock_for(f)).collect::<Result<_>>()?;
    let scale = match rule {
        AggregationRule::Mean => 1.0 / n as f64,
        AggregationRule::WeightedSum => 1.0,
    };
    Ok(DVector::from_fn(pi.pollutants.len(), |k, _| {
        scale * (0..n).map(|j| pi.price[(k, j)] * shocks[j]).sum::<f64>() * 100.0
    }))
}

/// Fuel of each column of `pi`. Pooled goods named `a+b` take the common
/// fuel of their members.
pub fn class_fuels(pi: &EmissionElasticityTable, params: &ParameterSet) -> Result<Vec<Fuel>> {
    pi.classes
        .iter()
        .map(|name| {
            let mut fuel = None;
            for member in name.split('+') {
                let f = params.fleet.fuel_of(member).ok_or_else(|| Error::MissingFleetEntry {
                    class: member.to_string(),
                })?;
                if fuel.is_some_and(|g| g != f) {
                    return Err(Error::invalid(name.clone(), "pooled good mixes fuels"));
                }
                fuel = Some(f);
            }
            fuel.ok_or_else(|| Error::MissingFleetEntry { class: name.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutantImpact {
    pub pollutant: Pollutant,
    /// 10^4 t per year.
    pub emission_delta: f64,
    pub emission_pct: f64,
    pub concentration: ConcentrationDelta,
    pub concentration_pct: f64,
    pub deaths_linear: f64,
    pub deaths_nonlinear: f64,
    /// Scenario attributable fraction under the nonlinear model.
    pub attributable_fraction: f64,
    /// Million currency units.
    pub losses_linear: f64,
    pub losses_nonlinear: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpactTotals {
    pub emission_delta: f64,
    pub deaths_linear: f64,
    pub deaths_nonlinear: f64,
    pub losses_linear: f64,
    pub losses_nonlinear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub label: String,
    pub pollutants: Vec<PollutantImpact>,
    pub totals: ImpactTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub aggregation: AggregationRule,
    pub vosl: f64,
    pub scenarios: Vec<ScenarioResult>,
}

/// Everything a scenario run needs besides the scenario itself.
#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    pub pi: EmissionElasticityTable,
    pub fuels: Vec<Fuel>,
    pub params: ParameterSet,
    pub rule: AggregationRule,
}

impl ScenarioInputs {
    pub fn new(pi: EmissionElasticityTable, params: ParameterSet, rule: AggregationRule) -> Result<Self> {
        let fuels = class_fuels(&pi, &params)?;
        for p in &pi.pollutants {
            if params.pollutant(*p).is_none() {
                return Err(Error::MissingInput(format!("no pollutant parameters for {p}")));
            }
        }
        Ok(Self { pi, fuels, params, rule })
    }
}

pub fn run_scenario(s: &Scenario, inputs: &ScenarioInputs) -> Result<ScenarioResult> {
    let pct = apply_shock(s, &inputs.pi, &inputs.fuels, inputs.rule)?;
    let vosl = vosl_transfer(&inputs.params.valuation)?;
    let pop = &inputs.params.population;
    let mut rows = Vec::with_capacity(pct.len());
    for (k, &p) in inputs.pi.pollutants.iter().enumerate() {
        let pp = inputs
            .params
            .pollutant(p)
            .ok_or_else(|| Error::MissingInput(format!("no pollutant parameters for {p}")))?;
        let ratio = 1.0 + pct[k] / 100.0;
        let conc = scale_concentration(pp, ratio)?;
        let [lin, non] = mortality(&conc, pp, pop, vosl)?;
        rows.push(PollutantImpact {
            pollutant: p,
            emission_delta: pp.baseline_emissions * pct[k] / 100.0,
            emission_pct: pct[k],
            concentration_pct: conc.delta / conc.baseline * 100.0,
            concentration: conc,
            deaths_linear: lin.deaths,
            deaths_nonlinear: non.deaths,
            attributable_fraction: non.attributable_fraction.unwrap_or_default(),
            losses_linear: lin.monetary_loss,
            losses_nonlinear: non.monetary_loss,
        });
    }
    let totals = ImpactTotals {
        emission_delta: rows.iter().map(|r| r.emission_delta).sum(),
        deaths_linear: rows.iter().map(|r| r.deaths_linear).sum(),
        deaths_nonlinear: rows.iter().map(|r| r.deaths_nonlinear).sum(),
        losses_linear: rows.iter().map(|r| r.losses_linear).sum(),
        losses_nonlinear: rows.iter().map(|r| r.losses_nonlinear).sum(),
    };
    Ok(ScenarioResult {
        id: s.id.clone(),
        label: s.label.clone(),
        pollutants: rows,
        totals,
    })
}

/// Runs every scenario. Scenarios are independent; they are evaluated on
/// scoped threads and collected in input order.
pub fn run_scenarios(scenarios: &[Scenario], inputs: &ScenarioInputs) -> Result<ImpactReport> {
    let results: Vec<Result<ScenarioResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(move || run_scenario(s, inputs)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario worker panicked"))
            .collect()
    });
    Ok(ImpactReport {
        aggregation: inputs.rule,
        vosl: vosl_transfer(&inputs.params.valuation)?,
        scenarios: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Columns of the delimited report.
pub const REPORT_COLUMNS: [&str; 12] = [
    "scenario",
    "label",
    "pollutant",
    "emission_delta_1e4t",
    "emission_pct",
    "concentration_delta",
    "concentration_unit",
    "concentration_pct",
    "deaths_linear",
    "losses_linear_mn",
    "deaths_nonlinear",
    "losses_nonlinear_mn",
];

fn f3(v: f64) -> String {
    // Avoid printing "-0.000".
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

impl ImpactReport {
    /// Delimited report rounded to 3 decimals; one row per scenario and
    /// pollutant plus a totals row per scenario.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::parse("impact report", e);
        w.write_record(REPORT_COLUMNS).map_err(err)?;
        for s in &self.scenarios {
            for r in &s.pollutants {
                w.write_record([
                    s.id.clone(),
                    s.label.clone(),
                    r.pollutant.to_string(),
                    f3(r.emission_delta),
                    f3(r.emission_pct),
                    f3(r.concentration.delta),
                    r.pollutant.concentration_unit().to_string(),
                    f3(r.concentration_pct),
                    f3(r.deaths_linear),
                    f3(r.losses_linear),
                    f3(r.deaths_nonlinear),
                    f3(r.losses_nonlinear),
                ])
                .map_err(err)?;
            }
            let t = &s.totals;
            w.write_record([
                s.id.clone(),
                s.label.clone(),
                TOTAL.to_string(),
                f3(t.emission_delta),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                f3(t.deaths_linear),
                f3(t.losses_linear),
                f3(t.deaths_nonlinear),
                f3(t.losses_nonlinear),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("impact report", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("impact report", e))
    }

    /// Long-format rows `scenario,pollutant,metric,value,unit` at full
    /// precision, for plotting.
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        let mut out = Vec::new();
        for s in &self.scenarios {
            for r in &s.pollutants {
                let unit = r.pollutant.concentration_unit();
                for (metric, value, unit) in [
                    ("emission_delta", r.emission_delta, "1e4 t"),
                    ("emission_pct", r.emission_pct, "%"),
                    ("concentration_delta", r.concentration.delta, unit),
                    ("concentration_pct", r.concentration_pct, "%"),
                    ("deaths_linear", r.deaths_linear, "persons"),
                    ("losses_linear", r.losses_linear, "million"),
                    ("deaths_nonlinear", r.deaths_nonlinear, "persons"),
                    ("losses_nonlinear", r.losses_nonlinear, "million"),
                ] {
                    out.push(PlotRow {
                        scenario: s.id.clone(),
                        pollutant: r.pollutant.to_string(),
                        metric: metric.into(),
                        value,
                        unit: unit.into(),
                    });
                }
            }
            let t = &s.totals;
            for (metric, value, unit) in [
                ("emission_delta", t.emission_delta, "1e4 t"),
                ("deaths_linear", t.deaths_linear, "persons"),
                ("losses_linear", t.losses_linear, "million"),
                ("deaths_nonlinear", t.deaths_nonlinear, "persons"),
                ("losses_nonlinear", t.losses_nonlinear, "million"),
            ] {
                out.push(PlotRow {
                    scenario: s.id.clone(),
                    pollutant: TOTAL.into(),
                    metric: metric.into(),
                    value,
                    unit: unit.into(),
                });
            }
        }
        out
    }

    pub fn write_plot_data<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.plot_rows() {
            w.serialize(row).map_err(|e| Error::parse("plot data", e))?;
        }
        w.flush().map_err(|e| Error::io("plot data", e))?;
        Ok(())
    }

    /// Value of one metric, as named in the published results file.
    pub fn metric(&self, scenario: &str, pollutant: &str, metric: &str) -> Option<f64> {
        let s = self.scenarios.iter().find(|s| s.id == scenario)?;
        if pollutant == TOTAL {
            let t = &s.totals;
            return match metric {
                "emission_delta" => Some(t.emission_delta),
                "deaths_linear" => Some(t.deaths_linear),
                "losses_linear" => Some(t.losses_linear),
                "deaths_nonlinear" => Some(t.deaths_nonlinear),
                "losses_nonlinear" => Some(t.losses_nonlinear),
                _ => None,
            };
        }
        let r = s.pollutants.iter().find(|r| r.pollutant.as_str() == pollutant)?;
        match metric {
            "emission_delta" => Some(r.emission_delta),
            "emission_pct" => Some(r.emission_pct),
            "concentration_delta" => Some(r.concentration.delta),
            "concentration_pct" => Some(r.concentration_pct),
            "deaths_linear" => Some(r.deaths_linear),
            "losses_linear" => Some(r.losses_linear),
            "deaths_nonlinear" => Some(r.deaths_nonlinear),
            "losses_nonlinear" => Some(r.losses_nonlinear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub scenario: String,
    pub pollutant: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
}

/// Acceptance rule for one published cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    /// `|computed / published - 1| <= max`.
    Relative { max: f64 },
    /// Both values rounded to `places` decimals differ by at most `units`
    /// in the last place.
    Decimal { places: u32, units: i64 },
    /// Passes when either the relative or the decimal rule passes.
    RelativeOrDecimal { max: f64, places: u32, units: i64 },
}

/// Emission quantities and percentage changes.
pub const EMISSION_TOLERANCE: Tolerance = Tolerance::Relative { max: 0.006 };
/// Concentration deltas at the published 3 decimals.
pub const CONCENTRATION_TOLERANCE: Tolerance = Tolerance::Decimal { places: 3, units: 2 };
/// Concentration percent changes are emission percent changes scaled by
/// `(C1 - b) / C1`; small cells are only meaningful at published precision.
pub const CONCENTRATION_PCT_TOLERANCE: Tolerance = Tolerance::RelativeOrDecimal {
    max: 0.006,
    places: 3,
    units: 2,
};
pub const LINEAR_TOLERANCE: Tolerance = Tolerance::Relative { max: 0.01 };
pub const NONLINEAR_TOLERANCE: Tolerance = Tolerance::Relative { max: 0.015 };

pub fn tolerance_for(metric: &str) -> Option<Tolerance> {
    match metric {
        "emission_delta" | "emission_pct" => Some(EMISSION_TOLERANCE),
        "concentration_delta" => Some(CONCENTRATION_TOLERANCE),
        "concentration_pct" => Some(CONCENTRATION_PCT_TOLERANCE),
        "deaths_linear" | "losses_linear" => Some(LINEAR_TOLERANCE),
        "deaths_nonlinear" | "losses_nonlinear" => Some(NONLINEAR_TOLERANCE),
        _ => None,
    }
}

impl Tolerance {
    pub fn accepts(&self, computed: f64, published: f64) -> bool {
        match *self {
            Tolerance::Relative { max } => {
                if published == 0.0 {
                    computed == 0.0
                } else {
                    (computed / published - 1.0).abs() <= max
                }
            }
            Tolerance::Decimal { places, units } => {
                let scale = 10f64.powi(places as i32);
                let a = (computed * scale).round() as i64;
                let b = (published * scale).round() as i64;
                (a - b).abs() <= units
            }
            Tolerance::RelativeOrDecimal { max, places, units } => {
                Tolerance::Relative { max }.accepts(computed, published)
                    || Tolerance::Decimal { places, units }.accepts(computed, published)
            }
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Relative { max } => write!(f, "rel<={max}"),
            Tolerance::Decimal { places, units } => write!(f, "{places}dp+-{units}"),
            Tolerance::RelativeOrDecimal { max, places, units } => {
                write!(f, "rel<={max}|{places}dp+-{units}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedCell {
    pub scenario: String,
    pub pollutant: String,
    pub metric: String,
    pub value: f64,
}

pub fn read_published<R: Read>(reader: R, source: &Path) -> Result<Vec<PublishedCell>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let cell: PublishedCell = rec.map_err(|e| Error::parse(source, e))?;
        if tolerance_for(&cell.metric).is_none() {
            return Err(Error::parse(source, format!("unknown metric `{}`", cell.metric)));
        }
        out.push(cell);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub pollutant: String,
    pub metric: String,
    pub computed: f64,
    pub published: f64,
    pub relative_error: f64,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn build(report: &ImpactReport, published: &[PublishedCell]) -> Result<Self> {
        let mut rows = Vec::new();
        for cell in published {
            if !report.scenarios.iter().any(|s| s.id == cell.scenario) {
                continue;
            }
            let computed = report.metric(&cell.scenario, &cell.pollutant, &cell.metric).ok_or_else(|| {
                Error::MissingInput(format!(
                    "report has no {} for {} in {}",
                    cell.metric, cell.pollutant, cell.scenario
                ))
            })?;
            let tol = tolerance_for(&cell.metric).expect("metrics checked on read");
            rows.push(ComparisonRow {
                scenario: cell.scenario.clone(),
                pollutant: cell.pollutant.clone(),
                metric: cell.metric.clone(),
                computed,
                published: cell.value,
                relative_error: if cell.value == 0.0 {
                    f64::NAN
                } else {
                    computed / cell.value - 1.0
                },
                tolerance: tol.to_string(),
                pass: tol.accepts(computed, cell.value),
            });
        }
        Ok(Self { rows })
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&ComparisonRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario",
            "pollutant",
            "metric",
            "computed",
            "published",
            "relative_error",
            "tolerance",
            "status",
        ])
        .map_err(|e| Error::parse("comparison", e))?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.pollutant.clone(),
                r.metric.clone(),
                format!("{:.6}", r.computed),
                r.published.to_string(),
                if r.relative_error.is_finite() {
                    format!("{:.6}", r.relative_error)
                } else {
                    String::new()
                },
                r.tolerance.clone(),
                if r.pass { "PASS" } else { "FAIL" }.to_string(),
            ])
            .map_err(|e| Error::parse("comparison", e))?;
        }
        w.flush().map_err(|e| Error::io("comparison", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub report: ImpactReport,
    pub comparison: Comparison,
}

fn required(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingInput(format!("parameter file {} not found", p.display())))
    }
}

/// Runs the shipped scenarios on the published elasticity and parameter
/// tables in `dir` and compares every published cell. `filter` restricts
/// the scenarios by id.
pub fn reproduce(dir: &Path, filter: Option<&[String]>) -> Result<Reproduction> {
    let params = ParameterSet::load(required(dir, PARAMETER_FILE)?)?;
    let pi = EmissionElasticityTable::load_price_csv(&required(dir, EMISSION_ELASTICITY_FILE)?)?;
    let mut scenarios = load_scenarios(&required(dir, SCENARIO_FILE)?)?;
    let published_path = required(dir, PUBLISHED_RESULTS_FILE)?;
    let file = std::fs::File::open(&published_path).map_err(|e| Error::io(&published_path, e))?;
    let published = read_published(file, &published_path)?;

    if let Some(ids) = filter {
        for id in ids {
            if !scenarios.iter().any(|s| &s.id == id) {
                return Err(Error::invalid("scenario", format!("unknown scenario `{id}`")));
            }
        }
        scenarios.retain(|s| ids.contains(&s.id));
    }
    let inputs = ScenarioInputs::new(pi, params, AggregationRule::Mean)?;
    let report = run_scenarios(&scenarios, &inputs)?;
    let comparison = Comparison::build(&report, &published)?;
    Ok(Reproduction { report, comparison })
}
