use std::path::Path;

use anyhow::{Context, Result};
use fuelshock_core::aids::{fit_aids, fit_double_log, DemandData, FitOptions, PriceGrouping, RESTRICTION_TOLERANCE};
use fuelshock_core::data::{derive_activity, load_panel, PanelSchema, Pollutant};
use fuelshock_core::document::FitDocument;
use fuelshock_core::elasticity::{ElasticityTable, EvaluationPoint};
use fuelshock_core::emissions::{emission_weights, ActivityBasis, ClassActivity, EmissionElasticityTable};
use fuelshock_core::scenario::{
    load_scenarios, read_published, reproduce, run_scenarios, AggregationRule, ScenarioInputs,
    EMISSION_ELASTICITY_FILE, PUBLISHED_RESULTS_FILE, SCENARIO_FILE,
};
use fuelshock_core::Error;
use serde::Serialize;

use crate::inputs::{existing, ParamDir};
use crate::output::Staged;
use crate::{ElasticityArgs, EstimateArgs, Format, Model, ReproduceArgs, ReproduceFailed, RunArgs, ValidateArgs};

fn read_text(path: &Path, what: &str) -> Result<String> {
    existing(path, what)?;
    Ok(std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    existing(&a.panel, "panel")?;
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "tol".into(),
            message: format!("must be positive, got {}", a.tol),
        }
        .into());
    }
    let index = a.index.parse()?;
    let params = ParamDir::resolve(a.params.params.as_deref())?.parameters()?;
    let panel = load_panel(&a.panel, &PanelSchema::default())?;
    let derived = derive_activity(&panel, &params.fleet)?;
    log::info!("{} observations in {} province-years", derived.len(), derived.groups().len());

    let mut staged = Staged::default();
    match a.model {
        Model::Aids => {
            let present = derived.classes();
            let order: Vec<String> = params.fleet.ids().into_iter().filter(|c| present.contains(c)).collect();
            let grouping = if a.group_prices {
                PriceGrouping::GroupIdentical
            } else {
                PriceGrouping::Distinct
            };
            let data = DemandData::from_panel(&derived, &order, grouping)?;
            let options = FitOptions {
                index,
                tol: a.tol,
                max_iter: a.max_iter as usize,
                dropped_equation: a.dropped_equation.clone(),
            };
            let fit = fit_aids(&data, &options)?;
            let residuals = fit.restriction_residuals();
            if residuals.max() >= RESTRICTION_TOLERANCE {
                log::warn!("restriction residual {:e} above {:e}", residuals.max(), RESTRICTION_TOLERANCE);
            }
            let mut doc = FitDocument::from_fit(&fit, &options);
            doc.activity_km = Some(ClassActivity::from_panel(&derived, &params.fleet, ActivityBasis::Km)?);
            doc.activity_litres = Some(ClassActivity::from_panel(&derived, &params.fleet, ActivityBasis::Litres)?);
            staged.add(&a.out, json_bytes(&doc)?);
            staged.commit()?;

            println!(
                "aids ({:?} index): {} goods, {} observations, equation `{}` dropped",
                fit.index,
                fit.goods.len(),
                fit.n_obs,
                fit.dropped_equation()
            );
            println!(
                "converged in {} iterations, final change {:.3e} (tol {:e})",
                fit.convergence.iterations, fit.convergence.final_change, a.tol
            );
            println!(
                "restriction residuals: alpha sum {:.1e}, beta sum {:.1e}, gamma symmetry {:.1e}, \
                 gamma rows {:.1e}, gamma columns {:.1e}",
                residuals.alpha_sum,
                residuals.beta_sum,
                residuals.gamma_symmetry,
                residuals.gamma_row_sums,
                residuals.gamma_column_sums
            );
        }
        Model::DoubleLog => {
            let fit = fit_double_log(&derived)?;
            let bytes = match a.format {
                Format::Json => json_bytes(&fit)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for c in &fit.classes {
                        w.serialize(c)?;
                    }
                    w.into_inner().context("flushing coefficient table")?
                }
            };
            staged.add(&a.out, bytes);
            staged.commit()?;
            println!("double-log: {} classes", fit.classes.len());
            for c in &fit.classes {
                println!(
                    "{:<8} own price {:>8.4} ({:.4})  expenditure {:>8.4} ({:.4})  n={}",
                    c.class, c.own_price, c.own_price_se, c.expenditure, c.expenditure_se, c.n_obs
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EmissionDocument {
    pollutants: Vec<Pollutant>,
    classes: Vec<String>,
    /// `price[k][j]`: pollutant `k`, price of class `j`.
    price: Vec<Vec<f64>>,
    expenditure: Option<Vec<f64>>,
}

pub fn elasticities(a: &ElasticityArgs) -> Result<()> {
    let doc = FitDocument::from_json(&read_text(&a.fit, "fit document")?).with_context(|| a.fit.display().to_string())?;
    let fit = doc.to_fit()?;
    let point = match a.at.as_str() {
        "means" => None,
        file => {
            let path = Path::new(file);
            let text = read_text(path, "evaluation point")?;
            let p: EvaluationPoint =
                serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
            Some(p)
        }
    };
    let table = ElasticityTable::from_fit(&fit, point)?;

    let mut staged = Staged::default();
    match a.format {
        Format::Csv => staged.render(a.out.join("demand_elasticities.csv"), |b| table.write_csv(b))?,
        Format::Json => staged.add(a.out.join("demand_elasticities.json"), json_bytes(&table.to_document())?),
    }

    if a.emissions {
        let basis: ActivityBasis = a.basis.parse()?;
        let params = ParamDir::resolve(a.params.params.as_deref())?.parameters()?;
        let activity = match basis {
            ActivityBasis::Km => doc.activity_km.as_ref(),
            ActivityBasis::Litres => doc.activity_litres.as_ref(),
        }
        .ok_or_else(|| {
            Error::MissingInput(format!(
                "{} has no {basis:?} activity; re-run estimate on a panel",
                a.fit.display()
            ))
        })?;
        let pollutants: Vec<Pollutant> = params.pollutants.iter().map(|p| p.pollutant).collect();
        let weights = emission_weights(&params.fleet, activity, &pollutants)?.aggregate(&fit.goods)?;
        let e = EmissionElasticityTable::from_demand(&table.price, Some(&table.expenditure), &weights)?;
        match a.format {
            Format::Csv => {
                staged.render(a.out.join(EMISSION_ELASTICITY_FILE), |b| e.write_price_csv(b))?;
                staged.render(a.out.join("emission_expenditure_elasticities.csv"), |b| e.write_expenditure_csv(b))?;
            }
            Format::Json => {
                let d = EmissionDocument {
                    pollutants: e.pollutants.clone(),
                    classes: e.classes.clone(),
                    price: (0..e.price.nrows()).map(|k| e.price.row(k).iter().copied().collect()).collect(),
                    expenditure: e.expenditure.as_ref().map(|v| v.iter().copied().collect()),
                };
                staged.add(a.out.join("emission_elasticities.json"), json_bytes(&d)?);
            }
        }
    }
    staged.commit()?;

    println!(
        "{} goods at {}: Engel aggregation {:.12}, homogeneity residual {:.1e}",
        table.goods.len(),
        if a.at == "means" { "sample means" } else { a.at.as_str() },
        table.engel_aggregation(),
        table.homogeneity_residual()
    );
    if table.price_se.is_none() {
        log::warn!("fit has no covariance; standard errors omitted");
    }
    Ok(())
}

pub fn scenario_run(a: &RunArgs) -> Result<()> {
    let dir = ParamDir::resolve(a.params.params.as_deref())?;
    let params = dir.parameters()?;
    let config = match &a.config {
        Some(p) => {
            existing(p, "scenario file")?;
            p.clone()
        }
        None => dir.file(SCENARIO_FILE)?,
    };
    let pi_path = match &a.elasticities {
        Some(p) => {
            existing(p, "emission elasticity table")?;
            p.clone()
        }
        None => dir.file(EMISSION_ELASTICITY_FILE)?,
    };
    let rule: AggregationRule = a.aggregation.parse()?;
    let scenarios = load_scenarios(&config)?;
    let pi = EmissionElasticityTable::load_price_csv(&pi_path)?;
    let inputs = ScenarioInputs::new(pi, params, rule)?;
    let report = run_scenarios(&scenarios, &inputs)?;

    let mut staged = Staged::default();
    match a.format {
        Format::Csv => staged.render(&a.out, |b| report.write_csv(b))?,
        Format::Json => {
            let mut text = report.to_json()?;
            text.push('\n');
            staged.add(&a.out, text.into_bytes());
        }
    }
    if let Some(p) = &a.plot_data {
        staged.render(p, |b| report.write_plot_data(b))?;
    }
    staged.commit()?;

    println!("{} scenarios, {rule} aggregation", report.scenarios.len());
    for s in &report.scenarios {
        let t = &s.totals;
        println!(
            "{}: emissions {:.3} x10^4 t; deaths {:.0} linear, {:.0} nonlinear; losses {:.3} / {:.3} million",
            s.id, t.emission_delta, t.deaths_linear, t.deaths_nonlinear, t.losses_linear, t.losses_nonlinear
        );
    }
    Ok(())
}

pub fn scenario_reproduce(a: &ReproduceArgs) -> Result<()> {
    let dir = ParamDir::resolve(a.params.params.as_deref())?;
    let filter = (!a.scenarios.is_empty()).then_some(a.scenarios.as_slice());
    let r = reproduce(dir.dir(), filter)?;

    let mut staged = Staged::default();
    staged.render(&a.out, |b| r.comparison.write_csv(b))?;
    if let Some(p) = &a.report {
        staged.render(p, |b| r.report.write_csv(b))?;
    }
    staged.commit()?;

    let total = r.comparison.rows.len();
    let failures = r.comparison.failures();
    for f in &failures {
        println!(
            "FAIL {} {} {}: computed {:.4}, published {} ({})",
            f.scenario, f.pollutant, f.metric, f.computed, f.published, f.tolerance
        );
    }
    println!("{} of {total} cells within tolerance", total - failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(ReproduceFailed {
            failed: failures.len(),
            total,
        }
        .into())
    }
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let dir = ParamDir::resolve(a.params.params.as_deref())?;
    let params = dir.parameters()?;
    println!("ok parameters ({}): {} classes, {} pollutants", dir.origin, params.fleet.classes().len(), params.pollutants.len());

    let config = match &a.config {
        Some(p) => Some(p.clone()),
        None => dir.file(SCENARIO_FILE).ok(),
    };
    if let Some(p) = config {
        existing(&p, "scenario file")?;
        let s = load_scenarios(&p)?;
        println!("ok scenarios {}: {}", dir.show(&p), s.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(" "));
    }

    let pi = match &a.elasticities {
        Some(p) => Some(p.clone()),
        None => dir.file(EMISSION_ELASTICITY_FILE).ok(),
    };
    if let Some(p) = pi {
        existing(&p, "emission elasticity table")?;
        let t = EmissionElasticityTable::load_price_csv(&p)?;
        ScenarioInputs::new(t.clone(), params.clone(), AggregationRule::Mean)?;
        println!("ok emission elasticities {}: {} classes", dir.show(&p), t.classes.len());
    }

    if let Ok(p) = dir.file(PUBLISHED_RESULTS_FILE) {
        let file = std::fs::File::open(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        let cells = read_published(file, &p)?;
        println!("ok published results {}: {} cells", dir.show(&p), cells.len());
    }

    if let Some(p) = &a.panel {
        existing(p, "panel")?;
        let panel = load_panel(p, &PanelSchema::default())?;
        let derived = derive_activity(&panel, &params.fleet)?;
        println!(
            "ok panel {}: {} rows, {} province-years, {} classes",
            p.display(),
            derived.len(),
            derived.groups().len(),
            derived.classes().len()
        );
    }

    if let Some(p) = &a.fit {
        let doc = FitDocument::from_json(&read_text(p, "fit document")?).with_context(|| p.display().to_string())?;
        let fit = doc.to_fit()?;
        println!(
            "ok fit {}: {} goods, restriction residual {:.1e}",
            p.display(),
            fit.goods.len(),
            fit.restriction_residuals().max()
        );
    }
    Ok(())
}
