use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::data::FuelPanel;
use crate::error::{Error, Result};

/// Per-class regression inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSeries {
    pub class: String,
    pub log_quantity: Vec<f64>,
    pub log_price: Vec<f64>,
    pub log_expenditure: Vec<f64>,
}

/// `ln q = intercept + own_price ln p + expenditure ln X`, with
/// conventional OLS standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogCoefficients {
    pub class: String,
    pub n_obs: usize,
    pub intercept: f64,
    pub own_price: f64,
    pub expenditure: f64,
    pub intercept_se: f64,
    pub own_price_se: f64,
    pub expenditure_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleLogFit {
    pub classes: Vec<DoubleLogCoefficients>,
}

impl DoubleLogFit {
    pub fn get(&self, class: &str) -> Option<&DoubleLogCoefficients> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Fits the double-log model class by class on a derived panel.
pub fn fit_double_log(panel: &FuelPanel) -> Result<DoubleLogFit> {
    if !panel.is_derived() {
        return Err(Error::MissingInput("panel has no derived quantities; run derive_activity first".into()));
    }
    let series: Vec<ClassSeries> = panel
        .classes()
        .into_iter()
        .map(|class| {
            let rows: Vec<_> = panel.observations.iter().filter(|o| o.vehicle_class == class).collect();
            let mut s = ClassSeries {
                class,
                log_quantity: Vec::with_capacity(rows.len()),
                log_price: Vec::with_capacity(rows.len()),
                log_expenditure: Vec::with_capacity(rows.len()),
            };
            for o in rows {
                let q = o.quantity.unwrap();
                let x = o.group_expenditure.unwrap();
                if !(q > 0.0 && x > 0.0) {
                    return Err(Error::invalid(
                        format!("{}.quantity", s.class),
                        format!("{} {}: quantity and expenditure must be positive", o.province, o.year),
                    ));
                }
                s.log_quantity.push(q.ln());
                s.log_price.push(o.price.ln());
                s.log_expenditure.push(x.ln());
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    fit_double_log_series(&series)
}

pub fn fit_double_log_series(series: &[ClassSeries]) -> Result<DoubleLogFit> {
    series.iter().map(fit_one).collect::<Result<Vec<_>>>().map(|classes| DoubleLogFit { classes })
}

fn fit_one(s: &ClassSeries) -> Result<DoubleLogCoefficients> {
    let n = s.log_quantity.len();
    if s.log_price.len() != n || s.log_expenditure.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!("double-log series for {}", s.class),
            expected: n,
            actual: s.log_price.len().min(s.log_expenditure.len()),
        });
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{} has {n} observations; the double-log model needs at least 3",
            s.class
        )));
    }
    for (name, v) in [("ln price", &s.log_price), ("ln expenditure", &s.log_expenditure)] {
        if variance(v) <= 1e-14 * (1.0 + mean(v).powi(2)) {
            return Err(Error::ZeroVariance {
                good: s.class.clone(),
                regressor: name.into(),
            });
        }
    }

    // Centered regressors keep the normal equations well conditioned when
    // ln X is large.
    let (mp, mx, mq) = (mean(&s.log_price), mean(&s.log_expenditure), mean(&s.log_quantity));
    let xc = DMatrix::from_fn(n, 2, |t, k| match k {
        0 => s.log_price[t] - mp,
        _ => s.log_expenditure[t] - mx,
    });
    let yc = DVector::from_iterator(n, s.log_quantity.iter().map(|q| q - mq));
    let xtx: Matrix2<f64> = (xc.transpose() * &xc).fixed_view::<2, 2>(0, 0).into_owned();
    let xty: Vector2<f64> = (xc.transpose() * &yc).fixed_view::<2, 1>(0, 0).into_owned();
    let inv = xtx.try_inverse().ok_or_else(|| Error::RankDeficient {
        goods: vec![s.class.clone()],
        message: format!("ln price and ln expenditure are collinear for {}", s.class),
    })?;
    let b = inv * xty;
    let intercept = mq - b[0] * mp - b[1] * mx;
    let resid = &yc - &xc * DVector::from_column_slice(b.as_slice());
    let dof = n.saturating_sub(3).max(1) as f64;
    let s2 = resid.norm_squared() / dof;
    let means = Vector2::new(mp, mx);
    let intercept_var = s2 * (1.0 / n as f64 + (means.transpose() * inv * means)[0]);
    let se = |k: usize| (s2 * inv[(k, k)]).max(0.0).sqrt();
    Ok(DoubleLogCoefficients {
        class: s.class.clone(),
        n_obs: n,
        intercept,
        own_price: b[0],
        expenditure: b[1],
        intercept_se: intercept_var.max(0.0).sqrt(),
        own_price_se: se(0),
        expenditure_se: se(1),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}
