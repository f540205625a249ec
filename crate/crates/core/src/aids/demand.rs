use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{FuelPanel, SHARE_SUM_TOLERANCE};
use crate::error::{Error, Result};

/// A good in the demand system: one vehicle class, or several classes
/// pooled because they face an identical price series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Good {
    pub name: String,
    pub members: Vec<String>,
}

impl Good {
    pub fn single(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            members: vec![name.clone()],
            name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceGrouping {
    /// Every class is its own good; identical price series are an error at
    /// estimation time.
    #[default]
    Distinct,
    /// Classes with identical price series are pooled into one good.
    GroupIdentical,
}

/// Share-equation data: `n` observations of `N` goods.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandData {
    goods: Vec<Good>,
    shares: DMatrix<f64>,
    log_prices: DMatrix<f64>,
    log_expenditure: DVector<f64>,
}

impl DemandData {
    pub fn new(
        goods: Vec<Good>,
        shares: DMatrix<f64>,
        log_prices: DMatrix<f64>,
        log_expenditure: DVector<f64>,
    ) -> Result<Self> {
        let n_goods = goods.len();
        let n_obs = shares.nrows();
        if shares.ncols() != n_goods {
            return Err(dim("share columns", n_goods, shares.ncols()));
        }
        if log_prices.nrows() != n_obs || log_prices.ncols() != n_goods {
            return Err(dim("log price matrix", n_obs * n_goods, log_prices.len()));
        }
        if log_expenditure.len() != n_obs {
            return Err(dim("log expenditure", n_obs, log_expenditure.len()));
        }
        if shares.iter().chain(log_prices.iter()).chain(log_expenditure.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("demand data".into()));
        }
        for t in 0..n_obs {
            let s = shares.row(t).sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::invalid(
                    "shares",
                    format!("observation {t}: shares sum to {s}, not 1"),
                ));
            }
        }
        Ok(Self {
            goods,
            shares,
            log_prices,
            log_expenditure,
        })
    }

    /// Builds share data from a derived panel. `order` fixes the good order;
    /// every (province, year) group must contain every class in `order`.
    pub fn from_panel(panel: &FuelPanel, order: &[String], grouping: PriceGrouping) -> Result<Self> {
        if !panel.is_derived() {
            return Err(Error::MissingInput("panel has no derived shares; run derive_activity first".into()));
        }
        let col: HashMap<&str, usize> = order.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        for c in panel.classes() {
            if !col.contains_key(c.as_str()) {
                return Err(Error::MissingFleetEntry { class: c });
            }
        }
        let groups = panel.groups();
        let n_obs = groups.len();
        let n = order.len();
        let mut shares = DMatrix::zeros(n_obs, n);
        let mut log_prices = DMatrix::zeros(n_obs, n);
        let mut log_x = DVector::zeros(n_obs);
        for (t, ((province, year), idx)) in groups.iter().enumerate() {
            let mut seen = vec![false; n];
            for &i in idx {
                let o = &panel.observations[i];
                let j = col[o.vehicle_class.as_str()];
                seen[j] = true;
                shares[(t, j)] = o.share.unwrap();
                log_prices[(t, j)] = o.price.ln();
                log_x[t] = o.group_expenditure.unwrap().ln();
            }
            if let Some(j) = seen.iter().position(|s| !s) {
                return Err(Error::InsufficientData(format!(
                    "{province} {year} has no observation for class `{}`",
                    order[j]
                )));
            }
            let s = shares.row(t).sum();
            if (s - 1.0).abs() > SHARE_SUM_TOLERANCE {
                return Err(Error::invalid("shares", format!("{province} {year} shares sum to {s}")));
            }
        }
        let data = Self::new(order.iter().cloned().map(Good::single).collect(), shares, log_prices, log_x)?;
        Ok(match grouping {
            PriceGrouping::Distinct => data,
            PriceGrouping::GroupIdentical => data.pool_identical_prices(),
        })
    }

    /// Pools goods whose log-price columns are identical into composite goods.
    pub fn pool_identical_prices(&self) -> Self {
        let n = self.n_goods();
        let mut group_of: Vec<Option<usize>> = vec![None; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            if group_of[i].is_some() {
                continue;
            }
            let g = groups.len();
            group_of[i] = Some(g);
            let mut members = vec![i];
            for j in (i + 1)..n {
                if group_of[j].is_none() && self.identical_prices(i, j) {
                    group_of[j] = Some(g);
                    members.push(j);
                }
            }
            groups.push(members);
        }
        let n_obs = self.n_obs();
        let mut shares = DMatrix::zeros(n_obs, groups.len());
        let mut log_prices = DMatrix::zeros(n_obs, groups.len());
        let mut goods = Vec::with_capacity(groups.len());
        for (g, members) in groups.iter().enumerate() {
            for t in 0..n_obs {
                shares[(t, g)] = members.iter().map(|&i| self.shares[(t, i)]).sum();
                log_prices[(t, g)] = self.log_prices[(t, members[0])];
            }
            let names: Vec<String> = members
                .iter()
                .flat_map(|&i| self.goods[i].members.iter().cloned())
                .collect();
            goods.push(Good {
                name: members.iter().map(|&i| self.goods[i].name.as_str()).collect::<Vec<_>>().join("+"),
                members: names,
            });
        }
        Self {
            goods,
            shares,
            log_prices,
            log_expenditure: self.log_expenditure.clone(),
        }
    }

    fn identical_prices(&self, i: usize, j: usize) -> bool {
        (0..self.n_obs()).all(|t| self.log_prices[(t, i)] == self.log_prices[(t, j)])
    }

    pub fn goods(&self) -> &[Good] {
        &self.goods
    }

    pub fn good_names(&self) -> Vec<String> {
        self.goods.iter().map(|g| g.name.clone()).collect()
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn n_obs(&self) -> usize {
        self.shares.nrows()
    }

    pub fn shares(&self) -> &DMatrix<f64> {
        &self.shares
    }

    pub fn log_prices(&self) -> &DMatrix<f64> {
        &self.log_prices
    }

    pub fn log_expenditure(&self) -> &DVector<f64> {
        &self.log_expenditure
    }

    pub fn share_row(&self, t: usize) -> DVector<f64> {
        self.shares.row(t).transpose()
    }

    pub fn log_price_row(&self, t: usize) -> DVector<f64> {
        self.log_prices.row(t).transpose()
    }

    pub fn mean_shares(&self) -> DVector<f64> {
        self.shares.row_mean().transpose()
    }

    pub fn mean_log_prices(&self) -> DVector<f64> {
        self.log_prices.row_mean().transpose()
    }

    /// Rows picked by index, with repetition allowed.
    pub fn resample(&self, rows: &[usize]) -> Self {
        Self {
            goods: self.goods.clone(),
            shares: self.shares.select_rows(rows),
            log_prices: self.log_prices.select_rows(rows),
            log_expenditure: DVector::from_iterator(rows.len(), rows.iter().map(|&t| self.log_expenditure[t])),
        }
    }

    /// Adds `shift` to every log price and to log expenditure, i.e. scales
    /// all prices and X by `exp(shift)`.
    pub fn rescaled(&self, shift: f64) -> Self {
        Self {
            goods: self.goods.clone(),
            shares: self.shares.clone(),
            log_prices: self.log_prices.add_scalar(shift),
            log_expenditure: self.log_expenditure.add_scalar(shift),
        }
    }

    /// Pairs of goods whose log-price difference is constant over the
    /// sample; such pairs make the homogeneity-restricted price regressors
    /// collinear with the intercept.
    pub fn collinear_price_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_goods();
        let n_obs = self.n_obs();
        let mut out = Vec::new();
        if n_obs == 0 {
            return out;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let diffs: Vec<f64> = (0..n_obs)
                    .map(|t| self.log_prices[(t, i)] - self.log_prices[(t, j)])
                    .collect();
                let mean = diffs.iter().sum::<f64>() / n_obs as f64;
                let spread = diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
                let scale = 1.0 + mean.abs();
                if spread <= 1e-12 * scale {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn dim(context: &str, expected: usize, actual: usize) -> Error {
    Error::DimensionMismatch {
        context: context.into(),
        expected,
        actual,
    }
}
