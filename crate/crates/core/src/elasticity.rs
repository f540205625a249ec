//! Marshallian price and expenditure elasticities of an AIDS fit, with
//! delta-method standard errors.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aids::{AidsFit, AidsParameters};
use crate::error::{Error, Result};

/// Relative step for the numerical Jacobian: `h_k = 1e-6 * max(1, |theta_k|)`.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Tolerance on the share sum of an evaluation point.
pub const POINT_SHARE_TOLERANCE: f64 = 1e-8;

/// Shares and log prices at which elasticities are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPoint {
    pub shares: Vec<f64>,
    pub log_prices: Vec<f64>,
}

impl EvaluationPoint {
    pub fn new(shares: Vec<f64>, log_prices: Vec<f64>) -> Result<Self> {
        let p = Self { shares, log_prices };
        p.validate(None)?;
        Ok(p)
    }

    /// Sample-mean shares and log prices of a fit.
    pub fn sample_means(fit: &AidsFit) -> Self {
        Self {
            shares: fit.mean_shares.iter().copied().collect(),
            log_prices: fit.mean_log_prices.iter().copied().collect(),
        }
    }

    /// Model shares at the given log prices and log expenditure, under the
    /// translog index.
    pub fn fitted(params: &AidsParameters, log_prices: &[f64], log_expenditure: f64) -> Result<Self> {
        let lp = DVector::from_column_slice(log_prices);
        let w = params.shares(&lp, log_expenditure)?;
        Self::new(w.iter().copied().collect(), log_prices.to_vec())
    }

    pub fn validate(&self, goods: Option<&[String]>) -> Result<()> {
        let n = self.shares.len();
        if self.log_prices.len() != n {
            return Err(Error::DimensionMismatch {
                context: "evaluation point log prices".into(),
                expected: n,
                actual: self.log_prices.len(),
            });
        }
        if let Some(g) = goods {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "evaluation point".into(),
                    expected: g.len(),
                    actual: n,
                });
            }
        }
        for (i, &w) in self.shares.iter().enumerate() {
            if !(w > 0.0 && w < 1.0) {
                let good = goods.map(|g| g[i].clone()).unwrap_or_else(|| format!("good {i}"));
                return Err(Error::ZeroShare { good, share: w });
            }
        }
        if self.log_prices.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point log prices".into()));
        }
        let sum: f64 = self.shares.iter().sum();
        if (sum - 1.0).abs() > POINT_SHARE_TOLERANCE {
            return Err(Error::invalid("evaluation point", format!("shares sum to {sum}, not 1")));
        }
        Ok(())
    }
}

fn check_shares(shares: &DVector<f64>, n: usize) -> Result<()> {
    if shares.len() != n {
        return Err(Error::DimensionMismatch {
            context: "shares".into(),
            expected: n,
            actual: shares.len(),
        });
    }
    if let Some(i) = shares.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::ZeroShare {
            good: format!("good {i}"),
            share: shares[i],
        });
    }
    Ok(())
}

/// `e_ij = -delta_ij + (gamma_ij - beta_i (alpha_j + sum_m gamma_jm ln p_m)) / w_i`.
pub fn price_elasticities(
    params: &AidsParameters,
    shares: &DVector<f64>,
    log_prices: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = params.n_goods();
    check_shares(shares, n)?;
    if log_prices.len() != n {
        return Err(Error::DimensionMismatch {
            context: "log prices".into(),
            expected: n,
            actual: log_prices.len(),
        });
    }
    let grad = params.index_gradient(log_prices);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let kron = if i == j { 1.0 } else { 0.0 };
        -kron + (params.gamma[(i, j)] - params.beta[i] * grad[j]) / shares[i]
    }))
}

/// `e_i = 1 + beta_i / w_i`.
pub fn expenditure_elasticities(params: &AidsParameters, shares: &DVector<f64>) -> Result<DVector<f64>> {
    let n = params.n_goods();
    check_shares(shares, n)?;
    Ok(DVector::from_fn(n, |i, _| 1.0 + params.beta[i] / shares[i]))
}

/// Delta-method standard errors of `target(theta)` given the covariance of
/// `theta`, with a central-difference Jacobian.
pub fn delta_method<F>(theta: &DVector<f64>, covariance: &DMatrix<f64>, mut target: F) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k = theta.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "parameter covariance".into(),
            expected: k,
            actual: covariance.nrows(),
        });
    }
    let m = target(theta)?.len();
    let mut jac = DMatrix::zeros(m, k);
    let mut probe = theta.clone();
    for c in 0..k {
        let h = JACOBIAN_STEP * theta[c].abs().max(1.0);
        probe[c] = theta[c] + h;
        let up = target(&probe)?;
        probe[c] = theta[c] - h;
        let down = target(&probe)?;
        probe[c] = theta[c];
        jac.set_column(c, &((up - down) / (2.0 * h)));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("delta-method Jacobian".into()));
    }
    let v = &jac * covariance * jac.transpose();
    Ok(DVector::from_fn(m, |i, _| v[(i, i)].max(0.0).sqrt()))
}

/// Delta-method standard errors of a function of the fitted parameters,
/// differentiated with respect to the free parameters.
pub fn delta_method_se<F>(fit: &AidsFit, mut target: F) -> Result<DVector<f64>>
where
    F: FnMut(&AidsParameters) -> Result<DVector<f64>>,
{
    let cov = fit.covariance.as_ref().ok_or(Error::MissingCovariance)?;
    delta_method(&fit.free_parameters(), cov, |theta| target(&fit.map.expand(theta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityTable {
    pub goods: Vec<String>,
    /// `price[(i, j)]`: response of good `i` to the price of good `j`.
    pub price: DMatrix<f64>,
    pub expenditure: DVector<f64>,
    pub price_se: Option<DMatrix<f64>>,
    pub expenditure_se: Option<DVector<f64>>,
    pub point: EvaluationPoint,
}

impl ElasticityTable {
    /// Elasticities at `point` (sample means when `None`), with delta-method
    /// standard errors when the fit carries a covariance. Shares are held
    /// fixed at the evaluation point when differentiating.
    pub fn from_fit(fit: &AidsFit, point: Option<EvaluationPoint>) -> Result<Self> {
        let goods = fit.good_names();
        let point = point.unwrap_or_else(|| EvaluationPoint::sample_means(fit));
        point.validate(Some(&goods))?;
        let w = DVector::from_column_slice(&point.shares);
        let lp = DVector::from_column_slice(&point.log_prices);
        let n = goods.len();

        let price = price_elasticities(&fit.params, &w, &lp)?;
        let expenditure = expenditure_elasticities(&fit.params, &w)?;
        let (price_se, expenditure_se) = match fit.covariance {
            Some(_) => {
                let pse = delta_method_se(fit, |p| {
                    price_elasticities(p, &w, &lp).map(|e| DVector::from_column_slice(e.as_slice()))
                })?;
                let ese = delta_method_se(fit, |p| expenditure_elasticities(p, &w))?;
                (Some(DMatrix::from_column_slice(n, n, pse.as_slice())), Some(ese))
            }
            None => (None, None),
        };
        Ok(Self {
            goods,
            price,
            expenditure,
            price_se,
            expenditure_se,
            point,
        })
    }

    /// `sum_i w_i e_i`, which is 1 for restricted parameters.
    pub fn engel_aggregation(&self) -> f64 {
        self.point.shares.iter().zip(self.expenditure.iter()).map(|(w, e)| w * e).sum()
    }

    /// Largest `|sum_j e_ij + e_i|` over goods.
    pub fn homogeneity_residual(&self) -> f64 {
        (0..self.goods.len())
            .map(|i| (self.price.row(i).sum() + self.expenditure[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_document(&self) -> ElasticityDocument {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        ElasticityDocument {
            goods: self.goods.clone(),
            price: rows(&self.price),
            expenditure: self.expenditure.iter().copied().collect(),
            price_se: self.price_se.as_ref().map(rows),
            expenditure_se: self.expenditure_se.as_ref().map(|v| v.iter().copied().collect()),
            evaluation_point: self.point.clone(),
            engel_aggregation: self.engel_aggregation(),
            homogeneity_residual: self.homogeneity_residual(),
        }
    }

    /// Delimited long table: `good,with_respect_to,elasticity,se`, where
    /// `with_respect_to` is a good name for price elasticities and
    /// `expenditure` for expenditure elasticities.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::parse("elasticity table", e);
        w.write_record(["good", "with_respect_to", "elasticity", "se"]).map_err(err)?;
        let fmt_se = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, gi) in self.goods.iter().enumerate() {
            for (j, gj) in self.goods.iter().enumerate() {
                let se = self.price_se.as_ref().map(|s| s[(i, j)]);
                w.write_record([gi, gj, &self.price[(i, j)].to_string(), &fmt_se(se)])
                    .map_err(err)?;
            }
            let se = self.expenditure_se.as_ref().map(|s| s[i]);
            w.write_record([gi, "expenditure", &self.expenditure[i].to_string(), &fmt_se(se)])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("elasticity table", e))?;
        Ok(())
    }
}

/// Serialized form of an [`ElasticityTable`]; matrices are stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityDocument {
    pub goods: Vec<String>,
    pub price: Vec<Vec<f64>>,
    pub expenditure: Vec<f64>,
    pub price_se: Option<Vec<Vec<f64>>>,
    pub expenditure_se: Option<Vec<f64>>,
    pub evaluation_point: EvaluationPoint,
    pub engel_aggregation: f64,
    pub homogeneity_residual: f64,
}
