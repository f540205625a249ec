//! Almost Ideal Demand System: parameters, share equations, and estimation
//! under adding-up, homogeneity and symmetry.

mod demand;
mod double_log;
mod fit;
mod restrict;

pub use demand::{DemandData, Good, PriceGrouping};
pub use double_log::{fit_double_log, fit_double_log_series, ClassSeries, DoubleLogCoefficients, DoubleLogFit};
pub use fit::{fit_aids, AidsFit, Convergence, FitOptions};
pub use restrict::RestrictionMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance at which the restrictions are checked on fitted parameters.
pub const RESTRICTION_TOLERANCE: f64 = 1e-8;

/// Deflator used for real expenditure ln(X/P).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceIndex {
    /// ln P = a0 + sum a_j ln p_j + 1/2 sum sum g_ij ln p_i ln p_j
    #[default]
    Translog,
    /// ln P* = sum w_j ln p_j with observed shares.
    Stone,
}

impl std::str::FromStr for PriceIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translog" => Ok(PriceIndex::Translog),
            "stone" => Ok(PriceIndex::Stone),
            other => Err(Error::invalid("index", format!("expected translog or stone, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AidsParameters {
    /// Not identified separately from the alpha levels; fixed at zero by
    /// the estimator.
    pub alpha0: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

/// Largest absolute violation of each restriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionResiduals {
    pub alpha_sum: f64,
    pub beta_sum: f64,
    pub gamma_symmetry: f64,
    pub gamma_row_sums: f64,
    pub gamma_column_sums: f64,
}

impl RestrictionResiduals {
    pub fn max(&self) -> f64 {
        [
            self.alpha_sum,
            self.beta_sum,
            self.gamma_symmetry,
            self.gamma_row_sums,
            self.gamma_column_sums,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl AidsParameters {
    pub fn new(alpha0: f64, alpha: DVector<f64>, beta: DVector<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        let n = alpha.len();
        if beta.len() != n {
            return Err(dim("beta", n, beta.len()));
        }
        if gamma.nrows() != n || gamma.ncols() != n {
            return Err(dim("gamma", n, gamma.nrows().max(gamma.ncols())));
        }
        Ok(Self {
            alpha0,
            alpha,
            beta,
            gamma,
        })
    }

    pub fn n_goods(&self) -> usize {
        self.alpha.len()
    }

    pub fn restriction_residuals(&self) -> RestrictionResiduals {
        let g = &self.gamma;
        let n = self.n_goods();
        let mut sym = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                sym = sym.max((g[(i, j)] - g[(j, i)]).abs());
            }
        }
        let rows = (0..n).map(|i| g.row(i).sum().abs()).fold(0.0, f64::max);
        let cols = (0..n).map(|j| g.column(j).sum().abs()).fold(0.0, f64::max);
        RestrictionResiduals {
            alpha_sum: (self.alpha.sum() - 1.0).abs(),
            beta_sum: self.beta.sum().abs(),
            gamma_symmetry: sym,
            gamma_row_sums: rows,
            gamma_column_sums: cols,
        }
    }

    pub fn satisfies_restrictions(&self, tol: f64) -> bool {
        self.restriction_residuals().max() <= tol
    }

    /// Model shares at one observation for a given ln P.
    pub fn shares_given_index(&self, log_prices: &DVector<f64>, log_expenditure: f64, log_price_index: f64) -> DVector<f64> {
        &self.alpha + &self.gamma * log_prices + &self.beta * (log_expenditure - log_price_index)
    }

    /// Model shares under the translog index.
    pub fn shares(&self, log_prices: &DVector<f64>, log_expenditure: f64) -> Result<DVector<f64>> {
        let lp = translog_price_index(log_prices, self)?;
        Ok(self.shares_given_index(log_prices, log_expenditure, lp))
    }

    /// `d ln P / d ln p_j = alpha_j + sum_m gamma_jm ln p_m` under the
    /// translog index.
    pub fn index_gradient(&self, log_prices: &DVector<f64>) -> DVector<f64> {
        &self.alpha + &self.gamma * log_prices
    }
}

fn dim(context: &str, expected: usize, actual: usize) -> Error {
    Error::DimensionMismatch {
        context: context.into(),
        expected,
        actual,
    }
}

pub fn translog_price_index(log_prices: &DVector<f64>, params: &AidsParameters) -> Result<f64> {
    let n = params.n_goods();
    if log_prices.len() != n {
        return Err(dim("log prices", n, log_prices.len()));
    }
    Ok(params.alpha0 + params.alpha.dot(log_prices) + 0.5 * log_prices.dot(&(&params.gamma * log_prices)))
}

pub fn stone_price_index(log_prices: &DVector<f64>, shares: &DVector<f64>) -> Result<f64> {
    if log_prices.len() != shares.len() {
        return Err(dim("shares", log_prices.len(), shares.len()));
    }
    Ok(shares.dot(log_prices))
}
