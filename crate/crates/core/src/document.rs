//! Serialized fit documents (JSON).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aids::{AidsFit, AidsParameters, Convergence, FitOptions, Good, PriceIndex, RestrictionMap, RestrictionResiduals};
use crate::emissions::ClassActivity;
use crate::error::{Error, Result};

pub const FIT_FORMAT: &str = "fuelshock-aids-fit";
pub const FIT_FORMAT_VERSION: u32 = 1;

const ALPHA0_NOTE: &str = "alpha0 is fixed at 0: it is not identified separately from the alpha levels";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    pub final_change: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format: String,
    pub version: u32,
    pub index: PriceIndex,
    pub goods: Vec<Good>,
    pub dropped_equation: String,
    pub alpha0: f64,
    pub alpha0_note: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub free_parameter_names: Vec<String>,
    pub free_parameters: Vec<f64>,
    /// Robust covariance of the free parameters, row by row.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub alpha_se: Option<Vec<f64>>,
    pub beta_se: Option<Vec<f64>>,
    pub gamma_se: Option<Vec<Vec<f64>>>,
    pub residual_covariance: Vec<Vec<f64>>,
    pub restriction_residuals: RestrictionResiduals,
    pub convergence: ConvergenceRecord,
    pub n_obs: usize,
    pub mean_shares: Vec<f64>,
    pub mean_log_prices: Vec<f64>,
    /// Mean per province-year class activity, for emission weights.
    pub activity_km: Option<ClassActivity>,
    pub activity_litres: Option<ClassActivity>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: what.into(),
            expected: n,
            actual: rows.len(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl FitDocument {
    pub fn from_fit(fit: &AidsFit, options: &FitOptions) -> Self {
        let se = fit.full_standard_errors();
        Self {
            format: FIT_FORMAT.into(),
            version: FIT_FORMAT_VERSION,
            index: fit.index,
            goods: fit.goods.clone(),
            dropped_equation: fit.dropped_equation().to_string(),
            alpha0: fit.params.alpha0,
            alpha0_note: ALPHA0_NOTE.into(),
            alpha: fit.params.alpha.iter().copied().collect(),
            beta: fit.params.beta.iter().copied().collect(),
            gamma: rows(&fit.params.gamma),
            free_parameter_names: fit.free_parameter_names(),
            free_parameters: fit.free_parameters().iter().copied().collect(),
            covariance: fit.covariance.as_ref().map(rows),
            alpha_se: se.as_ref().map(|s| s.alpha.iter().copied().collect()),
            beta_se: se.as_ref().map(|s| s.beta.iter().copied().collect()),
            gamma_se: se.as_ref().map(|s| rows(&s.gamma)),
            residual_covariance: rows(&fit.residual_covariance),
            restriction_residuals: fit.restriction_residuals(),
            convergence: ConvergenceRecord {
                iterations: fit.convergence.iterations,
                final_change: fit.convergence.final_change,
                tol: options.tol,
                max_iter: options.max_iter,
            },
            n_obs: fit.n_obs,
            mean_shares: fit.mean_shares.iter().copied().collect(),
            mean_log_prices: fit.mean_log_prices.iter().copied().collect(),
            activity_km: None,
            activity_litres: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("fit document", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::parse("fit document", e))?;
        if doc.format != FIT_FORMAT || doc.version != FIT_FORMAT_VERSION {
            return Err(Error::parse(
                "fit document",
                format!("unsupported format {} v{}", doc.format, doc.version),
            ));
        }
        Ok(doc)
    }

    /// Rebuilds a fit for elasticity work. Per-observation residuals and
    /// fitted shares are not stored, so those matrices come back empty.
    pub fn to_fit(&self) -> Result<AidsFit> {
        let n = self.goods.len();
        let dropped = self
            .goods
            .iter()
            .position(|g| g.name == self.dropped_equation)
            .ok_or_else(|| Error::parse("fit document", format!("unknown dropped equation `{}`", self.dropped_equation)))?;
        let map = RestrictionMap::new(n, dropped)?;
        let params = AidsParameters::new(
            self.alpha0,
            DVector::from_column_slice(&self.alpha),
            DVector::from_column_slice(&self.beta),
            matrix(&self.gamma, n, "gamma")?,
        )?;
        let covariance = self
            .covariance
            .as_ref()
            .map(|c| matrix(c, map.n_free(), "covariance"))
            .transpose()?;
        let vec = |v: &[f64], what: &str| -> Result<DVector<f64>> {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    context: what.into(),
                    expected: n,
                    actual: v.len(),
                });
            }
            Ok(DVector::from_column_slice(v))
        };
        Ok(AidsFit {
            goods: self.goods.clone(),
            map,
            index: self.index,
            covariance,
            residual_covariance: matrix(&self.residual_covariance, n - 1, "residual covariance")?,
            residuals: DMatrix::zeros(0, n),
            fitted_shares: DMatrix::zeros(0, n),
            convergence: Convergence {
                iterations: self.convergence.iterations,
                final_change: self.convergence.final_change,
            },
            n_obs: self.n_obs,
            mean_shares: vec(&self.mean_shares, "mean shares")?,
            mean_log_prices: vec(&self.mean_log_prices, "mean log prices")?,
            params,
        })
    }
}

/// Generating parameters of a synthetic panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDocument {
    pub seed: u64,
    pub noise_sd: f64,
    pub goods: Vec<String>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
}

impl TruthDocument {
    pub fn new(sample: &crate::synth::SamplePanel, goods: &[String]) -> Self {
        Self {
            seed: crate::synth::SAMPLE_SEED,
            noise_sd: sample.noise_sd,
            goods: goods.to_vec(),
            alpha: sample.truth.alpha.iter().copied().collect(),
            beta: sample.truth.beta.iter().copied().collect(),
            gamma: rows(&sample.truth.gamma),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("truth document", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("truth document", e))
    }

    pub fn params(&self) -> Result<AidsParameters> {
        let n = self.goods.len();
        AidsParameters::new(
            0.0,
            DVector::from_column_slice(&self.alpha),
            DVector::from_column_slice(&self.beta),
            matrix(&self.gamma, n, "gamma")?,
        )
    }
}
