//! Iterated feasible GLS for the restricted share system.
//!
//! The `N - 1` kept share equations are stacked and estimated by Gauss-Newton
//! steps weighted by the inverse of the current cross-equation residual
//! covariance. The residual covariance is re-estimated every iteration, so at
//! convergence the estimate is the Gaussian maximum-likelihood estimate,
//! which does not depend on the dropped equation. With the Stone index the
//! model is linear and each step is an exact GLS solve; with the translog
//! index ln P is re-linearized around the current parameters at every step.

use nalgebra::{DMatrix, DVector};

use super::{
    stone_price_index, translog_price_index, AidsParameters, DemandData, Good, PriceIndex,
    RestrictionMap, RestrictionResiduals,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub index: PriceIndex,
    /// Convergence threshold on the largest free-parameter change.
    pub tol: f64,
    pub max_iter: usize,
    /// Good whose equation is dropped; `None` drops the last good.
    pub dropped_equation: Option<String>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            index: PriceIndex::Translog,
            tol: 1e-8,
            max_iter: 500,
            dropped_equation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub final_change: f64,
}

#[derive(Debug, Clone)]
pub struct AidsFit {
    pub goods: Vec<Good>,
    pub params: AidsParameters,
    pub map: RestrictionMap,
    pub index: PriceIndex,
    /// Heteroskedasticity-robust covariance of the free parameters.
    pub covariance: Option<DMatrix<f64>>,
    /// Cross-equation covariance of the kept-equation residuals.
    pub residual_covariance: DMatrix<f64>,
    /// Observed minus fitted shares, `n x N`. Rows sum to zero.
    pub residuals: DMatrix<f64>,
    pub fitted_shares: DMatrix<f64>,
    pub convergence: Convergence,
    pub n_obs: usize,
    pub mean_shares: DVector<f64>,
    pub mean_log_prices: DVector<f64>,
}

impl AidsFit {
    pub fn good_names(&self) -> Vec<String> {
        self.goods.iter().map(|g| g.name.clone()).collect()
    }

    pub fn dropped_equation(&self) -> &str {
        &self.goods[self.map.dropped()].name
    }

    pub fn free_parameters(&self) -> DVector<f64> {
        self.map
            .reduce(&self.params)
            .expect("fit parameters match their restriction map")
    }

    pub fn free_parameter_names(&self) -> Vec<String> {
        self.map.free_names(&self.good_names())
    }

    /// Covariance of the full `[alpha, beta, vec(gamma)]` vector.
    pub fn full_covariance(&self) -> Option<DMatrix<f64>> {
        let a = self.map.jacobian();
        self.covariance.as_ref().map(|c| &a * c * a.transpose())
    }

    pub fn free_standard_errors(&self) -> Option<DVector<f64>> {
        self.covariance
            .as_ref()
            .map(|c| c.diagonal().map(|v| v.max(0.0).sqrt()))
    }

    /// Standard errors of alpha, beta and gamma in the full layout.
    pub fn full_standard_errors(&self) -> Option<AidsParameters> {
        let cov = self.full_covariance()?;
        let n = self.map.n_goods();
        let se = |f: usize| cov[(f, f)].max(0.0).sqrt();
        Some(AidsParameters {
            alpha0: 0.0,
            alpha: DVector::from_fn(n, |i, _| se(self.map.alpha_index(i))),
            beta: DVector::from_fn(n, |i, _| se(self.map.beta_index(i))),
            gamma: DMatrix::from_fn(n, n, |i, j| se(self.map.gamma_index(i, j))),
        })
    }

    pub fn restriction_residuals(&self) -> RestrictionResiduals {
        self.params.restriction_residuals()
    }
}

pub fn fit_aids(data: &DemandData, options: &FitOptions) -> Result<AidsFit> {
    let n = data.n_goods();
    let names = data.good_names();
    let dropped = match &options.dropped_equation {
        None => n.saturating_sub(1),
        Some(name) => names
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| Error::invalid("dropped_equation", format!("unknown good `{name}`")))?,
    };
    let map = RestrictionMap::new(n, dropped)?;
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::invalid("options", "tol must be positive and max_iter at least 1"));
    }
    if data.n_obs() <= n + 1 {
        return Err(Error::InsufficientData(format!(
            "{} observations for {} goods; need more than {}",
            data.n_obs(),
            n,
            n + 1
        )));
    }
    let pairs = data.collinear_price_pairs();
    if !pairs.is_empty() {
        let mut goods: Vec<String> = Vec::new();
        for &(i, j) in &pairs {
            for k in [i, j] {
                if !goods.contains(&names[k]) {
                    goods.push(names[k].clone());
                }
            }
        }
        let desc: Vec<String> = pairs
            .iter()
            .map(|&(i, j)| format!("{} and {}", names[i], names[j]))
            .collect();
        return Err(Error::RankDeficient {
            goods,
            message: format!(
                "price columns of {} move in fixed proportion; pool them with price grouping",
                desc.join(", ")
            ),
        });
    }

    let system = System::new(data, &map, options.index);
    let mut theta = system.starting_values();
    let mut last_change = f64::INFINITY;
    let mut converged = None;
    for iter in 1..=options.max_iter {
        let resid = system.residuals(&map.expand(&theta));
        let weight = weight_matrix(&residual_covariance(&resid));
        let (h, g) = system.normal_equations(&theta, &weight, &resid);
        if iter == 1 {
            check_rank(&h)?;
        }
        let step = h
            .clone()
            .cholesky()
            .ok_or_else(singular)?
            .solve(&g);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gauss-Newton step".into()));
        }

        let obj0 = weighted_ssr(&resid, &weight);
        let mut scale = 1.0;
        let mut candidate = &theta + &step;
        while scale > 1e-6 {
            let obj1 = weighted_ssr(&system.residuals(&map.expand(&candidate)), &weight);
            if obj1 <= obj0 * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                break;
            }
            scale *= 0.5;
            candidate = &theta + &step * scale;
        }
        last_change = (&step * scale).amax();
        theta = candidate;
        if last_change < options.tol {
            converged = Some(iter);
            break;
        }
    }
    let iterations = converged.ok_or(Error::NonConvergence {
        iterations: options.max_iter,
        last_change,
    })?;

    let params = map.expand(&theta);
    let resid = system.residuals(&params);
    let sigma = residual_covariance(&resid);
    let weight = weight_matrix(&sigma);
    let covariance = system.robust_covariance(&theta, &weight, &resid)?;
    let fitted_shares = system.fitted(&params);
    let residuals = data.shares() - &fitted_shares;

    Ok(AidsFit {
        goods: data.goods().to_vec(),
        params,
        map,
        index: options.index,
        covariance: Some(covariance),
        residual_covariance: sigma,
        residuals,
        fitted_shares,
        convergence: Convergence {
            iterations,
            final_change: last_change,
        },
        n_obs: data.n_obs(),
        mean_shares: data.mean_shares(),
        mean_log_prices: data.mean_log_prices(),
    })
}

fn singular() -> Error {
    Error::RankDeficient {
        goods: Vec::new(),
        message: "cross-product matrix of the restricted regressors is singular".into(),
    }
}

/// Rejects a numerically singular normal matrix, judged on its correlation
/// form so that regressor scaling does not matter.
fn check_rank(h: &DMatrix<f64>) -> Result<()> {
    let k = h.nrows();
    let d: Vec<f64> = (0..k).map(|i| h[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(singular());
    }
    let corr = DMatrix::from_fn(k, k, |i, j| h[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = corr.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(0.0, f64::max);
    if !(min > 1e-12 * max) {
        return Err(singular());
    }
    Ok(())
}

fn residual_covariance(resid: &DMatrix<f64>) -> DMatrix<f64> {
    resid.transpose() * resid / resid.nrows() as f64
}

/// Inverse residual covariance, or the identity when the residuals vanish
/// (exact fit) or the covariance is not positive definite.
fn weight_matrix(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let m = sigma.nrows();
    let scale = sigma.trace() / m as f64;
    if !(scale > 1e-26) {
        return DMatrix::identity(m, m);
    }
    match sigma.clone().cholesky() {
        Some(c) => {
            let w = c.inverse();
            (&w + w.transpose()) * 0.5
        }
        None => DMatrix::identity(m, m),
    }
}

/// `U` with `U'U = w`: the transposed Cholesky factor, or a symmetric
/// square root when `w` is only semidefinite.
fn weight_factor(w: &DMatrix<f64>) -> DMatrix<f64> {
    match w.clone().cholesky() {
        Some(c) => c.l().transpose(),
        None => {
            let eig = w.clone().symmetric_eigen();
            let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
        }
    }
}

fn weighted_ssr(resid: &DMatrix<f64>, weight: &DMatrix<f64>) -> f64 {
    (0..resid.nrows())
        .map(|t| {
            let e = resid.row(t).transpose();
            e.dot(&(weight * &e))
        })
        .sum()
}

struct System<'a> {
    data: &'a DemandData,
    map: &'a RestrictionMap,
    index: PriceIndex,
    columns: Vec<Vec<(usize, f64)>>,
}

impl<'a> System<'a> {
    fn new(data: &'a DemandData, map: &'a RestrictionMap, index: PriceIndex) -> Self {
        Self {
            data,
            map,
            index,
            columns: map.sparse_jacobian(),
        }
    }

    fn starting_values(&self) -> DVector<f64> {
        let mean = self.data.mean_shares();
        let m = self.map.kept().len();
        let mut theta = DVector::zeros(self.map.n_free());
        for (a, &k) in self.map.kept().iter().enumerate() {
            theta[a] = mean[k];
        }
        debug_assert!(theta.len() >= m);
        theta
    }

    fn log_price_index(&self, params: &AidsParameters, t: usize, lp: &DVector<f64>) -> f64 {
        match self.index {
            PriceIndex::Translog => translog_price_index(lp, params).expect("dimensions checked"),
            PriceIndex::Stone => stone_price_index(lp, &self.data.share_row(t)).expect("dimensions checked"),
        }
    }

    fn fitted(&self, params: &AidsParameters) -> DMatrix<f64> {
        let n_obs = self.data.n_obs();
        let n = self.map.n_goods();
        let mut out = DMatrix::zeros(n_obs, n);
        for t in 0..n_obs {
            let lp = self.data.log_price_row(t);
            let lnp = self.log_price_index(params, t, &lp);
            let w = params.shares_given_index(&lp, self.data.log_expenditure()[t], lnp);
            out.set_row(t, &w.transpose());
        }
        out
    }

    /// Residuals of the kept equations, `n x (N - 1)`.
    fn residuals(&self, params: &AidsParameters) -> DMatrix<f64> {
        let fitted = self.fitted(params);
        let kept = self.map.kept();
        DMatrix::from_fn(self.data.n_obs(), kept.len(), |t, r| {
            self.data.shares()[(t, kept[r])] - fitted[(t, kept[r])]
        })
    }

    /// Jacobian of the kept fitted shares at observation `t` with respect to
    /// the free parameters.
    fn jacobian_at(&self, params: &AidsParameters, t: usize) -> DMatrix<f64> {
        let n = self.map.n_goods();
        let kept = self.map.kept();
        let lp = self.data.log_price_row(t);
        let lnp = self.log_price_index(params, t, &lp);
        let z = self.data.log_expenditure()[t] - lnp;
        let translog = self.index == PriceIndex::Translog;

        // d w_i / d full_f for the full layout [alpha, beta, vec(gamma)].
        let mut d = vec![0.0; 2 * n + n * n];
        let mut out = DMatrix::zeros(kept.len(), self.columns.len());
        for (r, &i) in kept.iter().enumerate() {
            for f in 0..n {
                let own = if f == i { 1.0 } else { 0.0 };
                d[f] = if translog { own - params.beta[i] * lp[f] } else { own };
                d[n + f] = if f == i { z } else { 0.0 };
            }
            for j in 0..n {
                for k in 0..n {
                    let own = if j == i { lp[k] } else { 0.0 };
                    d[2 * n + j * n + k] = if translog {
                        own - params.beta[i] * 0.5 * lp[j] * lp[k]
                    } else {
                        own
                    };
                }
            }
            for (c, col) in self.columns.iter().enumerate() {
                out[(r, c)] = col.iter().map(|&(f, w)| w * d[f]).sum();
            }
        }
        out
    }

    /// Whitened stacked system: rows `t*m..(t+1)*m` of the first matrix
    /// hold `U J_t` and of the vector `U e_t`, where `U'U = weight`.
    fn whitened(
        &self,
        params: &AidsParameters,
        weight: &DMatrix<f64>,
        resid: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let u = weight_factor(weight);
        let m = self.map.kept().len();
        let k = self.map.n_free();
        let n_obs = self.data.n_obs();
        let mut a = DMatrix::zeros(n_obs * m, k);
        let mut b = DVector::zeros(n_obs * m);
        for t in 0..n_obs {
            let j = self.jacobian_at(params, t);
            a.rows_mut(t * m, m).copy_from(&(&u * j));
            b.rows_mut(t * m, m).copy_from(&(&u * resid.row(t).transpose()));
        }
        (a, b)
    }

    fn normal_equations(
        &self,
        theta: &DVector<f64>,
        weight: &DMatrix<f64>,
        resid: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (a, b) = self.whitened(&self.map.expand(theta), weight, resid);
        let at = a.transpose();
        (&at * &a, at * b)
    }

    fn robust_covariance(
        &self,
        theta: &DVector<f64>,
        weight: &DMatrix<f64>,
        resid: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let (a, b) = self.whitened(&self.map.expand(theta), weight, resid);
        let m = self.map.kept().len();
        let k = self.map.n_free();
        let n_obs = self.data.n_obs();
        let h = a.transpose() * &a;
        // Per-observation scores J_t' W e_t.
        let mut scores = DMatrix::zeros(n_obs, k);
        for t in 0..n_obs {
            let s = a.rows(t * m, m).tr_mul(&b.rows(t * m, m));
            scores.set_row(t, &s.transpose());
        }
        let meat = scores.transpose() * &scores;
        let h_inv = h.cholesky().ok_or_else(singular)?.inverse();
        let cov = &h_inv * meat * &h_inv;
        Ok((&cov + cov.transpose()) * 0.5)
    }
}
