use nalgebra::{DMatrix, DVector};

use super::AidsParameters;
use crate::error::{Error, Result};

/// Affine map between the free parameter vector of the restricted system and
/// the full `(alpha, beta, gamma)` set.
///
/// With equation `d` dropped and `K` the kept goods, the free vector is
/// `[alpha_k (k in K), beta_k (k in K), gamma_ij (i <= j, i, j in K)]`.
/// The remaining entries follow from adding-up, homogeneity and symmetry:
/// `alpha_d = 1 - sum alpha_k`, `beta_d = -sum beta_k`,
/// `gamma_id = gamma_di = -sum_{j in K} gamma_ij`, `gamma_dd = sum sum gamma_ij`.
///
/// The full vector is laid out as `[alpha (N), beta (N), vec(gamma) (N*N, row-major)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionMap {
    n_goods: usize,
    dropped: usize,
    kept: Vec<usize>,
    /// (i, j) pairs in kept-index space, i <= j.
    gamma_pairs: Vec<(usize, usize)>,
}

impl RestrictionMap {
    pub fn new(n_goods: usize, dropped: usize) -> Result<Self> {
        if n_goods < 2 {
            return Err(Error::InsufficientData(format!(
                "a demand system needs at least two goods, got {n_goods}"
            )));
        }
        if dropped >= n_goods {
            return Err(Error::DimensionMismatch {
                context: "dropped equation index".into(),
                expected: n_goods - 1,
                actual: dropped,
            });
        }
        let kept: Vec<usize> = (0..n_goods).filter(|&i| i != dropped).collect();
        let m = kept.len();
        let mut gamma_pairs = Vec::with_capacity(m * (m + 1) / 2);
        for a in 0..m {
            for b in a..m {
                gamma_pairs.push((a, b));
            }
        }
        Ok(Self {
            n_goods,
            dropped,
            kept,
            gamma_pairs,
        })
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn n_free(&self) -> usize {
        2 * self.kept.len() + self.gamma_pairs.len()
    }

    pub fn n_full(&self) -> usize {
        2 * self.n_goods + self.n_goods * self.n_goods
    }

    pub fn alpha_index(&self, i: usize) -> usize {
        i
    }

    pub fn beta_index(&self, i: usize) -> usize {
        self.n_goods + i
    }

    pub fn gamma_index(&self, i: usize, j: usize) -> usize {
        2 * self.n_goods + i * self.n_goods + j
    }

    /// Names for the free coordinates, using the supplied good labels.
    pub fn free_names(&self, goods: &[String]) -> Vec<String> {
        let m = self.kept.len();
        let mut out = Vec::with_capacity(self.n_free());
        for &k in &self.kept {
            out.push(format!("alpha[{}]", goods[k]));
        }
        for &k in &self.kept {
            out.push(format!("beta[{}]", goods[k]));
        }
        for &(a, b) in &self.gamma_pairs {
            out.push(format!("gamma[{},{}]", goods[self.kept[a]], goods[self.kept[b]]));
        }
        debug_assert_eq!(out.len(), 2 * m + self.gamma_pairs.len());
        out
    }

    pub fn expand(&self, theta: &DVector<f64>) -> AidsParameters {
        let n = self.n_goods;
        let m = self.kept.len();
        let d = self.dropped;
        let mut alpha = DVector::zeros(n);
        let mut beta = DVector::zeros(n);
        let mut gamma = DMatrix::zeros(n, n);
        for (a, &k) in self.kept.iter().enumerate() {
            alpha[k] = theta[a];
            beta[k] = theta[m + a];
        }
        alpha[d] = 1.0 - self.kept.iter().map(|&k| alpha[k]).sum::<f64>();
        beta[d] = -self.kept.iter().map(|&k| beta[k]).sum::<f64>();
        for (idx, &(a, b)) in self.gamma_pairs.iter().enumerate() {
            let v = theta[2 * m + idx];
            let (i, j) = (self.kept[a], self.kept[b]);
            gamma[(i, j)] = v;
            gamma[(j, i)] = v;
        }
        for &i in &self.kept {
            let s: f64 = self.kept.iter().map(|&j| gamma[(i, j)]).sum();
            gamma[(i, d)] = -s;
            gamma[(d, i)] = -s;
        }
        gamma[(d, d)] = -self.kept.iter().map(|&i| gamma[(i, d)]).sum::<f64>();
        AidsParameters {
            alpha0: 0.0,
            alpha,
            beta,
            gamma,
        }
    }

    /// Free coordinates of a parameter set. Entries implied by the
    /// restrictions are ignored, so this is a left inverse of [`expand`]
    /// only on restricted parameter sets.
    ///
    /// [`expand`]: RestrictionMap::expand
    pub fn reduce(&self, params: &AidsParameters) -> Result<DVector<f64>> {
        if params.n_goods() != self.n_goods {
            return Err(Error::DimensionMismatch {
                context: "parameter set".into(),
                expected: self.n_goods,
                actual: params.n_goods(),
            });
        }
        let m = self.kept.len();
        let mut theta = DVector::zeros(self.n_free());
        for (a, &k) in self.kept.iter().enumerate() {
            theta[a] = params.alpha[k];
            theta[m + a] = params.beta[k];
        }
        for (idx, &(a, b)) in self.gamma_pairs.iter().enumerate() {
            theta[2 * m + idx] = params.gamma[(self.kept[a], self.kept[b])];
        }
        Ok(theta)
    }

    /// Full parameter vector in the `[alpha, beta, vec(gamma)]` layout.
    pub fn full_vector(&self, params: &AidsParameters) -> DVector<f64> {
        let n = self.n_goods;
        let mut v = DVector::zeros(self.n_full());
        for i in 0..n {
            v[self.alpha_index(i)] = params.alpha[i];
            v[self.beta_index(i)] = params.beta[i];
            for j in 0..n {
                v[self.gamma_index(i, j)] = params.gamma[(i, j)];
            }
        }
        v
    }

    /// Sparse columns of `d full / d theta`: for each free coordinate, the
    /// full-vector entries it moves and by how much.
    pub fn sparse_jacobian(&self) -> Vec<Vec<(usize, f64)>> {
        let m = self.kept.len();
        let d = self.dropped;
        let mut cols = Vec::with_capacity(self.n_free());
        for &k in &self.kept {
            cols.push(vec![(self.alpha_index(k), 1.0), (self.alpha_index(d), -1.0)]);
        }
        for &k in &self.kept {
            cols.push(vec![(self.beta_index(k), 1.0), (self.beta_index(d), -1.0)]);
        }
        for &(a, b) in &self.gamma_pairs {
            let (i, j) = (self.kept[a], self.kept[b]);
            let mut col = Vec::new();
            if i == j {
                col.push((self.gamma_index(i, i), 1.0));
                col.push((self.gamma_index(i, d), -1.0));
                col.push((self.gamma_index(d, i), -1.0));
                col.push((self.gamma_index(d, d), 1.0));
            } else {
                col.push((self.gamma_index(i, j), 1.0));
                col.push((self.gamma_index(j, i), 1.0));
                col.push((self.gamma_index(i, d), -1.0));
                col.push((self.gamma_index(d, i), -1.0));
                col.push((self.gamma_index(j, d), -1.0));
                col.push((self.gamma_index(d, j), -1.0));
                col.push((self.gamma_index(d, d), 2.0));
            }
            cols.push(col);
        }
        debug_assert_eq!(cols.len(), 2 * m + self.gamma_pairs.len());
        cols
    }

    /// Dense `d full / d theta`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_full(), self.n_free());
        for (k, col) in self.sparse_jacobian().into_iter().enumerate() {
            for (f, c) in col {
                a[(f, k)] += c;
            }
        }
        a
    }
}
