//! Mean–variance frontier: `sup { pi . mu - (p/2) pi' Sigma pi : sum pi = 1 }`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    /// Risk-aversion weight; `f64::INFINITY` gives the minimum-variance portfolio.
    pub p: f64,
    pub pi: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// Closed-form frontier portfolios
/// `pi(p) = S1/(1'S1) + (1/p)(S mu - S1 (1'S mu)/(1'S1))` with `S = Sigma^{-1}`.
pub fn frontier(mu: &[f64], cov: &DMatrix<f64>, p_list: &[f64]) -> Result<Vec<FrontierPoint>> {
    let n = mu.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch(cov.nrows(), n));
    }
    if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("covariance matrix is not positive definite".into()))?;
    let mu_v = DVector::from_column_slice(mu);
    let ones = DVector::from_element(n, 1.0);
    let s1 = chol.solve(&ones);
    let smu = chol.solve(&mu_v);
    let a = ones.dot(&s1);
    let b = ones.dot(&smu);
    let minvar = &s1 / a;
    let tilt = &smu - &s1 * (b / a);
    p_list
        .iter()
        .map(|&p| {
            if !(p > 0.0) {
                return Err(Error::InvalidInput(format!("frontier needs p > 0, got {p}")));
            }
            let pi = if p.is_infinite() { minvar.clone() } else { &minvar + &tilt / p };
            Ok(FrontierPoint {
                p,
                mean: pi.dot(&mu_v),
                variance: (pi.transpose() * cov * &pi)[(0, 0)],
                pi: pi.iter().copied().collect(),
            })
        })
        .collect()
}
