//! Example 1: constant coefficients, three utility cases.
//!
//! Cases I and II have a closed-form expenditure. Case III needs the root
//! `psi` of `1 - k x^{1-p}/(1-p) = y x^p`, which is tabulated once per `p`.

use crate::error::{Error, Result};

/// `rho_p(r, theta) = (1/p - 1) r + (1-p)/(2p^2) theta^2`.
pub fn rho_p(r: f64, theta: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidInput(format!("rho_p needs p > 0, got {p}")));
    }
    if p == 1.0 {
        return Err(Error::InvalidInput("rho_p is undefined at p = 1; use the logarithmic branch".into()));
    }
    Ok((1.0 / p - 1.0) * r + (1.0 - p) / (2.0 * p * p) * theta * theta)
}

/// Total expenditure `C*_t = rho X0 / (xi_t^{1/p} (e^{rho T} - 1))`.
pub fn closed_expenditure(rho: f64, p: f64, x0: f64, horizon: f64, xi: f64) -> f64 {
    expenditure_scale(rho, x0, horizon) * xi.powf(-1.0 / p)
}

/// `rho X0 / (e^{rho T} - 1)`, continuous in `rho` at 0.
pub fn expenditure_scale(rho: f64, x0: f64, horizon: f64) -> f64 {
    if rho.abs() < 1e-12 {
        x0 / horizon
    } else {
        rho * x0 / (rho * horizon).exp_m1()
    }
}

/// Logarithmic utility limit `C* = X0 / (xi T)`.
pub fn log_limit_expenditure(x0: f64, xi: f64, horizon: f64) -> f64 {
    x0 / (xi * horizon)
}

/// Residual `1 - k x^{1-p}/(1-p) - y x^p` of the Case III first-order condition.
pub fn case3_residual(p: f64, k: f64, y: f64, x: f64) -> f64 {
    1.0 - k * x.powf(1.0 - p) / (1.0 - p) - y * x.powf(p)
}

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

// After rescaling x = s z with s = (k/(p-1))^{1/(p-1)}, the condition reads
// z^{-p}(1 + z^{1-p}) = y s^p; in logs, L(u) = -p u + softplus((1-p) u).
fn big_l(p: f64, u: f64) -> f64 {
    -p * u + softplus((1.0 - p) * u)
}

fn big_l_prime(p: f64, u: f64) -> f64 {
    -p + (1.0 - p) * logistic((1.0 - p) * u)
}

// L is convex and strictly decreasing with slope in [-(2p-1), -p].
fn solve_l(p: f64, target: f64) -> f64 {
    let span = (target - 2f64.ln()).abs() / p + 1.0;
    let (mut lo, mut hi) = (-span, span);
    let mut u = -(target - 2f64.ln()) / p;
    for _ in 0..200 {
        let f = big_l(p, u) - target;
        if f > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let mut next = u - f / big_l_prime(p, u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-15 * (1.0 + u.abs()) {
            return next;
        }
        u = next;
    }
    u
}

const TABLE_LO: f64 = -150.0;
const TABLE_HI: f64 = 150.0;
const TABLE_NODES: usize = 1 << 17;

/// Cubic Hermite table of `u = L^{-1}(log v)` on a uniform `log v` grid.
#[derive(Debug, Clone)]
pub struct PsiTable {
    p: f64,
    h: f64,
    u: Vec<f64>,
    du: Vec<f64>,
}

impl PsiTable {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidInput(format!("case III needs p > 1, got {p}")));
        }
        let h = (TABLE_HI - TABLE_LO) / (TABLE_NODES - 1) as f64;
        let u: Vec<f64> = (0..TABLE_NODES).map(|i| solve_l(p, TABLE_LO + i as f64 * h)).collect();
        let du = u.iter().map(|x| 1.0 / big_l_prime(p, *x)).collect();
        Ok(PsiTable { p, h, u, du })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn inv_l(&self, lv: f64) -> f64 {
        let t = (lv - TABLE_LO) / self.h;
        if !(t >= 0.0 && t < (TABLE_NODES - 1) as f64) {
            return solve_l(self.p, lv);
        }
        let i = t as usize;
        let s = t - i as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.u[i] + h10 * self.h * self.du[i] + h01 * self.u[i + 1] + h11 * self.h * self.du[i + 1]
    }

    fn scale(&self, k: f64) -> f64 {
        (k / (self.p - 1.0)).powf(1.0 / (self.p - 1.0))
    }

    /// `psi(y | k)` from the table alone; relative accuracy around `1e-12`.
    pub fn psi_fast(&self, k: f64, y: f64) -> f64 {
        let s = self.scale(k);
        s * self.inv_l(y.ln() + self.p * s.ln()).exp()
    }

    /// `log psi` from `log y` for a precomputed `log s` and `p log s`.
    #[inline]
    pub(crate) fn ln_psi_fast(&self, ln_s: f64, ln_y: f64) -> f64 {
        ln_s + self.inv_l(ln_y + self.p * ln_s)
    }

    /// `psi(y | k)` polished by one Newton step on the exact condition; the
    /// table is already close to machine precision.
    pub fn psi(&self, k: f64, y: f64) -> f64 {
        self.ln_psi(k, y.ln()).exp()
    }

    /// `log psi(y | k)` from `log y`, with the same Newton polish.
    pub fn ln_psi(&self, k: f64, ln_y: f64) -> f64 {
        let p = self.p;
        let kp = k / (p - 1.0);
        let u = self.ln_psi_fast(kp.ln() / (p - 1.0), ln_y);
        let a = (-p * u).exp();
        let b = kp * ((1.0 - 2.0 * p) * u).exp();
        let g = a + b;
        let d = (-p * a + (1.0 - 2.0 * p) * b) / g;
        u - (g.ln() - ln_y) / d
    }

    /// Same as [`PsiTable::psi`] but solved from scratch without the table.
    pub fn psi_direct(p: f64, k: f64, y: f64) -> f64 {
        let s = (k / (p - 1.0)).powf(1.0 / (p - 1.0));
        s * solve_l(p, y.ln() + p * s.ln()).exp()
    }
}
