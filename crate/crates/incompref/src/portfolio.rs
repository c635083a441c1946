//! Optimal investment selectors and their decomposition into a mean–variance
//! part, a market-risk hedge, a commodity-price hedge and an indecisiveness
//! hedge, plus wealth replication.
//!
//! Conditional expectations over `[t, T]` are estimated by nested Monte
//! Carlo: fresh inner Brownian increments start from the outer state
//! `(W_t, W^max_t, sigma_t, xi_t)`. Inner streams are keyed on the outer
//! path id and time index, so results do not depend on scheduling. The
//! derivative of the running maximum is taken pathwise inside the inner
//! expectation by default; the factorized `erfc` form is kept as an option.
//!
//! ```
//! use incompref::portfolio::malliavin_running_max;
//!
//! // At a new running maximum the hedge ratio is the full lambda.
//! assert_eq!(malliavin_running_max(0.3, 0.3, 0.5, 0.2).unwrap(), 0.2);
//! ```

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::index_set::mean_se;
use crate::preferences::{FamilyKind, Weight};
use crate::solver::example1::{expenditure_scale, rho_p};
use crate::solver::example2::attention_coefficient;
use crate::solver::{Attention, Policy, PolicySelector, Problem};
use crate::stochastic::{normal, stream_rng, BrownianPath, MarketParams, Scenario, VolModel, DOMAIN_INNER};

/// `lambda erfc((W^max_t - W_t) / sqrt(2 (s - t)))`, the conditional
/// expectation of `D_t (lambda W^max_s)` given the state at `t`.
pub fn malliavin_running_max(wmax_t: f64, w_t: f64, dt: f64, lambda: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("running-max derivative needs s > t, got dt = {dt}")));
    }
    if wmax_t < w_t {
        return Err(Error::InvalidInput(format!("running max {wmax_t} below the path value {w_t}")));
    }
    Ok(lambda * erfc((wmax_t - w_t) / (2.0 * dt).sqrt()))
}

/// `H_{xi,t,s} = -varsigma sum_{v=t}^{s-} theta_v e^{-kappa (v - t)} (dW_v + theta_v dv)`.
pub fn h_xi_exp_ou(path: &BrownianPath, vol: &[f64], t_idx: usize, s_idx: usize, params: &MarketParams) -> Result<f64> {
    let k = path.grid.steps;
    if t_idx > s_idx || s_idx > k || vol.len() != k + 1 {
        return Err(Error::InvalidInput(format!("bad H indices t = {t_idx}, s = {s_idx} on {k} steps")));
    }
    if params.vol_model == VolModel::Constant || params.varsigma == 0.0 {
        return Ok(0.0);
    }
    let dt = path.grid.dt();
    let mut h = 0.0;
    for v in t_idx..s_idx {
        let th = params.theta(vol[v]);
        h += th * (-params.kappa * (v - t_idx) as f64 * dt).exp() * (path.dw(v) + th * dt);
    }
    Ok(-params.varsigma * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    NestedMc,
}

/// Nested Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalEstimator {
    pub method: EstimatorMethod,
    pub inner_samples: usize,
    pub master: u64,
    /// Use the pathwise derivative `1{inner max > W^max_t}` of the running
    /// maximum inside the inner expectation instead of its conditional
    /// probability.
    pub pathwise_max: bool,
}

impl ConditionalEstimator {
    pub fn nested(inner_samples: usize, master: u64) -> Self {
        ConditionalEstimator { method: EstimatorMethod::NestedMc, inner_samples, master, pathwise_max: true }
    }

    fn check(&self) -> Result<()> {
        if self.inner_samples == 0 {
            return Err(Error::InvalidInput("nested estimator needs at least one inner sample".into()));
        }
        Ok(())
    }
}

impl Default for ConditionalEstimator {
    fn default() -> Self {
        ConditionalEstimator::nested(100, 0)
    }
}

/// The four canonical components of a portfolio value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Components {
    pub theta: f64,
    pub hedge_h: f64,
    pub hedge_p: f64,
    pub indecisiveness: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.theta + self.hedge_h + self.hedge_p + self.indecisiveness
    }
}

/// Dollar position in the risky asset at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioValue {
    pub total: f64,
    pub components: Components,
    /// Inner Monte Carlo standard error of `total` (zero for closed forms).
    pub se: f64,
}

impl PortfolioValue {
    fn from_components(c: Components, se: f64) -> Self {
        PortfolioValue { total: c.total(), components: c, se }
    }
}

/// One inner path from node `l`: increments, running max, log vol, log xi ratio.
struct Inner {
    dw: Vec<f64>,
    wmax: Vec<f64>,
    sigma: Vec<f64>,
    ln_xi: Vec<f64>,
}

fn inner_path(problem: &Problem, sc: &Scenario, l: usize, rng: &mut impl rand::RngCore) -> Inner {
    let grid = problem.grid;
    let k = grid.steps;
    let dt = grid.dt();
    let sd = dt.sqrt();
    let m = &problem.market;
    let n = k - l;
    let (decay, gain) = match m.vol_model {
        VolModel::Constant => (1.0, 0.0),
        VolModel::ExpOu => {
            let d = (-m.kappa * dt).exp();
            let g = if m.kappa > 0.0 { (1.0 - d) / (m.kappa * dt) } else { 1.0 };
            (d, m.varsigma * g)
        }
    };
    let mut dw = Vec::with_capacity(n);
    let mut wmax = Vec::with_capacity(n + 1);
    let mut sigma = Vec::with_capacity(n + 1);
    let mut ln_xi = Vec::with_capacity(n + 1);
    let (mut w, mut mx, mut ls, mut lx) = (sc.path.w[l], sc.path.wmax[l], sc.sigma[l].ln(), sc.ln_xi[l]);
    wmax.push(mx);
    sigma.push(sc.sigma[l]);
    ln_xi.push(lx);
    for _ in 0..n {
        let d = sd * normal(rng);
        let s = ls.exp();
        let th = m.theta(s);
        lx += -(m.r + 0.5 * th * th) * dt - th * d;
        if m.vol_model == VolModel::ExpOu {
            ls = decay * ls + gain * d;
        }
        w += d;
        mx = mx.max(w);
        dw.push(d);
        wmax.push(mx);
        sigma.push(ls.exp());
        ln_xi.push(lx);
    }
    Inner { dw, wmax, sigma, ln_xi }
}

fn inner_rng(est: &ConditionalEstimator, sc: &Scenario, l: usize) -> rand_chacha::ChaCha8Rng {
    stream_rng(est.master, DOMAIN_INNER, sc.id, l as u64)
}

/// Example 1. Cases I and II use the closed form; Case III estimates
/// `(theta / sigma xi_t) E[int xi_s gamma(eta xi_s) ds | F_t]` by nested
/// Monte Carlo with `gamma` the total risk tolerance.
pub fn pi_example1(problem: &Problem, sel: &PolicySelector, sc: &Scenario, l: usize, est: &ConditionalEstimator) -> Result<PortfolioValue> {
    let grid = problem.grid;
    let m = &problem.market;
    let sigma = m.sigma0;
    let theta = m.theta(sigma);
    let fam = &problem.family;
    match (&sel.policy, fam.kind) {
        (Policy::Split { p, .. }, FamilyKind::Case1Independent | FamilyKind::Case2Attention) => {
            let rho = rho_p(m.r, theta, *p)?;
            let t = grid.t(l);
            let tail = if rho.abs() < 1e-12 {
                grid.horizon - t
            } else {
                (rho * (grid.horizon - t)).exp_m1() / rho
            };
            let v = expenditure_scale(rho, problem.x0, grid.horizon) * tail * theta / (p * sigma) * (-sc.ln_xi[l] / p).exp();
            Ok(PortfolioValue::from_components(Components { theta: v, ..Default::default() }, 0.0))
        }
        (Policy::Substitution { table, k, eta }, FamilyKind::Case3Substitution) => {
            est.check()?;
            let p = table.p();
            let dt = grid.dt();
            let mut rng = inner_rng(est, sc, l);
            let samples: Vec<f64> = (0..est.inner_samples)
                .map(|_| {
                    let inner = inner_path(problem, sc, l, &mut rng);
                    let mut s = 0.0;
                    for j in 0..(grid.steps - l) {
                        let xi = inner.ln_xi[j].exp();
                        let y = eta * xi;
                        let x = table.psi(*k, y);
                        let gamma = 2.0 * y * (1.0 - p) * x.powf(2.0 * p + 1.0)
                            / (p * (1.0 - p) * x.powf(p) + (1.0 - 2.0 * p) * k * x);
                        s += (inner.ln_xi[j] - sc.ln_xi[l]).exp() * gamma * dt;
                    }
                    s * theta / sigma
                })
                .collect();
            let (v, se) = mean_se(&samples);
            Ok(PortfolioValue::from_components(Components { theta: v, ..Default::default() }, se))
        }
        _ => Err(Error::InvalidInput("pi_example1 needs an Example 1 selector".into())),
    }
}

/// Example 2: mean–variance part `theta X_t / (p sigma)` plus the
/// indecisiveness hedge driven by the running maximum.
pub fn pi_example2(problem: &Problem, sel: &PolicySelector, sc: &Scenario, l: usize, est: &ConditionalEstimator) -> Result<PortfolioValue> {
    est.check()?;
    let (p, beta, w, chi, lambda, eta) = match &sel.policy {
        Policy::Power { p, beta, a1: Attention::Running { w, chi, lambda }, eta, .. } => (*p, *beta, *w, *chi, *lambda, *eta),
        _ => return Err(Error::InvalidInput("pi_example2 needs an Example 2 selector".into())),
    };
    let grid = problem.grid;
    let k = grid.steps;
    let dt = grid.dt();
    let sigma = problem.market.sigma0;
    let theta = problem.market.theta(sigma);
    let a2 = w[0] + w[1];
    let (wmax_t, w_t) = (sc.path.wmax[l], sc.path.w[l]);
    let erfcs: Vec<f64> = (l + 1..k)
        .map(|j| malliavin_running_max(wmax_t, w_t, (j - l) as f64 * dt, 1.0))
        .collect::<Result<_>>()?;
    let mut rng = inner_rng(est, sc, l);
    let samples: Vec<(f64, f64)> = (0..est.inner_samples)
        .map(|_| {
            let inner = inner_path(problem, sc, l, &mut rng);
            let (mut wealth, mut hedge) = (0.0, 0.0);
            for j in 0..(k - l) {
                let t = grid.t(l + j);
                let ratio = (inner.ln_xi[j] - sc.ln_xi[l]).exp();
                let y = eta * inner.ln_xi[j].exp() * (beta * t).exp();
                let a1 = attention_coefficient(w, &chi, lambda, inner.wmax[j]);
                wealth += ratio * ((a1 / y).powf(1.0 / p) + (a2 / y).powf(1.0 / p)) * dt;
                if j >= 1 && w[1] > 0.0 {
                    let yy = lambda * inner.wmax[j] + 1.0;
                    let e = if est.pathwise_max {
                        if inner.wmax[j] > wmax_t { 1.0 } else { 0.0 }
                    } else {
                        erfcs[j - 1]
                    };
                    hedge += ratio * y.powf(-1.0 / p) * chi.derivative(yy) / a1.powf(1.0 - 1.0 / p) * e * dt;
                }
            }
            (theta / (p * sigma) * wealth, lambda * w[1] / (p * sigma) * hedge)
        })
        .collect();
    let (th, _) = mean_se(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
    let (ind, _) = mean_se(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
    let (_, se) = mean_se(&samples.iter().map(|s| s.0 + s.1).collect::<Vec<_>>());
    Ok(PortfolioValue::from_components(Components { theta: th, indecisiveness: ind, ..Default::default() }, se))
}

/// Example 3 with an atom on the second index coordinate.
pub fn pi_example3(problem: &Problem, sel: &PolicySelector, sc: &Scenario, l: usize, est: &ConditionalEstimator) -> Result<PortfolioValue> {
    est.check()?;
    let (q, pc, beta, lambda, horizon, ints, eta) = match &sel.policy {
        Policy::Hybrid { q, p_circ, beta, lambda, horizon, integrals, eta } => {
            (*q, *p_circ, *beta, *lambda, *horizon, integrals.clone(), *eta)
        }
        _ => return Err(Error::InvalidInput("pi_example3 needs an Example 3 selector".into())),
    };
    let grid = problem.grid;
    let m = problem.market;
    let k = grid.steps;
    let dt = grid.dt();
    let sigma_t = sc.sigma[l];
    let theta_t = m.theta(sigma_t);
    let (wmax_t, w_t) = (sc.path.wmax[l], sc.path.w[l]);
    let erfcs: Vec<f64> = (l + 1..=k)
        .map(|j| malliavin_running_max(wmax_t, w_t, (j - l) as f64 * dt, lambda))
        .collect::<Result<_>>()?;
    let q_past: f64 = (0..l).map(|j| ints.eval(lambda * sc.path.wmax[j] + 1.0).1 * dt).sum();
    let density = ints.density().clone();
    let chi = *ints.chi();
    let stochastic_vol = m.vol_model == VolModel::ExpOu && m.varsigma != 0.0;
    let mut rng = inner_rng(est, sc, l);
    let samples: Vec<Components> = (0..est.inner_samples)
        .map(|_| {
            let inner = inner_path(problem, sc, l, &mut rng);
            let n = k - l;
            let mut qw = q_past;
            let (mut cons, mut h_cons, mut ind_cons, mut dq) = (0.0, 0.0, 0.0, 0.0);
            let mut h = 0.0;
            for j in 0..n {
                let t = grid.t(l + j);
                let yy = lambda * inner.wmax[j] + 1.0;
                let (b1, b0) = ints.eval(yy);
                qw += b0 * dt;
                let ratio = (inner.ln_xi[j] - sc.ln_xi[l]).exp();
                let y = eta * inner.ln_xi[j].exp() * (beta * t).exp();
                let c1 = (b1 / y).powf(1.0 / q);
                let c2 = (b0 / y).powf(1.0 / q);
                let xc = ratio * (c1 + c2);
                cons += xc * dt;
                h_cons += xc * h * dt;
                if j >= 1 {
                    let wy = density.eval(yy);
                    let e = if est.pathwise_max {
                        if inner.wmax[j] > wmax_t { lambda } else { 0.0 }
                    } else {
                        erfcs[j - 1]
                    };
                    let mut d = 0.0;
                    if b1 > 0.0 {
                        d += c1 * wy * chi.eval(yy) / b1;
                    }
                    if b0 > 0.0 {
                        d += c2 * wy / b0;
                    }
                    ind_cons += ratio * d / q * e * dt;
                    dq += wy * e * dt;
                }
                if stochastic_vol {
                    let th = m.theta(inner.sigma[j]);
                    h += -m.varsigma * th * (-m.kappa * j as f64 * dt).exp() * (inner.dw[j] + th * dt);
                }
            }
            let ratio_t = (inner.ln_xi[n] - sc.ln_xi[l]).exp();
            let xt = (qw / (eta * inner.ln_xi[n].exp() * horizon * (beta * horizon).exp())).powf(1.0 / pc);
            let bq = ratio_t * xt;
            Components {
                theta: theta_t / sigma_t * (cons / q + bq / pc),
                hedge_h: -((1.0 - 1.0 / q) * h_cons + (1.0 - 1.0 / pc) * bq * h) / sigma_t,
                hedge_p: 0.0,
                indecisiveness: (ind_cons + bq * dq / (pc * qw)) / sigma_t,
            }
        })
        .collect();
    let avg = |f: fn(&Components) -> f64| mean_se(&samples.iter().map(f).collect::<Vec<_>>()).0;
    let comps = Components {
        theta: avg(|c| c.theta),
        hedge_h: avg(|c| c.hedge_h),
        hedge_p: 0.0,
        indecisiveness: avg(|c| c.indecisiveness),
    };
    let (_, se) = mean_se(&samples.iter().map(|c| c.total()).collect::<Vec<_>>());
    Ok(PortfolioValue::from_components(comps, se))
}

/// Dispatch on the selector's family.
pub fn pi_at(problem: &Problem, sel: &PolicySelector, sc: &Scenario, l: usize, est: &ConditionalEstimator) -> Result<PortfolioValue> {
    if l > problem.grid.steps {
        return Err(Error::InvalidInput(format!("time index {l} beyond the grid")));
    }
    match problem.family.kind {
        FamilyKind::Case1Independent | FamilyKind::Case2Attention | FamilyKind::Case3Substitution => {
            pi_example1(problem, sel, sc, l, est)
        }
        FamilyKind::Ex2Socialization => pi_example2(problem, sel, sc, l, est),
        FamilyKind::Ex3Hybrid => pi_example3(problem, sel, sc, l, est),
    }
}

/// Portfolio paths for one weight on a set of outer paths.
#[derive(Debug, Clone)]
pub struct PortfolioSelector {
    pub weight: Weight,
    /// `pi_paths[path][l]` for `l = 0..=K`.
    pub pi_paths: Vec<Vec<f64>>,
    pub components: Vec<Vec<Components>>,
    /// Inner Monte Carlo standard errors, same layout as `pi_paths`.
    pub se: Vec<Vec<f64>>,
}

/// Evaluate the portfolio at every grid node of every path (in parallel
/// over paths).
pub fn portfolio_selector(problem: &Problem, sel: &PolicySelector, paths: &[Scenario], est: &ConditionalEstimator) -> Result<PortfolioSelector> {
    let k = problem.grid.steps;
    let rows: Vec<Vec<PortfolioValue>> = paths
        .par_iter()
        .map(|sc| (0..=k).map(|l| pi_at(problem, sel, sc, l, est)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(PortfolioSelector {
        weight: sel.weight.clone(),
        pi_paths: rows.iter().map(|r| r.iter().map(|v| v.total).collect()).collect(),
        components: rows.iter().map(|r| r.iter().map(|v| v.components).collect()).collect(),
        se: rows.iter().map(|r| r.iter().map(|v| v.se).collect()).collect(),
    })
}

/// Outcome of an Euler wealth simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub x_terminal: f64,
    pub min_wealth: f64,
    /// `X*_T` from the consumption selector (zero without bequest).
    pub target: f64,
}

/// `X_{l+1} = X_l + (r X_l - C_l) dt + pi_l ((mu - r) dt + sigma_l dW_l)`
/// from `X_0 = x0` under the selector's consumption and `pi`.
pub fn replicate(problem: &Problem, sel: &PolicySelector, pi: &[f64], sc: &Scenario) -> Result<Replication> {
    let k = problem.grid.steps;
    if pi.len() < k {
        return Err(Error::DimensionMismatch(pi.len(), k));
    }
    let consumption = |l: usize| sel.policy.expenditure(sc, l);
    Ok(euler_wealth(problem, sc, pi, consumption, sel.policy.terminal(sc)))
}

pub(crate) fn euler_wealth<C: Fn(usize) -> f64>(problem: &Problem, sc: &Scenario, pi: &[f64], consumption: C, target: f64) -> Replication {
    let m = &problem.market;
    let dt = problem.grid.dt();
    let mut x = problem.x0;
    let mut lo = x;
    for l in 0..problem.grid.steps {
        x += (m.r * x - consumption(l)) * dt + pi[l] * ((m.mu - m.r) * dt + sc.sigma[l] * sc.path.dw(l));
        lo = lo.min(x);
    }
    Replication { x_terminal: x, min_wealth: lo, target }
}

/// Wealth under zero consumption and zero risky position (risk-free roll-up).
pub fn replicate_idle(problem: &Problem, sc: &Scenario) -> Replication {
    let pi = vec![0.0; problem.grid.steps];
    euler_wealth(problem, sc, &pi, |_| 0.0, 0.0)
}
