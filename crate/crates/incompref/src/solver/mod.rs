//! Scalarized consumption solver.
//!
//! For a weight `w`, the optimal consumption solves
//! `eta xi_t P_j = <w, u^{(j)}(t, c)>` with the budget multiplier `eta` fixed
//! by `E[int xi C dt + xi_T X_T] = X0`. Sweeping `w` over a grid traces the
//! solution set of the multi-utility problem.
//!
//! ```
//! use incompref::preferences::{UtilityFamily, Weight};
//! use incompref::solver::{solve, Problem, SolveOptions};
//! use incompref::stochastic::{simulate, MarketParams, TimeGrid};
//!
//! let market = MarketParams::constant(0.001, 0.02, 0.36);
//! let grid = TimeGrid::new(1.0, 50).unwrap();
//! let problem = Problem { market, family: UtilityFamily::case1(6.0), x0: 100.0, grid };
//! let paths = simulate(&grid, &market, 1, 0, 200).unwrap();
//! let sel = solve(&problem, &Weight::Finite(vec![0.5, 0.5]), &paths, &SolveOptions::default()).unwrap();
//! assert!(sel.diagnostics.budget_residual.abs() < 0.02);
//! ```

pub mod duality;
pub mod example1;
pub mod example2;
pub mod example3;
pub mod frontier;
pub mod quadrature;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index_set::mean_se;
use crate::preferences::{
    marginal_utility, reduce_to_j, utility_element, FamilyKind, GridDensity, ParamFn, SecondWeight, Util,
    UtilityFamily, Weight,
};
use crate::stochastic::{MarketParams, Scenario, TimeGrid, VolModel};

pub use duality::fenchel_check;
pub use example1::{rho_p, PsiTable};
pub use example3::W1Integrals;
pub use frontier::{frontier, FrontierPoint};

/// Market, preferences, initial wealth and time grid.
#[derive(Debug, Clone, Copy)]
pub struct Problem {
    pub market: MarketParams,
    pub family: UtilityFamily,
    pub x0: f64,
    pub grid: TimeGrid,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.family.validate()?;
        if !(self.x0 > 0.0) {
            return Err(Error::InvalidInput(format!("initial wealth must be positive, got {}", self.x0)));
        }
        if self.family.kind != FamilyKind::Ex3Hybrid && self.market.vol_model != VolModel::Constant {
            return Err(Error::InvalidInput("Examples 1 and 2 need constant volatility".into()));
        }
        Ok(())
    }

    /// Effective index `Y_l = lambda W^max_l + 1` of Examples 2 and 3.
    pub fn upper_index(&self, sc: &Scenario, l: usize) -> f64 {
        self.family.lambda * sc.path.wmax[l] + 1.0
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Number of leading paths whose consumption paths are materialized.
    pub keep_paths: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { keep_paths: 8 }
    }
}

/// Coefficient of `c_1^{-p}` in the scalarized first-order condition.
#[derive(Debug, Clone)]
pub enum Attention {
    Fixed(f64),
    /// `w1 chi(0) + w2 chi(lambda W^max + 1)`.
    Running { w: [f64; 2], chi: ParamFn, lambda: f64 },
}

/// Feedback form of an optimal consumption policy.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Cases I and II: `C* = scale xi^{-1/p}` split with a fixed share.
    Split { p: f64, scale: f64, share: f64 },
    /// `c_j = (a_j / (eta xi e^{beta t}))^{1/p}`.
    Power { p: f64, beta: f64, a1: Attention, a2: f64, eta: f64 },
    /// Case III: `c_1 = c_2 = psi(eta xi | k)`.
    Substitution { table: Arc<PsiTable>, k: f64, eta: f64 },
    /// Example 3 power feedback with bequest.
    Hybrid { q: f64, p_circ: f64, beta: f64, lambda: f64, horizon: f64, integrals: Arc<W1Integrals>, eta: f64 },
}

impl Policy {
    pub fn consumption(&self, sc: &Scenario, l: usize) -> [f64; 2] {
        let t = sc.path.grid.t(l);
        match self {
            Policy::Split { p, scale, share } => {
                let total = scale * (-sc.ln_xi[l] / p).exp();
                [share * total, (1.0 - share) * total]
            }
            Policy::Power { p, beta, a1, a2, eta } => {
                let y = eta * sc.xi(l) * (beta * t).exp();
                let a1 = match a1 {
                    Attention::Fixed(a) => *a,
                    Attention::Running { w, chi, lambda } => {
                        example2::attention_coefficient(*w, chi, *lambda, sc.path.wmax[l])
                    }
                };
                [(a1 / y).powf(1.0 / p), (a2 / y).powf(1.0 / p)]
            }
            Policy::Substitution { table, k, eta } => {
                let x = table.psi(*k, eta * sc.xi(l));
                [x, x]
            }
            Policy::Hybrid { q, beta, lambda, integrals, eta, .. } => {
                let (b1, b0) = integrals.eval(lambda * sc.path.wmax[l] + 1.0);
                let y = eta * sc.xi(l) * (beta * t).exp();
                [(b1 / y).powf(1.0 / q), (b0 / y).powf(1.0 / q)]
            }
        }
    }

    /// `xi_t C_t`, evaluated in log space; this is the inner loop of every
    /// budget check.
    pub fn discounted_expenditure(&self, sc: &Scenario, l: usize) -> f64 {
        let lx = sc.ln_xi[l];
        let t = sc.path.grid.t(l);
        match self {
            Policy::Split { p, scale, .. } => scale * ((1.0 - 1.0 / p) * lx).exp(),
            Policy::Power { p, beta, a1, a2, eta } => {
                let a1 = match a1 {
                    Attention::Fixed(a) => *a,
                    Attention::Running { w, chi, lambda } => {
                        example2::attention_coefficient(*w, chi, *lambda, sc.path.wmax[l])
                    }
                };
                let ln_y = eta.ln() + lx + beta * t;
                (lx + (a1.ln() - ln_y) / p).exp() + (lx + (a2.ln() - ln_y) / p).exp()
            }
            Policy::Substitution { table, k, eta } => 2.0 * (lx + table.ln_psi(*k, eta.ln() + lx)).exp(),
            Policy::Hybrid { q, beta, lambda, integrals, eta, .. } => {
                let (b1, b0) = integrals.eval(lambda * sc.path.wmax[l] + 1.0);
                let ln_y = eta.ln() + lx + beta * t;
                (lx + (b1.ln() - ln_y) / q).exp() + (lx + (b0.ln() - ln_y) / q).exp()
            }
        }
    }

    /// `C_t = c_1 + c_2` (commodity prices are one).
    pub fn expenditure(&self, sc: &Scenario, l: usize) -> f64 {
        match self {
            Policy::Split { p, scale, .. } => scale * (-sc.ln_xi[l] / p).exp(),
            _ => {
                let c = self.consumption(sc, l);
                c[0] + c[1]
            }
        }
    }

    /// Bequest weight `Q = int_0^T B0(Y_t) dt` (left-point sum) for Example 3.
    pub fn bequest_weight(&self, sc: &Scenario) -> f64 {
        match self {
            Policy::Hybrid { lambda, integrals, .. } => {
                let k = sc.path.grid.steps;
                integrals.along(*lambda, &sc.path.wmax[..k]).iter().map(|b| b.1).sum::<f64>() * sc.path.grid.dt()
            }
            _ => 0.0,
        }
    }

    /// Terminal wealth `X*_T` (zero without bequest).
    pub fn terminal(&self, sc: &Scenario) -> f64 {
        match self {
            Policy::Hybrid { p_circ, beta, horizon, eta, .. } => {
                let k = sc.path.grid.steps;
                let qw = self.bequest_weight(sc);
                (qw / (eta * sc.xi(k) * horizon * (beta * horizon).exp())).powf(1.0 / p_circ)
            }
            _ => 0.0,
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            Policy::Split { .. } => None,
            Policy::Power { eta, .. } | Policy::Substitution { eta, .. } | Policy::Hybrid { eta, .. } => Some(*eta),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Monte Carlo estimate of `E[int xi C dt + xi_T X_T]` on the solving paths.
    pub budget: f64,
    pub budget_se: f64,
    /// `(budget - X0) / X0`.
    pub budget_residual: f64,
    /// Observed range of `c_1 / c_2` over all nodes.
    pub quotient_range: (f64, f64),
    /// Nodes where the quotient leaves its theoretical bounds.
    pub quotient_violations: usize,
    /// Standard error of a Monte Carlo `eta`, when `eta` is itself an average.
    pub eta_se: Option<f64>,
    /// Independent quadrature value of `eta` (Example 2).
    pub eta_quadrature: Option<f64>,
    /// Share of nodes where `sigma_t` leaves `[eps, eps + 1]` (Example 3).
    pub proviso_violation: Option<f64>,
    pub warnings: Vec<String>,
}

/// One element of the solution set.
#[derive(Debug, Clone)]
pub struct PolicySelector {
    pub weight: Weight,
    pub eta: f64,
    pub policy: Policy,
    /// Consumption on the first `keep_paths` paths, per grid node.
    pub c_paths: Vec<Vec<[f64; 2]>>,
    pub expenditure_paths: Vec<Vec<f64>>,
    /// `X*_T` on every solving path.
    pub x_terminal: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub selectors: Vec<PolicySelector>,
    pub grid_description: String,
}

/// Per-path budget terms `int xi C dt + xi_T X_T` (left-point time sums).
pub fn budget_terms(policy: &Policy, paths: &[Scenario]) -> Vec<f64> {
    paths
        .par_iter()
        .map(|sc| {
            let grid = sc.path.grid;
            let dt = grid.dt();
            let running: f64 = match policy {
                Policy::Hybrid { q, beta, lambda, integrals, eta, .. } => {
                    // Logs of B1, B0 change only with the running maximum.
                    let ln_eta = eta.ln();
                    let mut last = (f64::NAN, 0.0, 0.0);
                    let bs = integrals.along(*lambda, &sc.path.wmax[..grid.steps]);
                    let mut sum = 0.0;
                    for (l, b) in bs.iter().enumerate() {
                        if b.0 != last.0 {
                            last = (b.0, b.0.ln(), b.1.ln());
                        }
                        let lx = sc.ln_xi[l];
                        let ln_y = ln_eta + lx + beta * grid.t(l);
                        sum += (lx + (last.1 - ln_y) / q).exp() + (lx + (last.2 - ln_y) / q).exp();
                    }
                    sum * dt
                }
                _ => (0..grid.steps).map(|l| policy.discounted_expenditure(sc, l) * dt).sum(),
            };
            running + sc.xi(grid.steps) * policy.terminal(sc)
        })
        .collect()
}

/// `(mean, standard error)` of the budget on `paths`; use an independent
/// path set for an out-of-sample check.
pub fn budget_on(policy: &Policy, paths: &[Scenario]) -> (f64, f64) {
    mean_se(&budget_terms(policy, paths))
}

fn check_paths(problem: &Problem, paths: &[Scenario]) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("no paths supplied".into()));
    }
    if let Some(sc) = paths.iter().find(|sc| sc.path.grid != problem.grid) {
        return Err(Error::InvalidInput(format!("path grid {:?} differs from problem grid {:?}", sc.path.grid, problem.grid)));
    }
    Ok(())
}

fn finite_weight(w: &Weight) -> Result<[f64; 2]> {
    match w.normalized()? {
        Weight::Finite(v) if v.len() == 2 => Ok([v[0], v[1]]),
        Weight::Finite(v) => Err(Error::DimensionMismatch(v.len(), 2)),
        Weight::GridAtom { .. } => Err(Error::InvalidInput("this family needs a finite weight on J".into())),
    }
}

/// Shared state for repeated Case III solves on one path set.
///
/// Besides the raw `ln xi` values, the context keeps a linear-binned
/// histogram of them. A root on the histogram is a cheap starting point; a
/// few steps on the exact path average then finish the solve.
pub struct Case3Context {
    table: Arc<PsiTable>,
    ln_xi: Vec<f64>,
    n_paths: usize,
    bin_lo: f64,
    bin_h: f64,
    bins: Vec<f64>,
}

const CASE3_BINS: usize = 1 << 13;

impl Case3Context {
    pub fn new(problem: &Problem, paths: &[Scenario]) -> Result<Self> {
        let table = Arc::new(PsiTable::new(problem.family.p)?);
        let k = problem.grid.steps;
        let ln_xi: Vec<f64> = paths.iter().flat_map(|sc| sc.ln_xi[..k].iter().copied()).collect();
        let lo = ln_xi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ln_xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Numerical("non-finite state price density".into()));
        }
        let h = ((hi - lo) / (CASE3_BINS - 1) as f64).max(1e-12);
        let mut bins = vec![0.0; CASE3_BINS + 1];
        for lx in &ln_xi {
            let z = (lx - lo) / h;
            let i = (z as usize).min(CASE3_BINS - 1);
            let s = z - i as f64;
            bins[i] += 1.0 - s;
            bins[i + 1] += s;
        }
        Ok(Case3Context { table, ln_xi, n_paths: paths.len(), bin_lo: lo, bin_h: h, bins })
    }

    fn ln_s(&self, k: f64) -> f64 {
        let p = self.table.p();
        (k / (p - 1.0)).ln() / (p - 1.0)
    }

    // 2 dt mean_paths sum_l xi psi(eta xi | k), from the table.
    fn budget(&self, k: f64, ln_eta: f64, dt: f64) -> f64 {
        let ln_s = self.ln_s(k);
        let s: f64 = self.ln_xi.iter().map(|lx| (lx + self.table.ln_psi_fast(ln_s, ln_eta + lx)).exp()).sum();
        2.0 * dt * s / self.n_paths as f64
    }

    fn budget_binned(&self, k: f64, ln_eta: f64, dt: f64) -> f64 {
        let ln_s = self.ln_s(k);
        let s: f64 = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| {
                let lx = self.bin_lo + i as f64 * self.bin_h;
                m * (lx + self.table.ln_psi_fast(ln_s, ln_eta + lx)).exp()
            })
            .sum();
        2.0 * dt * s / self.n_paths as f64
    }
}

/// Root of a strictly decreasing `f(log eta)` by bracketed regula falsi with
/// the Illinois modification. Each new value must fall strictly inside the
/// bracket values, otherwise the map is reported as non-monotone.
pub fn solve_log_eta<F: FnMut(f64) -> f64>(mut f: F, guess: f64, tol: f64) -> Result<f64> {
    let mut a = guess - 1.0;
    let mut b = guess + 1.0;
    let mut fa = f(a);
    let mut fb = f(b);
    let mut n = 0;
    while !(fa > 0.0) {
        b = a;
        fb = fa;
        a -= 2f64.powi(n.min(10));
        fa = f(a);
        n += 1;
        if n > 200 || !fa.is_finite() {
            return Err(Error::Bracket("budget multiplier (lower end)".into()));
        }
    }
    while !(fb < 0.0) {
        a = b;
        fa = fb;
        b += 2f64.powi(n.min(10));
        fb = f(b);
        n += 1;
        if n > 400 || !fb.is_finite() {
            return Err(Error::Bracket("budget multiplier (upper end)".into()));
        }
    }
    let mut side = 0i8;
    for _ in 0..300 {
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if !(fx <= fa && fx >= fb) {
            return Err(Error::Numerical(format!("budget map is not monotone near log eta = {x}")));
        }
        if fx.abs() <= tol || (b - a) <= 1e-15 * (1.0 + x.abs()) {
            return Ok(x);
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Relative tolerance on the budget equation for iterative `eta` solves.
pub const BUDGET_TOL: f64 = 1e-13;

/// Example 1, any case.
pub fn solve_example1(problem: &Problem, w: &Weight, paths: &[Scenario], opts: &SolveOptions) -> Result<PolicySelector> {
    problem.validate()?;
    check_paths(problem, paths)?;
    let w2 = finite_weight(w)?;
    let fam = &problem.family;
    let p = fam.p;
    let policy = match fam.kind {
        FamilyKind::Case1Independent | FamilyKind::Case2Attention => {
            let a = coefficients(fam, w2);
            let rho = rho_p(problem.market.r, problem.market.theta(problem.market.sigma0), p)?;
            let scale = example1::expenditure_scale(rho, problem.x0, problem.grid.horizon);
            let (r1, r2) = (a[0].powf(1.0 / p), a[1].powf(1.0 / p));
            Policy::Split { p, scale, share: r1 / (r1 + r2) }
        }
        FamilyKind::Case3Substitution => {
            let ctx = Case3Context::new(problem, paths)?;
            return solve_case3_with(problem, w, &ctx, paths, opts);
        }
        _ => return Err(Error::InvalidInput("solve_example1 needs an Example 1 family".into())),
    };
    finish(problem, w.normalized()?, policy, paths, opts, Diagnostics::default())
}

// a_j = sum_k w_k alpha_{k,j} where element J_k has marginal alpha_{k,j} c_j^{-p}.
fn coefficients(fam: &UtilityFamily, w: [f64; 2]) -> [f64; 2] {
    match fam.kind {
        FamilyKind::Case1Independent => w,
        FamilyKind::Case2Attention => [w[1] * fam.chi, w[0] + w[1]],
        _ => [f64::NAN, f64::NAN],
    }
}

/// Case III with a precomputed context (shared across a sweep).
pub fn solve_case3_with(
    problem: &Problem,
    w: &Weight,
    ctx: &Case3Context,
    paths: &[Scenario],
    opts: &SolveOptions,
) -> Result<PolicySelector> {
    let w2 = finite_weight(w)?;
    let (k1, k2) = problem.family.kappa_range;
    let k = w2[0] * k1 + w2[1] * k2;
    let p = problem.family.p;
    let dt = problem.grid.dt();
    let x0 = problem.x0;
    // Without substitution, psi = y^{-1/p}; that eta is a good first guess.
    let m: f64 = ctx.ln_xi.iter().map(|lx| ((1.0 - 1.0 / p) * lx).exp()).sum::<f64>() / ctx.n_paths as f64;
    let guess = p * (2.0 * dt * m / x0).ln();
    let proxy = |le: f64| (ctx.budget_binned(k, le, dt) / x0).ln();
    let mut ln_eta = solve_log_eta(proxy, guess, 1e-12)?;
    let slope = (proxy(ln_eta + 1e-4) - proxy(ln_eta - 1e-4)) / 2e-4;
    if !(slope < 0.0) {
        return Err(Error::Numerical(format!("Case III budget slope {slope} is not negative")));
    }
    for _ in 0..8 {
        let f = (ctx.budget(k, ln_eta, dt) / x0).ln();
        if !f.is_finite() {
            return Err(Error::Numerical("Case III budget is not finite".into()));
        }
        if f.abs() <= BUDGET_TOL {
            break;
        }
        ln_eta -= f / slope;
    }
    let policy = Policy::Substitution { table: ctx.table.clone(), k, eta: ln_eta.exp() };
    finish(problem, w.normalized()?, policy, paths, opts, Diagnostics::default())
}

/// Example 2: `eta^{1/p}` is an explicit path average; the quadrature value
/// is stored as a cross-check.
pub fn solve_example2(problem: &Problem, w: &Weight, paths: &[Scenario], opts: &SolveOptions) -> Result<PolicySelector> {
    solve_example2_with(problem, w, paths, opts, true)
}

/// As [`solve_example2`], optionally skipping the quadrature cross-check.
pub fn solve_example2_with(
    problem: &Problem,
    w: &Weight,
    paths: &[Scenario],
    opts: &SolveOptions,
    quadrature: bool,
) -> Result<PolicySelector> {
    problem.validate()?;
    check_paths(problem, paths)?;
    let fam = &problem.family;
    if fam.kind != FamilyKind::Ex2Socialization {
        return Err(Error::InvalidInput("solve_example2 needs the Example 2 family".into()));
    }
    let w2 = finite_weight(w)?;
    let p = fam.p;
    let a2 = w2[0] + w2[1];
    let grid = problem.grid;
    let dt = grid.dt();
    let terms: Vec<f64> = paths
        .par_iter()
        .map(|sc| {
            (0..grid.steps)
                .map(|l| {
                    let a1 = example2::attention_coefficient(w2, &fam.chi_fn, fam.lambda, sc.path.wmax[l]);
                    let t = grid.t(l);
                    ((1.0 - 1.0 / p) * sc.ln_xi[l] - fam.beta * t / p).exp()
                        * (a1.powf(1.0 / p) + a2.powf(1.0 / p))
                        * dt
                })
                .sum()
        })
        .collect();
    let (m, se) = mean_se(&terms);
    let eta = (m / problem.x0).powf(p);
    let mut diag = Diagnostics { eta_se: Some(p * eta * se / m), ..Default::default() };
    if quadrature {
        let q = example2::Ex2Quadrature {
            market: &problem.market,
            p,
            beta: fam.beta,
            lambda: fam.lambda,
            chi: &fam.chi_fn,
            w: w2,
            x0: problem.x0,
            grid: &grid,
            discrete_monitoring: true,
        };
        diag.eta_quadrature = Some(q.eta()?);
    }
    let policy = Policy::Power {
        p,
        beta: fam.beta,
        a1: Attention::Running { w: w2, chi: fam.chi_fn, lambda: fam.lambda },
        a2,
        eta,
    };
    finish(problem, w.normalized()?, policy, paths, opts, diag)
}

/// Example 3 with a density on the first index and an atom on the second.
pub fn solve_example3(problem: &Problem, w: &Weight, paths: &[Scenario], opts: &SolveOptions) -> Result<PolicySelector> {
    problem.validate()?;
    check_paths(problem, paths)?;
    let fam = &problem.family;
    if fam.kind != FamilyKind::Ex3Hybrid {
        return Err(Error::InvalidInput("solve_example3 needs the Example 3 family".into()));
    }
    let wn = w.normalized()?;
    let (w1, atom) = match &wn {
        Weight::GridAtom { w1, w2: SecondWeight::Atom(a) } => (w1.clone(), *a),
        _ => return Err(Error::InvalidInput("Example 3 needs a grid density with a single atom".into())),
    };
    let eps = example3::check_atom(atom)?;
    let integrals = Arc::new(W1Integrals::new(w1, fam.chi_fn));
    let q = fam.p_fn.eval(atom);
    let pc = fam.p_circ;
    let grid = problem.grid;
    let horizon = grid.horizon;
    let mut policy = Policy::Hybrid {
        q,
        p_circ: pc,
        beta: fam.beta,
        lambda: fam.lambda,
        horizon,
        integrals: integrals.clone(),
        eta: 1.0,
    };
    // Budget = eta^{-1/q} A + eta^{-1/p_circ} B.
    let dt = grid.dt();
    let parts: Vec<(f64, f64)> = paths
        .par_iter()
        .map(|sc| {
            let mut a = 0.0;
            let mut qw = 0.0;
            for (l, &(b1, b0)) in integrals.along(fam.lambda, &sc.path.wmax[..grid.steps]).iter().enumerate() {
                let t = grid.t(l);
                a += ((1.0 - 1.0 / q) * sc.ln_xi[l] - fam.beta * t / q).exp()
                    * (b1.powf(1.0 / q) + b0.powf(1.0 / q))
                    * dt;
                qw += b0 * dt;
            }
            let k = grid.steps;
            let b = ((1.0 - 1.0 / pc) * sc.ln_xi[k]).exp() * (qw / (horizon * (fam.beta * horizon).exp())).powf(1.0 / pc);
            (a, b)
        })
        .collect();
    let n = paths.len() as f64;
    let big_a = parts.iter().map(|x| x.0).sum::<f64>() / n;
    let big_b = parts.iter().map(|x| x.1).sum::<f64>() / n;
    let x0 = problem.x0;
    let guess = q.max(pc) * ((big_a + big_b) / x0).ln();
    let ln_eta = solve_log_eta(
        |le| ((-le / q).exp() * big_a + (-le / pc).exp() * big_b) / x0 - 1.0,
        guess,
        BUDGET_TOL,
    )?;
    if let Policy::Hybrid { eta, .. } = &mut policy {
        *eta = ln_eta.exp();
    }
    let outside = paths
        .iter()
        .flat_map(|sc| sc.sigma.iter())
        .filter(|s| !(**s >= eps && **s <= eps + 1.0))
        .count();
    let total = paths.len() * (grid.steps + 1);
    let frac = outside as f64 / total as f64;
    let mut diag = Diagnostics { proviso_violation: Some(frac), ..Default::default() };
    if outside > 0 {
        diag.warnings.push(format!(
            "volatility left [{eps}, {}] at {:.2}% of nodes; the atom then lies outside the index set",
            eps + 1.0,
            100.0 * frac
        ));
    }
    finish(problem, wn, policy, paths, opts, diag)
}

/// Dispatch on the family kind.
pub fn solve(problem: &Problem, w: &Weight, paths: &[Scenario], opts: &SolveOptions) -> Result<PolicySelector> {
    match problem.family.kind {
        FamilyKind::Case1Independent | FamilyKind::Case2Attention | FamilyKind::Case3Substitution => {
            solve_example1(problem, w, paths, opts)
        }
        FamilyKind::Ex2Socialization => solve_example2(problem, w, paths, opts),
        FamilyKind::Ex3Hybrid => solve_example3(problem, w, paths, opts),
    }
}

/// One selector per weight; `eta` is re-solved for each.
pub fn sweep(problem: &Problem, weights: &[Weight], paths: &[Scenario], opts: &SolveOptions) -> Result<SolutionSet> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight grid".into()));
    }
    let ctx = if problem.family.kind == FamilyKind::Case3Substitution {
        problem.validate()?;
        check_paths(problem, paths)?;
        Some(Case3Context::new(problem, paths)?)
    } else {
        None
    };
    let selectors = weights
        .iter()
        .map(|w| match &ctx {
            Some(ctx) => solve_case3_with(problem, w, ctx, paths, opts),
            None => solve(problem, w, paths, opts),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolutionSet { selectors, grid_description: format!("{} weights, {:?}", weights.len(), problem.family.kind) })
}

// Quotient bounds that the feedback forms must satisfy at node l.
fn quotient_bounds(problem: &Problem, sc: &Scenario, l: usize) -> Option<(f64, f64)> {
    let fam = &problem.family;
    match fam.kind {
        FamilyKind::Case2Attention => Some((0.0, fam.chi.powf(1.0 / fam.p))),
        FamilyKind::Ex2Socialization => Some((
            fam.chi_fn.eval(0.0).powf(1.0 / fam.p),
            fam.chi_fn.eval(problem.upper_index(sc, l)).powf(1.0 / fam.p),
        )),
        _ => None,
    }
}

const QUOTIENT_TOL: f64 = 1e-12;

fn finish(
    problem: &Problem,
    weight: Weight,
    policy: Policy,
    paths: &[Scenario],
    opts: &SolveOptions,
    mut diag: Diagnostics,
) -> Result<PolicySelector> {
    let k = problem.grid.steps;
    let (budget, se) = budget_on(&policy, paths);
    diag.budget = budget;
    diag.budget_se = se;
    diag.budget_residual = (budget - problem.x0) / problem.x0;
    // Only the bounded families need the quotient on every path.
    let keep = opts.keep_paths.min(paths.len());
    let bounded = matches!(problem.family.kind, FamilyKind::Case2Attention | FamilyKind::Ex2Socialization);
    let checked = if bounded { paths } else { &paths[..keep.max(1)] };
    let stats: Vec<(f64, f64, usize)> = checked
        .par_iter()
        .map(|sc| {
            let (mut lo, mut hi, mut bad) = (f64::INFINITY, 0.0f64, 0usize);
            for l in 0..k {
                let c = policy.consumption(sc, l);
                let qt = c[0] / c[1];
                lo = lo.min(qt);
                hi = hi.max(qt);
                if let Some((a, b)) = quotient_bounds(problem, sc, l) {
                    if qt < a * (1.0 - QUOTIENT_TOL) || qt > b * (1.0 + QUOTIENT_TOL) {
                        bad += 1;
                    }
                }
            }
            (lo, hi, bad)
        })
        .collect();
    diag.quotient_range = stats.iter().fold((f64::INFINITY, 0.0f64), |acc, s| (acc.0.min(s.0), acc.1.max(s.1)));
    diag.quotient_violations = stats.iter().map(|s| s.2).sum();
    let c_paths = paths[..keep].iter().map(|sc| (0..=k).map(|l| policy.consumption(sc, l)).collect()).collect();
    let expenditure_paths = paths[..keep].iter().map(|sc| (0..=k).map(|l| policy.expenditure(sc, l)).collect()).collect();
    let x_terminal = paths.par_iter().map(|sc| policy.terminal(sc)).collect();
    let eta = match &policy {
        Policy::Split { p, scale, .. } => {
            // Implied multiplier: C* = (a1^{1/p} + a2^{1/p}) (eta xi)^{-1/p}.
            let fam = &problem.family;
            let w = finite_weight(&weight)?;
            let a = coefficients(fam, w);
            ((a[0].powf(1.0 / p) + a[1].powf(1.0 / p)) / scale).powf(*p)
        }
        other => other.eta().expect("iterative policies carry eta"),
    };
    Ok(PolicySelector { weight, eta, policy, c_paths, expenditure_paths, x_terminal, diagnostics: diag })
}

/// Largest relative first-order-condition residual on a path,
/// `|<w, u^{(j)}(t, c)> - eta xi| / (eta xi)` over nodes and goods, plus
/// the terminal condition for Example 3.
///
/// Marginal utilities are taken element by element from
/// [`crate::preferences::marginal_utility`]; goods with zero coefficient
/// (corner solutions) are skipped. Example 3 integrates over the first index
/// with four-point Gauss–Legendre per density cell, which is exact there.
pub fn foc_residual(problem: &Problem, sel: &PolicySelector, sc: &Scenario) -> Result<f64> {
    let fam = &problem.family;
    let grid = problem.grid;
    let eta = sel.eta;
    let mut worst = 0.0f64;
    let gl = quadrature::GaussLegendre::new(4);
    for l in 0..grid.steps {
        let t = grid.t(l);
        let c = sel.policy.consumption(sc, l);
        let target = eta * sc.xi(l);
        for j in 0..2 {
            let lhs = match (&sel.weight, reduce_to_j(fam)) {
                (Weight::Finite(w), Some(red)) => {
                    let idx = crate::geometry::BoxSet::interval(0.0, problem.upper_index(sc, l))?;
                    let pts = red.resolve(&idx);
                    if c[j] == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for (wk, ik) in w.iter().zip(&pts) {
                        if *wk != 0.0 {
                            s += wk * marginal_utility(fam, &[*ik], t, c, j)?;
                        }
                    }
                    s
                }
                (Weight::GridAtom { w1, w2: SecondWeight::Atom(atom) }, None) => {
                    let y = problem.upper_index(sc, l);
                    integrate_density(w1, y, &gl, |i1| marginal_utility(fam, &[i1, *atom], t, c, j))?
                }
                _ => return Err(Error::InvalidInput("weight does not match the family".into())),
            };
            worst = worst.max((lhs - target).abs() / target);
        }
    }
    if let (Policy::Hybrid { p_circ, beta, horizon, .. }, Weight::GridAtom { .. }) = (&sel.policy, &sel.weight) {
        let k = grid.steps;
        let x = sel.policy.terminal(sc);
        let qw = sel.policy.bequest_weight(sc);
        let lhs = qw / horizon * (-beta * horizon).exp() * x.powf(-p_circ);
        let target = eta * sc.xi(k);
        worst = worst.max((lhs - target).abs() / target);
    }
    Ok(worst)
}

// int_0^y w1(i) f(i) di, cell by cell.
fn integrate_density<F: Fn(f64) -> Result<f64>>(
    w1: &GridDensity,
    y: f64,
    gl: &quadrature::GaussLegendre,
    f: F,
) -> Result<f64> {
    let h = w1.step();
    let top = y.min(w1.max);
    let mut s = 0.0;
    let mut a = 0.0;
    let mut err = None;
    let mut k = 0usize;
    while a < top {
        let b = ((k + 1) as f64 * h).min(top);
        let (va, vb) = (w1.values[k], w1.values[k + 1]);
        let x0 = k as f64 * h;
        s += gl.integrate(a, b, |x| {
            let dens = va + (vb - va) * (x - x0) / h;
            match f(x) {
                Ok(v) => dens * v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        });
        a = b;
        k += 1;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(s),
    }
}

/// Monte Carlo estimate of the scalarized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEstimate {
    pub value: Util,
    pub se: f64,
}

/// `E[int <w, u(t, c_t)> dt + <w, U(X_T)>]` for an arbitrary consumption
/// rule, with left-point time sums. The bequest term of Example 3 carries
/// the weight `Q / T`.
pub fn scalarized_objective_with<C, X>(
    problem: &Problem,
    weight: &Weight,
    paths: &[Scenario],
    consumption: C,
    terminal: X,
) -> Result<ObjectiveEstimate>
where
    C: Fn(&Scenario, usize) -> [f64; 2] + Sync,
    X: Fn(&Scenario) -> f64 + Sync,
{
    let fam = problem.family;
    let grid = problem.grid;
    let dt = grid.dt();
    let integrals = match weight {
        Weight::GridAtom { w1, .. } => Some(W1Integrals::new(w1.clone(), fam.chi_fn)),
        _ => None,
    };
    let per_path: Vec<Result<Util>> = paths
        .par_iter()
        .map(|sc| {
            let mut total = Util::Finite(0.0);
            let mut qw = 0.0;
            for l in 0..grid.steps {
                let t = grid.t(l);
                let c = consumption(sc, l);
                let u = match (weight, &integrals) {
                    (Weight::Finite(w), _) => {
                        let idx = crate::geometry::BoxSet::interval(0.0, problem.upper_index(sc, l))?;
                        let red = reduce_to_j(&fam)
                            .ok_or_else(|| Error::InvalidInput("finite weight on a non-reducible family".into()))?;
                        let mut s = Util::Finite(0.0);
                        for (wk, ik) in w.iter().zip(red.resolve(&idx)) {
                            if *wk != 0.0 {
                                s = match utility_element(&fam, &[ik], t, c)? {
                                    Util::Finite(v) => add_util(s, Util::Finite(wk * v)),
                                    Util::NegInf => Util::NegInf,
                                };
                            }
                        }
                        s
                    }
                    (Weight::GridAtom { w2: SecondWeight::Atom(atom), .. }, Some(ints)) => {
                        let (b1, b0) = ints.eval(problem.upper_index(sc, l));
                        qw += b0 * dt;
                        // The element is affine in chi(i1), so the weighted
                        // integral only needs B1 and B0.
                        ex3_weighted(&fam, *atom, t, c, b1, b0)
                    }
                    _ => return Err(Error::InvalidInput("weight does not match the family".into())),
                };
                total = add_util(total, scale_util(u, dt));
            }
            if let Weight::GridAtom { .. } = weight {
                let x = terminal(sc);
                let disc = (-fam.beta * grid.horizon).exp();
                let p = fam.p_circ;
                let ub = if x == 0.0 && p > 1.0 {
                    Util::NegInf
                } else {
                    Util::Finite(disc * (x.powf(1.0 - p) - 1.0) / (1.0 - p))
                };
                total = add_util(total, scale_util(ub, qw / grid.horizon));
            }
            Ok(total)
        })
        .collect();
    let mut vals = Vec::with_capacity(paths.len());
    for r in per_path {
        match r? {
            Util::Finite(v) => vals.push(v),
            Util::NegInf => return Ok(ObjectiveEstimate { value: Util::NegInf, se: 0.0 }),
        }
    }
    let (m, se) = mean_se(&vals);
    Ok(ObjectiveEstimate { value: Util::Finite(m), se })
}

fn ex3_weighted(fam: &UtilityFamily, atom: f64, t: f64, c: [f64; 2], b1: f64, b0: f64) -> Util {
    let q = fam.p_fn.eval(atom);
    let disc = (-fam.beta * t).exp();
    let term = |coef: f64, x: f64| {
        if coef == 0.0 {
            Util::Finite(0.0)
        } else if x == 0.0 && q > 1.0 {
            Util::NegInf
        } else {
            Util::Finite(coef * disc * (x.powf(1.0 - q) - 1.0) / (1.0 - q))
        }
    };
    add_util(term(b1, c[0]), term(b0, c[1]))
}

fn add_util(a: Util, b: Util) -> Util {
    match (a, b) {
        (Util::Finite(x), Util::Finite(y)) => Util::Finite(x + y),
        _ => Util::NegInf,
    }
}

fn scale_util(a: Util, s: f64) -> Util {
    match a {
        Util::Finite(x) => Util::Finite(s * x),
        Util::NegInf if s == 0.0 => Util::Finite(0.0),
        Util::NegInf => Util::NegInf,
    }
}

/// Objective of a solved selector on `paths`.
pub fn scalarized_objective(problem: &Problem, sel: &PolicySelector, paths: &[Scenario]) -> Result<ObjectiveEstimate> {
    scalarized_objective_with(
        problem,
        &sel.weight,
        paths,
        |sc, l| sel.policy.consumption(sc, l),
        |sc| sel.policy.terminal(sc),
    )
}
