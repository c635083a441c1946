//! Example 2: the budget multiplier from the joint law of `(W^max_t, W_t)`.

use crate::error::{Error, Result};
use crate::preferences::ParamFn;
use crate::solver::quadrature::GaussLegendre;
use crate::stochastic::{joint_density_max_bm, MarketParams, TimeGrid};

/// Attention coefficient `a1(Y) = w1 chi(0) + w2 chi(Y)` with `Y = lambda m + 1`.
pub fn attention_coefficient(w: [f64; 2], chi: &ParamFn, lambda: f64, running_max: f64) -> f64 {
    w[0] * chi.eval(0.0) + w[1] * chi.eval(lambda * running_max + 1.0)
}

/// Inputs of the quadrature route.
#[derive(Debug, Clone, Copy)]
pub struct Ex2Quadrature<'a> {
    pub market: &'a MarketParams,
    pub p: f64,
    pub beta: f64,
    pub lambda: f64,
    pub chi: &'a ParamFn,
    pub w: [f64; 2],
    pub x0: f64,
    pub grid: &'a TimeGrid,
    /// Shift the running maximum down by `0.5826 sqrt(dt)` so the integral
    /// targets the maximum monitored on the grid, as the path average does.
    pub discrete_monitoring: bool,
}

/// `-zeta(1/2) / sqrt(2 pi)`, the Broadie–Glasserman–Kou continuity constant.
pub const BGK_BETA: f64 = 0.582_597_157_939_010_6;

const PANELS: usize = 8;
const OUTER_NODES: usize = 16;
const INNER_NODES: usize = 24;
const TAIL_SDS: f64 = 12.0;

impl Ex2Quadrature<'_> {
    // E[xi_t^{1-1/p} (a1(Y_t)^{1/p} + a2^{1/p})] with the expectation written
    // over u = 2 W^max_t - W_t >= 0 and W^max_t in [0, u].
    fn expectation(&self, t: f64, refine: usize) -> Result<f64> {
        let p = self.p;
        let a2 = (self.w[0] + self.w[1]).powf(1.0 / p);
        let theta = self.market.theta(self.market.sigma0);
        if t == 0.0 {
            return Ok(attention_coefficient(self.w, self.chi, self.lambda, 0.0).powf(1.0 / p) + a2);
        }
        let expo = 1.0 / p - 1.0;
        let pref = (expo * (self.market.r + 0.5 * theta * theta) * t).exp();
        let outer = GaussLegendre::new(OUTER_NODES);
        let inner = GaussLegendre::new(INNER_NODES * refine);
        let upper = TAIL_SDS * t.sqrt();
        let panels = PANELS * refine;
        let kinks: Vec<f64> = if self.lambda > 0.0 {
            self.chi.kinks().into_iter().map(|z| (z - 1.0) / self.lambda).filter(|x| *x > 0.0).collect()
        } else {
            vec![]
        };
        let shift = if self.discrete_monitoring { BGK_BETA * self.grid.dt().sqrt() } else { 0.0 };
        let mut kinks: Vec<f64> = kinks.into_iter().map(|x| x + shift).collect();
        if shift > 0.0 {
            kinks.insert(0, shift);
        }
        let mut total = 0.0;
        let mut err = None;
        // Panel edges, plus the kinks: the inner integral has one wherever
        // its own cut points enter.
        let mut edges: Vec<f64> = (0..=panels).map(|k| upper * k as f64 / panels as f64).collect();
        edges.extend(kinks.iter().copied().filter(|x| *x < upper));
        edges.sort_by(f64::total_cmp);
        for e in edges.windows(2) {
            let (a, b) = (e[0], e[1]);
            total += outer.integrate(a, b, |u| {
                let mut cuts = vec![0.0];
                cuts.extend(kinks.iter().copied().filter(|x| *x < u));
                cuts.push(u);
                let mut s = 0.0;
                for c in cuts.windows(2) {
                    s += inner.integrate(c[0], c[1], |x1| {
                        let x2 = 2.0 * x1 - u;
                        let dens = match joint_density_max_bm(x1, x2, t) {
                            Ok(d) => d,
                            Err(e) => {
                                err = Some(e);
                                0.0
                            }
                        };
                        let a1 = attention_coefficient(self.w, self.chi, self.lambda, (x1 - shift).max(0.0)).powf(1.0 / p);
                        dens * (expo * theta * x2).exp() * (a1 + a2)
                    });
                }
                s
            });
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(pref * total)
    }

    fn eta_root(&self, refine: usize) -> Result<f64> {
        let dt = self.grid.dt();
        let mut s = 0.0;
        for l in 0..self.grid.steps {
            let t = self.grid.t(l);
            s += (-self.beta * t / self.p).exp() * self.expectation(t, refine)? * dt;
        }
        Ok(s / self.x0)
    }

    /// `eta` from left-point time sums of the double integral. Fails when
    /// doubling the rule moves `eta^{1/p}` by more than `1e-10` relative.
    pub fn eta(&self) -> Result<f64> {
        let coarse = self.eta_root(1)?;
        let fine = self.eta_root(2)?;
        if !((coarse - fine).abs() <= 1e-10 * fine) {
            return Err(Error::Numerical(format!("Example 2 quadrature did not converge: {coarse} vs {fine}")));
        }
        Ok(fine.powf(self.p))
    }
}
