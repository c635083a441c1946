//! Example 3: attention density integrals over the first index coordinate.

use crate::error::{Error, Result};
use crate::preferences::{simpson, GridDensity, ParamFn};

/// Cumulative integrals `B0(y) = int_0^y w1` and `B1(y) = int_0^y w1 chi`
/// for a piecewise-linear `w1`, exact for piecewise-linear `chi`.
#[derive(Debug, Clone)]
pub struct W1Integrals {
    density: GridDensity,
    chi: ParamFn,
    cum0: Vec<f64>,
    cum1: Vec<f64>,
}

impl W1Integrals {
    pub fn new(density: GridDensity, chi: ParamFn) -> Self {
        let h = density.step();
        let n = density.values.len();
        let mut cum0 = vec![0.0; n];
        let mut cum1 = vec![0.0; n];
        for k in 1..n {
            let (a, b) = ((k - 1) as f64 * h, k as f64 * h);
            cum0[k] = cum0[k - 1] + 0.5 * h * (density.values[k - 1] + density.values[k]);
            cum1[k] = cum1[k - 1] + piece(&density, &chi, a, b);
        }
        W1Integrals { density, chi, cum0, cum1 }
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    pub fn chi(&self) -> &ParamFn {
        &self.chi
    }

    /// `(B1(y), B0(y))`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        let n = self.cum0.len();
        if y >= self.density.max {
            return (self.cum1[n - 1], self.cum0[n - 1]);
        }
        if y <= 0.0 {
            return (0.0, 0.0);
        }
        let h = self.density.step();
        let k = ((y / h) as usize).min(n - 2);
        let a = k as f64 * h;
        let b0 = self.cum0[k] + 0.5 * (y - a) * (self.density.values[k] + self.density.eval(y));
        let b1 = self.cum1[k] + piece(&self.density, &self.chi, a, y);
        (b1, b0)
    }

    /// `eval(lambda wmax_l + 1)` for every node of a path; the running
    /// maximum is flat most of the time, so repeats are reused.
    pub fn along(&self, lambda: f64, wmax: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(wmax.len());
        let mut last = (f64::NAN, (0.0, 0.0));
        for m in wmax {
            if *m != last.0 {
                last = (*m, self.eval(lambda * m + 1.0));
            }
            out.push(last.1);
        }
        out
    }
}

// int_a^b w1 chi inside one density cell; Simpson is exact on each side of
// the kink of chi since the integrand is quadratic there.
fn piece(density: &GridDensity, chi: &ParamFn, a: f64, b: f64) -> f64 {
    let f = |x: f64| density_in_cell(density, a, b, x) * chi.eval(x);
    match *chi {
        ParamFn::ScaledIdMin { cap, .. } if cap > a && cap < b => simpson(&f, a, cap, 2) + simpson(&f, cap, b, 2),
        _ => simpson(&f, a, b, 2),
    }
}

// Linear interpolant of the cell containing [a, b], evaluated at x; avoids
// picking the neighbouring cell at the right endpoint.
fn density_in_cell(density: &GridDensity, a: f64, b: f64, x: f64) -> f64 {
    let h = density.step();
    let k = (((a + b) * 0.5 / h) as usize).min(density.values.len() - 2);
    let s = (x - k as f64 * h) / h;
    density.values[k] * (1.0 - s) + density.values[k + 1] * s
}

/// Atom location `eps + 2` must give a usable risk aversion.
pub(crate) fn check_atom(atom: f64) -> Result<f64> {
    let eps = atom - 2.0;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("atom must sit at eps + 2 with eps > 0, got {atom}")));
    }
    Ok(eps)
}
