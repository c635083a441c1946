//! Discretized Brownian paths and the single-valued processes built on them:
//! running maximum, exponential OU volatility, state price density and the
//! risky asset price.
//!
//! Paths are generated from counter-based streams: path `i` of master seed
//! `s` is the same whether it is produced alone, in a batch, or on another
//! thread.
//!
//! ```
//! use incompref::stochastic::{sample_path, Seed, TimeGrid};
//!
//! let grid = TimeGrid::new(1.0, 200).unwrap();
//! let path = sample_path(&grid, Seed::new(7, 0)).unwrap();
//! assert_eq!(path.w[0], 0.0);
//! assert!(path.wmax.iter().zip(&path.w).all(|(m, w)| m >= w));
//! ```

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Uniform partition `t_l = l T / K` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidInput("time grid needs K >= 1".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, l: usize) -> f64 {
        if l == self.steps {
            self.horizon
        } else {
            l as f64 * self.dt()
        }
    }

    /// Index of the grid point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.steps)
    }
}

/// Counter-based seed: master seed plus path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seed {
    pub master: u64,
    pub index: u64,
}

impl Seed {
    pub fn new(master: u64, index: u64) -> Self {
        Seed { master, index }
    }
}

/// Stream domains keep outer paths and nested estimators from sharing draws.
pub(crate) const DOMAIN_PATH: u64 = 0x7061_7468;
pub(crate) const DOMAIN_INNER: u64 = 0x696e_6e65;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed on `(master, domain)`, positioned at `(stream, block)`.
///
/// Every `(stream, block)` pair owns 2^36 words, far more than any single
/// path or nested estimate consumes.
pub fn stream_rng(master: u64, domain: u64, stream: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut z = splitmix(master ^ splitmix(domain));
    for chunk in key.chunks_mut(8) {
        z = splitmix(z);
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng.set_word_pos((block as u128) << 36);
    rng
}

pub(crate) fn normal<R: RngCore>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Brownian path on a grid with its discrete running maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: TimeGrid,
    pub w: Vec<f64>,
    pub wmax: Vec<f64>,
}

impl BrownianPath {
    /// Build from increments `dw[l] = W_{l+1} - W_l`.
    pub fn from_increments(grid: TimeGrid, dw: &[f64]) -> Result<Self> {
        if dw.len() != grid.steps {
            return Err(Error::DimensionMismatch(dw.len(), grid.steps));
        }
        let mut w = Vec::with_capacity(grid.steps + 1);
        w.push(0.0);
        for d in dw {
            w.push(w.last().unwrap() + d);
        }
        let wmax = running_max(&w);
        Ok(BrownianPath { grid, w, wmax })
    }

    pub fn dw(&self, l: usize) -> f64 {
        self.w[l + 1] - self.w[l]
    }

    /// The same path observed on the coarser grid with `steps` points; the
    /// running maximum is recomputed from the coarse observations only.
    pub fn restrict(&self, steps: usize) -> Result<Self> {
        if steps == 0 || self.grid.steps % steps != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot restrict a {}-step path to {steps} steps",
                self.grid.steps
            )));
        }
        let m = self.grid.steps / steps;
        let w: Vec<f64> = (0..=steps).map(|l| self.w[l * m]).collect();
        let wmax = running_max(&w);
        Ok(BrownianPath { grid: TimeGrid::new(self.grid.horizon, steps)?, w, wmax })
    }
}

fn running_max(w: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    w.iter()
        .map(|x| {
            m = m.max(*x);
            m
        })
        .collect()
}

/// I.i.d. `N(0, T/K)` increments from the counter-based stream of `seed`.
pub fn sample_path(grid: &TimeGrid, seed: Seed) -> Result<BrownianPath> {
    if grid.steps == 0 {
        return Err(Error::InvalidInput("K = 0".into()));
    }
    let mut rng = stream_rng(seed.master, DOMAIN_PATH, seed.index, 0);
    let sd = grid.dt().sqrt();
    let dw: Vec<f64> = (0..grid.steps).map(|_| sd * normal(&mut rng)).collect();
    BrownianPath::from_increments(*grid, &dw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolModel {
    Constant,
    ExpOu,
}

/// Market coefficients for one risky asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma0: f64,
    pub kappa: f64,
    pub varsigma: f64,
    pub vol_model: VolModel,
}

impl MarketParams {
    pub fn constant(r: f64, mu: f64, sigma: f64) -> Self {
        MarketParams { r, mu, sigma0: sigma, kappa: 0.0, varsigma: 0.0, vol_model: VolModel::Constant }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !(self.sigma0 > 0.0) || !(self.kappa >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidInput(format!("invalid market parameters {self:?}")));
        }
        Ok(())
    }

    /// Market price of risk at volatility `sigma`.
    pub fn theta(&self, sigma: f64) -> f64 {
        (self.mu - self.r) / sigma
    }
}

/// `sigma_t = exp(log(sigma0) e^{-kappa t} + varsigma int e^{-kappa(t-s)} dW_s)`.
///
/// The OU exponent is advanced with its exact decay and the conditional mean
/// of the stochastic convolution given the grid increment. The conditional
/// residual has variance of order `kappa^2 dt^3` and is not sampled, so the
/// volatility stays a function of the Brownian path alone.
pub fn exp_ou_vol(path: &BrownianPath, params: &MarketParams) -> Result<Vec<f64>> {
    if params.vol_model != VolModel::ExpOu {
        return Err(Error::InvalidInput("exp_ou_vol needs the exp_ou volatility model".into()));
    }
    params.validate()?;
    let dt = path.grid.dt();
    let decay = (-params.kappa * dt).exp();
    let gain = if params.kappa > 0.0 { (1.0 - decay) / (params.kappa * dt) } else { 1.0 };
    let mut x = params.sigma0.ln();
    let mut out = Vec::with_capacity(path.w.len());
    out.push(params.sigma0);
    for l in 0..path.grid.steps {
        x = decay * x + params.varsigma * gain * path.dw(l);
        out.push(x.exp());
    }
    Ok(out)
}

/// Volatility path under either model.
pub fn vol_path(path: &BrownianPath, params: &MarketParams) -> Result<Vec<f64>> {
    match params.vol_model {
        VolModel::Constant => {
            params.validate()?;
            Ok(vec![params.sigma0; path.w.len()])
        }
        VolModel::ExpOu => exp_ou_vol(path, params),
    }
}

/// `log xi` by left-point sums: `d log xi = -(r + theta^2/2) dt - theta dW`.
pub fn log_state_price_density(path: &BrownianPath, sigma: &[f64], params: &MarketParams) -> Result<Vec<f64>> {
    if sigma.len() != path.w.len() {
        return Err(Error::DimensionMismatch(sigma.len(), path.w.len()));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidInput(format!("nonpositive volatility {s}")));
    }
    let dt = path.grid.dt();
    let mut x = 0.0;
    let mut out = Vec::with_capacity(path.w.len());
    out.push(0.0);
    for l in 0..path.grid.steps {
        let th = params.theta(sigma[l]);
        x += -(params.r + 0.5 * th * th) * dt - th * path.dw(l);
        out.push(x);
    }
    Ok(out)
}

/// State price density `xi_{t_l}` with `xi_0 = 1`.
pub fn state_price_density(path: &BrownianPath, params: &MarketParams) -> Result<Vec<f64>> {
    let sigma = vol_path(path, params)?;
    Ok(log_state_price_density(path, &sigma, params)?.into_iter().map(f64::exp).collect())
}

/// Joint density of `(W^max_t, W_t)`:
/// `sqrt(2/(pi t^3)) (2x1 - x2) exp(-(2x1 - x2)^2 / (2t))` on `x1 >= max(x2, 0)`.
pub fn joint_density_max_bm(x1: f64, x2: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("density needs t > 0, got {t}")));
    }
    if x1 < x2.max(0.0) {
        return Ok(0.0);
    }
    let u = 2.0 * x1 - x2;
    Ok((2.0 / (std::f64::consts::PI * t * t * t)).sqrt() * u * (-u * u / (2.0 * t)).exp())
}

/// Risky asset price. Exact for constant volatility, log-Euler along the
/// volatility path otherwise.
pub fn gbm_asset(path: &BrownianPath, params: &MarketParams, s0: f64) -> Result<Vec<f64>> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidInput(format!("s0 must be positive, got {s0}")));
    }
    match params.vol_model {
        VolModel::Constant => {
            params.validate()?;
            let s = params.sigma0;
            Ok((0..path.w.len())
                .map(|l| s0 * ((params.mu - 0.5 * s * s) * path.grid.t(l) + s * path.w[l]).exp())
                .collect())
        }
        VolModel::ExpOu => {
            let sigma = exp_ou_vol(path, params)?;
            let dt = path.grid.dt();
            let mut x = s0.ln();
            let mut out = vec![s0];
            for l in 0..path.grid.steps {
                x += (params.mu - 0.5 * sigma[l] * sigma[l]) * dt + sigma[l] * path.dw(l);
                out.push(x.exp());
            }
            Ok(out)
        }
    }
}

/// A Brownian path together with its volatility and log state price density.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Path index within its master seed; keys nested-estimator streams.
    pub id: u64,
    pub path: BrownianPath,
    pub sigma: Vec<f64>,
    pub ln_xi: Vec<f64>,
}

impl Scenario {
    pub fn new(path: BrownianPath, params: &MarketParams) -> Result<Self> {
        let sigma = vol_path(&path, params)?;
        let ln_xi = log_state_price_density(&path, &sigma, params)?;
        Ok(Scenario { id: 0, path, sigma, ln_xi })
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }

    pub fn xi(&self, l: usize) -> f64 {
        self.ln_xi[l].exp()
    }

    pub fn restrict(&self, steps: usize, params: &MarketParams) -> Result<Self> {
        Ok(Scenario::new(self.path.restrict(steps)?, params)?.with_id(self.id))
    }
}

/// `n` scenarios with path indices `first, first + 1, ...`, built in parallel.
/// Output order (and every value) is independent of the thread count.
pub fn simulate(grid: &TimeGrid, params: &MarketParams, master: u64, first: u64, n: usize) -> Result<Vec<Scenario>> {
    params.validate()?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| Ok(Scenario::new(sample_path(grid, Seed::new(master, first + i))?, params)?.with_id(first + i)))
        .collect()
}
