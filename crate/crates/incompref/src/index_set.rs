//! The set-valued index process `I_t`: three set-valued Itô components,
//! their Euler approximation, the assembly rule with the global range `R`,
//! closed forms for Examples 2 and 3, and Hausdorff convergence studies.
//!
//! ```
//! use incompref::index_set::{assemble, example2_config};
//! use incompref::stochastic::{sample_path, Seed, TimeGrid};
//!
//! let grid = TimeGrid::new(1.0, 64).unwrap();
//! let path = sample_path(&grid, Seed::new(1, 0)).unwrap();
//! let sets = assemble(&example2_config(0.2), &path).unwrap();
//! let last = &sets.sets[64];
//! assert_eq!(last.lo()[0], 0.0);
//! assert!((last.hi()[0] - (1.0 + 0.2 * path.wmax[64])).abs() < 1e-12);
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{bounding_hull, hausdorff, intersect, minkowski_sum, BoxSet, MaybeBox};
use crate::stochastic::{exp_ou_vol, sample_path, BrownianPath, MarketParams, Seed, TimeGrid};

/// Sides shorter than this count as collapsed when detecting a singleton.
pub const SINGLETON_TOL: f64 = 1e-12;

/// A single-valued selector `(t, x) -> R^d`, where `x` is the centre of the
/// component's current set (its value when the component is a singleton).
pub type Selector = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

pub fn constant_selector(v: Vec<f64>) -> Selector {
    Arc::new(move |_, _| v.clone())
}

/// One component `I_q = I_{q,0} + int f_q dt + int G_q dW`.
#[derive(Clone)]
pub struct ComponentConfig {
    pub q: usize,
    pub i0: BoxSet,
    pub drift: Vec<Selector>,
    pub diffusion: Vec<Selector>,
}

impl ComponentConfig {
    /// Component driven by `{0}` in both integrals.
    pub fn frozen(q: usize, i0: BoxSet) -> Self {
        let d = i0.dim();
        ComponentConfig {
            q,
            i0,
            drift: vec![constant_selector(vec![0.0; d])],
            diffusion: vec![constant_selector(vec![0.0; d])],
        }
    }
}

#[derive(Clone)]
pub struct IndexSetConfig {
    pub d: usize,
    pub range: BoxSet,
    pub components: [ComponentConfig; 3],
}

impl IndexSetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.range.dim() != self.d {
            return Err(Error::DimensionMismatch(self.range.dim(), self.d));
        }
        for c in &self.components {
            if c.i0.dim() != self.d {
                return Err(Error::DimensionMismatch(c.i0.dim(), self.d));
            }
            if c.drift.is_empty() || c.diffusion.is_empty() {
                return Err(Error::InvalidInput(format!("component {} has an empty selector list", c.q)));
            }
        }
        Ok(())
    }
}

/// Time-indexed boxes realizing `I`, with the discrete stopping index of the
/// second component's running intersection.
#[derive(Debug, Clone)]
pub struct IndexSetPath {
    pub grid: TimeGrid,
    pub sets: Vec<BoxSet>,
    pub stop_index: Option<usize>,
}

fn centre(b: &BoxSet) -> Vec<f64> {
    b.lo()
        .iter()
        .zip(b.hi())
        .map(|(l, h)| if l.is_finite() && h.is_finite() { 0.5 * (l + h) } else { *l })
        .collect()
}

fn hull_of_points(points: &[Vec<f64>]) -> Result<BoxSet> {
    let d = points[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch(p.len(), d));
        }
        for k in 0..d {
            if !p[k].is_finite() {
                return Err(Error::Numerical(format!("selector returned {}", p[k])));
            }
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    BoxSet::new(lo, hi)
}

/// Euler scheme for one component on the path's grid.
///
/// At step `l` the set is `I_{q,0}` plus the left-point Riemann sum of the
/// drift boxes plus the bounding box of the partial sums `sum g_k dW` over
/// the diffusion selectors.
pub fn euler_component(cfg: &ComponentConfig, path: &BrownianPath) -> Result<Vec<BoxSet>> {
    let grid = path.grid;
    let d = cfg.i0.dim();
    let dt = grid.dt();
    let mut drift_sum = BoxSet::zero(d);
    let mut diff_sums = vec![vec![0.0; d]; cfg.diffusion.len()];
    let mut out = Vec::with_capacity(grid.steps + 1);
    let mut current = cfg.i0.clone();
    out.push(current.clone());
    for l in 0..grid.steps {
        let t = grid.t(l);
        let x = centre(&current);
        let fs: Vec<Vec<f64>> = cfg.drift.iter().map(|f| f(t, &x)).collect();
        let fbox = hull_of_points(&fs)?;
        let scaled = BoxSet::new(
            fbox.lo().iter().map(|v| v * dt).collect(),
            fbox.hi().iter().map(|v| v * dt).collect(),
        )?;
        drift_sum = minkowski_sum(&drift_sum, &scaled)?;
        let dw = path.dw(l);
        for (k, g) in cfg.diffusion.iter().enumerate() {
            let gv = g(t, &x);
            if gv.len() != d {
                return Err(Error::DimensionMismatch(gv.len(), d));
            }
            for j in 0..d {
                diff_sums[k][j] += gv[j] * dw;
            }
        }
        let dbox = hull_of_points(&diff_sums)?;
        current = minkowski_sum(&minkowski_sum(&cfg.i0, &drift_sum)?, &dbox)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// `I_t = R ∩ (I_1 + ∩_{l <= stop} I_2 + hull ∪ I_3)` at every grid time.
pub fn assemble(cfg: &IndexSetConfig, path: &BrownianPath) -> Result<IndexSetPath> {
    cfg.validate()?;
    let c1 = euler_component(&cfg.components[0], path)?;
    let c2 = euler_component(&cfg.components[1], path)?;
    let c3 = euler_component(&cfg.components[2], path)?;
    let n = path.grid.steps + 1;

    let mut stop_index = None;
    let mut running2 = c2[0].clone();
    let mut hull3 = c3[0].clone();
    let mut sets = Vec::with_capacity(n);
    for l in 0..n {
        if stop_index.is_none() {
            if l > 0 {
                running2 = match intersect(&running2, &c2[l])? {
                    MaybeBox::Box(b) => b,
                    MaybeBox::Empty => {
                        return Err(Error::EmptySet(format!("second component intersection at index {l}")))
                    }
                };
            }
            if running2.is_singleton(SINGLETON_TOL) {
                stop_index = Some(l);
            }
        }
        if l > 0 {
            hull3 = bounding_hull(&[hull3, c3[l].clone()], false)?;
        }
        let sum = minkowski_sum(&minkowski_sum(&c1[l], &running2)?, &hull3)?;
        match intersect(&cfg.range, &sum)? {
            MaybeBox::Box(b) => sets.push(b),
            MaybeBox::Empty => {
                return Err(Error::EmptySet(format!("index set outside the global range at index {l}")))
            }
        }
    }
    Ok(IndexSetPath { grid: path.grid, sets, stop_index })
}

/// Example 1: constant index set `I_{1,0}` (one of `[1,2]`, `[0,chi]`,
/// `[k1,k2]`).
pub fn example1_config(i0: BoxSet) -> IndexSetConfig {
    let d = i0.dim();
    IndexSetConfig {
        d,
        range: BoxSet::new(vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d]).expect("unbounded box"),
        components: [
            ComponentConfig::frozen(1, i0),
            ComponentConfig::frozen(2, BoxSet::zero(d)),
            ComponentConfig::frozen(3, BoxSet::zero(d)),
        ],
    }
}

/// Example 2: `R = R_+`, `I_{3,0} = [0,1]`, `G_3 = {0, lambda}`.
pub fn example2_config(lambda: f64) -> IndexSetConfig {
    let mut c3 = ComponentConfig::frozen(3, BoxSet::interval(0.0, 1.0).expect("interval"));
    c3.diffusion = vec![constant_selector(vec![0.0]), constant_selector(vec![lambda])];
    IndexSetConfig {
        d: 1,
        range: BoxSet::interval(0.0, f64::INFINITY).expect("interval"),
        components: [
            ComponentConfig::frozen(1, BoxSet::zero(1)),
            ComponentConfig::frozen(2, BoxSet::zero(1)),
            c3,
        ],
    }
}

/// Example 3: `R = R_+ x [1, inf)`, volatility-driven second coordinate and
/// running-maximum-driven first coordinate.
pub fn example3_config(params: &MarketParams, lambda: f64) -> IndexSetConfig {
    let (kappa, vs) = (params.kappa, params.varsigma);
    let mut c1 = ComponentConfig::frozen(1, BoxSet::point(&[0.0, params.sigma0]));
    c1.drift = vec![Arc::new(move |_, x: &[f64]| {
        let s = x[1];
        vec![0.0, (0.5 * vs * vs - kappa * s.max(f64::MIN_POSITIVE).ln()) * s]
    })];
    c1.diffusion = vec![Arc::new(move |_, x: &[f64]| vec![0.0, vs * x[1]])];
    let mut c3 = ComponentConfig::frozen(3, BoxSet::new(vec![0.0, 1.0], vec![1.0, 2.0]).expect("box"));
    c3.diffusion = vec![constant_selector(vec![0.0, 0.0]), constant_selector(vec![lambda, 0.0])];
    IndexSetConfig {
        d: 2,
        range: BoxSet::new(vec![0.0, 1.0], vec![f64::INFINITY, f64::INFINITY]).expect("box"),
        components: [c1, ComponentConfig::frozen(2, BoxSet::zero(2)), c3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexExample {
    Two,
    Three,
}

impl IndexExample {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            2 => Ok(IndexExample::Two),
            3 => Ok(IndexExample::Three),
            _ => Err(Error::InvalidInput(format!("no closed-form index set for example {id}"))),
        }
    }
}

/// Closed-form index sets `[0, lambda W^max + 1]` and
/// `[0, lambda W^max + 1] x [sigma + 1, sigma + 2]` on the path's grid.
pub fn exact_index_set(example: IndexExample, path: &BrownianPath, lambda: f64, params: &MarketParams) -> Result<IndexSetPath> {
    let sets = match example {
        IndexExample::Two => path
            .wmax
            .iter()
            .map(|m| BoxSet::interval(0.0, lambda * m + 1.0))
            .collect::<Result<Vec<_>>>()?,
        IndexExample::Three => {
            let sigma = exp_ou_vol(path, params)?;
            path.wmax
                .iter()
                .zip(&sigma)
                .map(|(m, s)| BoxSet::new(vec![0.0, s + 1.0], vec![lambda * m + 1.0, s + 2.0]))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(IndexSetPath { grid: path.grid, sets, stop_index: Some(0) })
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub mean_dh: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Monte Carlo mean of `d_H(I_t, Î^{(K)}_t)` for each `K`.
///
/// The reference set uses a master grid with `8 max K` steps; the Euler sets
/// run on the restriction of the same path to each coarse grid.
pub fn convergence_study(
    cfg: &IndexSetConfig,
    example: IndexExample,
    lambda: f64,
    params: &MarketParams,
    t: f64,
    k_list: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    let kmax = *k_list.iter().max().ok_or_else(|| Error::InvalidInput("empty K list".into()))?;
    let horizon = t;
    let k_ref = 8 * kmax;
    if let Some(k) = k_list.iter().find(|k| **k == 0 || k_ref % **k != 0) {
        return Err(Error::InvalidInput(format!("reference grid {k_ref} is not a multiple of K = {k}")));
    }
    let fine = TimeGrid::new(horizon, k_ref)?;
    let dists: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(&fine, Seed::new(seed, i))?;
            let exact = exact_index_set(example, &path, lambda, params)?;
            let reference = exact.sets.last().expect("nonempty");
            k_list
                .iter()
                .map(|k| {
                    let coarse = path.restrict(*k)?;
                    let approx = assemble(cfg, &coarse)?;
                    hausdorff(reference, approx.sets.last().expect("nonempty"))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(k_list
        .iter()
        .enumerate()
        .map(|(j, k)| {
            let xs: Vec<f64> = dists.iter().map(|row| row[j]).collect();
            let (mean, se) = mean_se(&xs);
            ConvergenceRow { steps: *k, mean_dh: mean, stderr: se, n_paths, seed }
        })
        .collect())
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Finitely many single-valued selector paths whose closure should recover
/// a set-valued path.
#[derive(Debug, Clone)]
pub struct CastaingFamily {
    pub selectors: Vec<Vec<Vec<f64>>>,
}

impl CastaingFamily {
    /// Selectors of one component: every corner of `I_{q,0}` moved by the
    /// drift selector and each diffusion selector along the Euler scheme.
    pub fn from_component(cfg: &ComponentConfig, path: &BrownianPath) -> Result<Self> {
        let grid = path.grid;
        let dt = grid.dt();
        let d = cfg.i0.dim();
        let mut selectors = Vec::new();
        for v in cfg.i0.vertices() {
            for f in &cfg.drift {
                for g in &cfg.diffusion {
                    let mut x = v.clone();
                    let mut traj = vec![x.clone()];
                    let mut drift = vec![0.0; d];
                    let mut diff = vec![0.0; d];
                    for l in 0..grid.steps {
                        let t = grid.t(l);
                        let state = centre(&BoxSet::point(&x));
                        let fv = f(t, &state);
                        let gv = g(t, &state);
                        for j in 0..d {
                            drift[j] += fv[j] * dt;
                            diff[j] += gv[j] * path.dw(l);
                            x[j] = v[j] + drift[j] + diff[j];
                        }
                        traj.push(x.clone());
                    }
                    selectors.push(traj);
                }
            }
        }
        Ok(CastaingFamily { selectors })
    }

    /// Largest Hausdorff gap between `sets[l]` and the bounding box of the
    /// selector values at `l`.
    pub fn closure_gap(&self, sets: &[BoxSet]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (l, set) in sets.iter().enumerate() {
            let pts: Vec<Vec<f64>> = self.selectors.iter().map(|s| s[l].clone()).collect();
            worst = worst.max(hausdorff(set, &hull_of_points(&pts)?)?);
        }
        Ok(worst)
    }
}
