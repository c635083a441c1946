//! Multi-utility families of the worked examples, bundle comparison under
//! the natural cone, reduction to a finite index set `J`, scalarization
//! weights, and the risk-linked function of Example 3.
//!
//! ```
//! use incompref::preferences::{utility_element, UtilityFamily, Util};
//!
//! let fam = UtilityFamily::case1(6.0);
//! let u = utility_element(&fam, &[1.0], 0.0, [2.0, 1.0]).unwrap();
//! assert!(matches!(u, Util::Finite(v) if (v - 0.19375).abs() < 1e-15));
//! ```

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::BoxSet;

/// Bounded nondecreasing map `i -> scale * min(i, cap)` (or a constant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamFn {
    Const(f64),
    ScaledIdMin { scale: f64, cap: f64 },
}

impl ParamFn {
    /// `id ∧ cap`.
    pub fn id_min(cap: f64) -> Self {
        ParamFn::ScaledIdMin { scale: 1.0, cap }
    }

    pub fn eval(&self, i: f64) -> f64 {
        match *self {
            ParamFn::Const(c) => c,
            ParamFn::ScaledIdMin { scale, cap } => scale * i.min(cap),
        }
    }

    /// Right-continuous derivative, except that the kink itself takes the
    /// left slope.
    pub fn derivative(&self, i: f64) -> f64 {
        match *self {
            ParamFn::Const(_) => 0.0,
            ParamFn::ScaledIdMin { scale, cap } => {
                if i <= cap {
                    scale
                } else {
                    0.0
                }
            }
        }
    }

    /// Points where the map fails to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            ParamFn::Const(_) => vec![],
            ParamFn::ScaledIdMin { cap, .. } => vec![cap],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// Example 1 (I): each element values one good.
    Case1Independent,
    /// Example 1 (II): imprecise attention `i in [0, chi]` on the first good.
    Case2Attention,
    /// Example 1 (III): imprecise interaction `i in [k1, k2]`, `p > 1`.
    Case3Substitution,
    /// Example 2: attention `chi_i`, `i in [0, lambda W^max + 1]`.
    Ex2Socialization,
    /// Example 3: attention `chi_{i1}` and risk aversion `p_{i2}`.
    Ex3Hybrid,
}

/// A configured multi-utility family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityFamily {
    pub kind: FamilyKind,
    pub p: f64,
    pub chi: f64,
    pub kappa_range: (f64, f64),
    pub beta: f64,
    pub lambda: f64,
    pub p_circ: f64,
    pub chi_fn: ParamFn,
    pub p_fn: ParamFn,
}

impl UtilityFamily {
    fn base(kind: FamilyKind, p: f64) -> Self {
        UtilityFamily {
            kind,
            p,
            chi: 1.0,
            kappa_range: (1.0, 1.0),
            beta: 0.0,
            lambda: 0.0,
            p_circ: 2.0,
            chi_fn: ParamFn::Const(1.0),
            p_fn: ParamFn::Const(p),
        }
    }

    pub fn case1(p: f64) -> Self {
        Self::base(FamilyKind::Case1Independent, p)
    }

    pub fn case2(p: f64, chi: f64) -> Self {
        UtilityFamily { chi, ..Self::base(FamilyKind::Case2Attention, p) }
    }

    pub fn case3(p: f64, k1: f64, k2: f64) -> Self {
        UtilityFamily { kappa_range: (k1, k2), ..Self::base(FamilyKind::Case3Substitution, p) }
    }

    pub fn ex2(p: f64, beta: f64, lambda: f64, chi_fn: ParamFn) -> Self {
        UtilityFamily { beta, lambda, chi_fn, ..Self::base(FamilyKind::Ex2Socialization, p) }
    }

    pub fn ex3(beta: f64, lambda: f64, p_circ: f64, chi_fn: ParamFn, p_fn: ParamFn) -> Self {
        UtilityFamily { beta, lambda, p_circ, chi_fn, p_fn, ..Self::base(FamilyKind::Ex3Hybrid, 2.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("{m} ({self:?})")));
        if self.kind != FamilyKind::Ex3Hybrid && (!(self.p > 0.0) || self.p == 1.0) {
            return bad("risk aversion p must be positive and different from 1");
        }
        match self.kind {
            FamilyKind::Case2Attention if !(self.chi > 0.0) => bad("chi must be positive"),
            FamilyKind::Case3Substitution
                if !(self.p > 1.0) || !(0.0 < self.kappa_range.0 && self.kappa_range.0 <= self.kappa_range.1) =>
            {
                bad("case III needs p > 1 and 0 < k1 <= k2")
            }
            FamilyKind::Ex3Hybrid if !(self.p_circ > 0.0) || self.p_circ == 1.0 => {
                bad("bequest risk aversion must be positive and different from 1")
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the index space.
    pub fn index_dim(&self) -> usize {
        if self.kind == FamilyKind::Ex3Hybrid {
            2
        } else {
            1
        }
    }

    /// Global range `R`; elements outside it vanish.
    pub fn global_range(&self) -> BoxSet {
        let b = |lo: Vec<f64>, hi: Vec<f64>| BoxSet::new(lo, hi).expect("valid range");
        match self.kind {
            FamilyKind::Case1Independent => b(vec![1.0], vec![2.0]),
            FamilyKind::Case2Attention => b(vec![0.0], vec![self.chi]),
            FamilyKind::Case3Substitution => b(vec![self.kappa_range.0], vec![self.kappa_range.1]),
            FamilyKind::Ex2Socialization => b(vec![0.0], vec![f64::INFINITY]),
            FamilyKind::Ex3Hybrid => b(vec![0.0, 1.0], vec![f64::INFINITY, f64::INFINITY]),
        }
    }
}

/// Utility value with a tagged `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Util {
    Finite(f64),
    NegInf,
}

impl Util {
    pub fn value(&self) -> f64 {
        match self {
            Util::Finite(v) => *v,
            Util::NegInf => f64::NEG_INFINITY,
        }
    }
}

impl PartialOrd for Util {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Util::NegInf, Util::NegInf) => Some(Ordering::Equal),
            (Util::NegInf, _) => Some(Ordering::Less),
            (_, Util::NegInf) => Some(Ordering::Greater),
            (Util::Finite(a), Util::Finite(b)) => a.partial_cmp(b),
        }
    }
}

// coef * (c^{1-p} - 1) / (1 - p), with 0 * anything = 0.
fn power_term(coef: f64, c: f64, p: f64) -> Util {
    if coef == 0.0 {
        return Util::Finite(0.0);
    }
    if c == 0.0 && p > 1.0 {
        return Util::NegInf;
    }
    Util::Finite(coef * (c.powf(1.0 - p) - 1.0) / (1.0 - p))
}

fn add(a: Util, b: Util) -> Util {
    match (a, b) {
        (Util::Finite(x), Util::Finite(y)) => Util::Finite(x + y),
        _ => Util::NegInf,
    }
}

fn check_bundle(c: [f64; 2]) -> Result<()> {
    if c.iter().any(|x| !(*x >= 0.0) || x.is_infinite()) {
        return Err(Error::InvalidInput(format!("consumption must be finite and nonnegative, got {c:?}")));
    }
    Ok(())
}

/// `u_i(t, c)` for an index `i` in the family's global range, `0` outside.
///
/// For Examples 2 and 3 the caller is responsible for restricting `i` to the
/// current index set; see [`utility_on`].
pub fn utility_element(fam: &UtilityFamily, i: &[f64], t: f64, c: [f64; 2]) -> Result<Util> {
    check_bundle(c)?;
    if i.len() != fam.index_dim() {
        return Err(Error::DimensionMismatch(i.len(), fam.index_dim()));
    }
    if !fam.global_range().contains_point(i) {
        return Ok(Util::Finite(0.0));
    }
    let p = fam.p;
    let u = match fam.kind {
        FamilyKind::Case1Independent => {
            if i[0] == 1.0 {
                power_term(1.0, c[0], p)
            } else if i[0] == 2.0 {
                power_term(1.0, c[1], p)
            } else {
                Util::NegInf
            }
        }
        FamilyKind::Case2Attention => add(power_term(i[0], c[0], p), power_term(1.0, c[1], p)),
        FamilyKind::Case3Substitution => {
            if c[0] == 0.0 || c[1] == 0.0 {
                Util::NegInf
            } else {
                let a = (c[0].powf(1.0 - p) + c[1].powf(1.0 - p)) / (1.0 - p);
                let b = i[0] * (c[0] * c[1]).powf(1.0 - p) / ((1.0 - p) * (1.0 - p));
                Util::Finite(a - b)
            }
        }
        FamilyKind::Ex2Socialization => {
            let disc = (-fam.beta * t).exp();
            match add(power_term(fam.chi_fn.eval(i[0]), c[0], p), power_term(1.0, c[1], p)) {
                Util::Finite(v) => Util::Finite(disc * v),
                Util::NegInf => Util::NegInf,
            }
        }
        FamilyKind::Ex3Hybrid => {
            let q = fam.p_fn.eval(i[1]);
            let disc = (-fam.beta * t).exp();
            match add(power_term(fam.chi_fn.eval(i[0]), c[0], q), power_term(1.0, c[1], q)) {
                Util::Finite(v) => Util::Finite(disc * v),
                Util::NegInf => Util::NegInf,
            }
        }
    };
    Ok(u)
}

/// `u_i(t, c)` with elements outside the current index set switched off.
pub fn utility_on(fam: &UtilityFamily, index_set: &BoxSet, i: &[f64], t: f64, c: [f64; 2]) -> Result<Util> {
    if !index_set.contains_point(i) {
        check_bundle(c)?;
        return Ok(Util::Finite(0.0));
    }
    utility_element(fam, i, t, c)
}

/// Analytic `d u_i / d c_j` (`j` is 0 or 1).
pub fn marginal_utility(fam: &UtilityFamily, i: &[f64], t: f64, c: [f64; 2], j: usize) -> Result<f64> {
    if j > 1 {
        return Err(Error::InvalidInput(format!("good index {j} out of range")));
    }
    if !(c[j] > 0.0) {
        return Err(Error::InvalidInput(format!("marginal utility needs c_{j} > 0, got {}", c[j])));
    }
    if i.len() != fam.index_dim() {
        return Err(Error::DimensionMismatch(i.len(), fam.index_dim()));
    }
    if !fam.global_range().contains_point(i) {
        return Ok(0.0);
    }
    let p = fam.p;
    let v = match fam.kind {
        FamilyKind::Case1Independent => {
            if (i[0] == 1.0 && j == 0) || (i[0] == 2.0 && j == 1) {
                c[j].powf(-p)
            } else {
                0.0
            }
        }
        FamilyKind::Case2Attention => {
            if j == 0 {
                i[0] * c[0].powf(-p)
            } else {
                c[1].powf(-p)
            }
        }
        FamilyKind::Case3Substitution => {
            let other = c[1 - j];
            c[j].powf(-p) * (1.0 - i[0] * other.powf(1.0 - p) / (1.0 - p))
        }
        FamilyKind::Ex2Socialization => {
            let a = if j == 0 { fam.chi_fn.eval(i[0]) } else { 1.0 };
            a * c[j].powf(-p) * (-fam.beta * t).exp()
        }
        FamilyKind::Ex3Hybrid => {
            let q = fam.p_fn.eval(i[1]);
            let a = if j == 0 { fam.chi_fn.eval(i[0]) } else { 1.0 };
            a * c[j].powf(-q) * (-fam.beta * t).exp()
        }
    };
    Ok(v)
}

/// Reduced index set `J` when the scaling condition holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedIndex {
    /// `J` does not move with time.
    Fixed(Vec<f64>),
    /// `J` is the pair of endpoints of the current (interval) index set.
    Endpoints,
}

impl ReducedIndex {
    pub fn resolve(&self, index_set: &BoxSet) -> Vec<f64> {
        match self {
            ReducedIndex::Fixed(j) => j.clone(),
            ReducedIndex::Endpoints => vec![index_set.lo()[0], index_set.hi()[0]],
        }
    }
}

/// `J = {1,2}`, `{0,chi}`, `{k1,k2}` or `{0, lambda W^max + 1}`; `None` for
/// Example 3 where risk aversion is a shape parameter.
pub fn reduce_to_j(fam: &UtilityFamily) -> Option<ReducedIndex> {
    match fam.kind {
        FamilyKind::Case1Independent => Some(ReducedIndex::Fixed(vec![1.0, 2.0])),
        FamilyKind::Case2Attention => Some(ReducedIndex::Fixed(vec![0.0, fam.chi])),
        FamilyKind::Case3Substitution => Some(ReducedIndex::Fixed(vec![fam.kappa_range.0, fam.kappa_range.1])),
        FamilyKind::Ex2Socialization => Some(ReducedIndex::Endpoints),
        FamilyKind::Ex3Hybrid => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonResult {
    Dominates,
    Dominated,
    Equivalent,
    Incomparable,
}

/// Points per axis for index sets that do not reduce to `J`.
pub const COMPARE_GRID: usize = 9;

/// Compare `c` and `c'` under every element indexed by `index_set`.
///
/// Families that reduce to `J` are compared on `J` exactly. Otherwise the
/// index set is sampled on a `9^d` grid that includes its corners.
pub fn compare_bundles(fam: &UtilityFamily, index_set: &BoxSet, t: f64, c: [f64; 2], c2: [f64; 2]) -> Result<ComparisonResult> {
    let points: Vec<Vec<f64>> = match reduce_to_j(fam) {
        Some(j) => j.resolve(index_set).into_iter().map(|x| vec![x]).collect(),
        None => {
            if !index_set.is_bounded() {
                return Err(Error::InvalidInput("cannot sample an unbounded index set".into()));
            }
            let axes: Vec<Vec<f64>> = (0..index_set.dim())
                .map(|k| {
                    let (lo, hi) = (index_set.lo()[k], index_set.hi()[k]);
                    (0..COMPARE_GRID)
                        .map(|m| lo + (hi - lo) * m as f64 / (COMPARE_GRID - 1) as f64)
                        .collect()
                })
                .collect();
            let mut pts = vec![vec![]];
            for axis in &axes {
                pts = pts
                    .iter()
                    .flat_map(|p: &Vec<f64>| {
                        axis.iter().map(move |x| {
                            let mut q = p.clone();
                            q.push(*x);
                            q
                        })
                    })
                    .collect();
            }
            pts
        }
    };
    let (mut ge, mut le, mut strict_gt, mut strict_lt) = (true, true, false, false);
    for i in &points {
        let a = utility_on(fam, index_set, i, t, c)?;
        let b = utility_on(fam, index_set, i, t, c2)?;
        match a.partial_cmp(&b) {
            Some(Ordering::Greater) => {
                le = false;
                strict_gt = true;
            }
            Some(Ordering::Less) => {
                ge = false;
                strict_lt = true;
            }
            Some(Ordering::Equal) => {}
            None => return Err(Error::Numerical("NaN utility".into())),
        }
    }
    Ok(match (ge, le) {
        (true, true) => ComparisonResult::Equivalent,
        (true, false) if strict_gt => ComparisonResult::Dominates,
        (false, true) if strict_lt => ComparisonResult::Dominated,
        _ => ComparisonResult::Incomparable,
    })
}

/// Piecewise-linear density on a uniform grid over `[0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub max: f64,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(max: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(max > 0.0) {
            return Err(Error::InvalidInput("density grid needs >= 2 nodes and a positive span".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || v.is_infinite()) {
            return Err(Error::InvalidInput("density values must be finite and nonnegative".into()));
        }
        Ok(GridDensity { max, values })
    }

    pub fn step(&self) -> f64 {
        self.max / (self.values.len() - 1) as f64
    }

    /// Linear interpolation, zero outside `[0, max]`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(0.0..=self.max).contains(&x) {
            return 0.0;
        }
        let h = self.step();
        let k = ((x / h).floor() as usize).min(self.values.len() - 2);
        let s = (x - k as f64 * h) / h;
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }

    /// Trapezoid total mass (exact for the interpolant).
    pub fn mass(&self) -> f64 {
        let h = self.step();
        let n = self.values.len();
        h * (self.values.iter().sum::<f64>() - 0.5 * (self.values[0] + self.values[n - 1]))
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::InvalidInput("density has zero mass".into()));
        }
        GridDensity::new(self.max, self.values.iter().map(|v| v / m).collect())
    }
}

/// Second coordinate of an Example 3 weight.
#[derive(Debug, Clone, PartialEq)]
pub enum SecondWeight {
    /// `delta_{loc}` with unit mass.
    Atom(f64),
    /// Piecewise-linear density on `[lo, hi]` with uniform nodes.
    Density { lo: f64, hi: f64, values: Vec<f64> },
}

/// Scalarization weight.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Nonnegative vector on `J`, in the order returned by [`reduce_to_j`].
    Finite(Vec<f64>),
    /// Example 3: density on the first index times a measure on the second.
    GridAtom { w1: GridDensity, w2: SecondWeight },
}

impl Weight {
    pub fn norm1(&self) -> f64 {
        match self {
            Weight::Finite(w) => w.iter().sum(),
            Weight::GridAtom { w1, w2 } => {
                let m2 = match w2 {
                    SecondWeight::Atom(_) => 1.0,
                    SecondWeight::Density { lo, hi, values } => {
                        GridDensity::new(hi - lo, values.clone()).map(|d| d.mass()).unwrap_or(0.0)
                    }
                };
                w1.mass() * m2
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Weight::Finite(w) => {
                if w.iter().any(|x| !(*x >= 0.0) || x.is_infinite()) {
                    return Err(Error::InvalidInput(format!("weights must be nonnegative, got {w:?}")));
                }
            }
            Weight::GridAtom { w2: SecondWeight::Density { lo, hi, values }, .. } => {
                GridDensity::new(hi - lo, values.clone())?;
            }
            Weight::GridAtom { .. } => {}
        }
        if !(self.norm1() > 0.0) {
            return Err(Error::InvalidInput("weight has zero norm".into()));
        }
        Ok(())
    }

    /// Copy with `||w||_1 = 1` (only the first factor is rescaled for
    /// Example 3 weights; atoms already carry unit mass).
    pub fn normalized(&self) -> Result<Weight> {
        self.validate()?;
        Ok(match self {
            Weight::Finite(w) => {
                let s: f64 = w.iter().sum();
                Weight::Finite(w.iter().map(|x| x / s).collect())
            }
            Weight::GridAtom { w1, w2 } => {
                let m2 = self.norm1() / w1.mass();
                let w1 = w1.normalized()?;
                let w1 = GridDensity::new(w1.max, w1.values.iter().map(|v| v / m2).collect())?;
                Weight::GridAtom { w1, w2: w2.clone() }
            }
        })
    }

    /// `(w_1, w_2) = ((n-1-k)/(n-1), k/(n-1))`, `k = 0..n-1`.
    pub fn simplex_grid(n: usize) -> Vec<Weight> {
        if n == 1 {
            return vec![Weight::Finite(vec![0.5, 0.5])];
        }
        (0..n)
            .map(|k| {
                let b = k as f64 / (n - 1) as f64;
                Weight::Finite(vec![1.0 - b, b])
            })
            .collect()
    }

    /// Member `a` of the Example 3 sweep family:
    /// `w1 = (1 - a) 1_[0,1] + (a/2) 1_[0,2]`, sampled on `nodes` points over
    /// `[0, 2]` (the node at 1 takes the left value) and renormalized.
    pub fn ex3_member(a: f64, nodes: usize, atom: f64) -> Result<Weight> {
        if nodes < 3 || (nodes - 1) % 2 != 0 {
            return Err(Error::InvalidInput("the w1 grid needs an odd node count >= 3".into()));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidInput(format!("sweep parameter {a} outside [0, 1]")));
        }
        let h = 2.0 / (nodes - 1) as f64;
        let values = (0..nodes)
            .map(|k| {
                let x = k as f64 * h;
                let first = if x <= 1.0 + 1e-12 { 1.0 - a } else { 0.0 };
                first + 0.5 * a
            })
            .collect();
        let w1 = GridDensity::new(2.0, values)?.normalized()?;
        Ok(Weight::GridAtom { w1, w2: SecondWeight::Atom(atom) })
    }

    /// `n` members of the Example 3 family, `a = k/(n-1)`.
    pub fn ex3_grid(n: usize, nodes: usize, atom: f64) -> Result<Vec<Weight>> {
        (0..n)
            .map(|k| Weight::ex3_member(if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 }, nodes, atom))
            .collect()
    }
}

/// Number of Simpson panels per unit length when integrating a second-coordinate density.
const THETA_PANELS: usize = 400;

/// `vartheta(x) = int_{sigma+1}^{sigma+2} w2(i2) x^{-p(i2)} d i2`.
pub fn risk_linked_theta(p_fn: &ParamFn, w2: &SecondWeight, sigma: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("vartheta needs x > 0, got {x}")));
    }
    let (a, b) = (sigma + 1.0, sigma + 2.0);
    match w2 {
        SecondWeight::Atom(loc) => {
            if (a..=b).contains(loc) {
                Ok(x.powf(-p_fn.eval(*loc)))
            } else {
                Ok(0.0)
            }
        }
        SecondWeight::Density { lo, hi, values } => {
            let dens = GridDensity::new(hi - lo, values.clone())?;
            let f = |i2: f64| dens.eval(i2 - lo) * x.powf(-p_fn.eval(i2));
            let (s, e) = (a.max(*lo), b.min(*hi));
            if s >= e {
                return Ok(0.0);
            }
            // Split at grid nodes and kinks so Simpson sees smooth pieces.
            let mut cuts = vec![s, e];
            let h = dens.step();
            let mut k = ((s - lo) / h).ceil() as i64;
            while lo + k as f64 * h < e {
                cuts.push(lo + k as f64 * h);
                k += 1;
            }
            cuts.extend(p_fn.kinks().into_iter().filter(|z| *z > s && *z < e));
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            cuts.dedup();
            let mut total = 0.0;
            for w in cuts.windows(2) {
                let n = ((w[1] - w[0]) * THETA_PANELS as f64).ceil().max(2.0) as usize * 2;
                total += simpson(&f, w[0], w[1], n);
            }
            Ok(total)
        }
    }
}

pub(crate) fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Inverse of [`risk_linked_theta`] by bisection on `log x`.
pub fn risk_linked_theta_inverse(p_fn: &ParamFn, w2: &SecondWeight, sigma: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::InvalidInput(format!("vartheta inverse needs y > 0, got {y}")));
    }
    let g = |lx: f64| risk_linked_theta(p_fn, w2, sigma, lx.exp()).map(|v| v - y);
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut n = 0;
    while g(lo)? < 0.0 {
        lo *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::Bracket("vartheta inverse (lower)".into()));
        }
    }
    while g(hi)? > 0.0 {
        hi *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::Bracket("vartheta inverse (upper)".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
