//! Axis-aligned boxes in `R^d` and the set operations the index-set process
//! needs: Minkowski sums, intersections, hulls of nested unions, projection
//! and Hausdorff distance.
//!
//! Every index set in the worked examples is a product of intervals, so box
//! arithmetic is exact here.
//!
//! ```
//! use incompref::geometry::{hausdorff, minkowski_sum, BoxSet};
//!
//! let a = BoxSet::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
//! let b = BoxSet::new(vec![1.0, 0.0], vec![1.0, 3.0]).unwrap();
//! let s = minkowski_sum(&a, &b).unwrap();
//! assert_eq!(s.lo(), &[1.0, 1.0]);
//! assert_eq!(s.hi(), &[2.0, 5.0]);
//! assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
//! ```

use crate::error::{Error, Result};

/// Closed axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
///
/// Bounds may be infinite (the global range of Example 3 is
/// `R_+ x [1, inf)`), but a box is never empty: `lo[k] <= hi[k]` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Result of an intersection. Emptiness is a value, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum MaybeBox {
    Box(BoxSet),
    Empty,
}

impl MaybeBox {
    pub fn is_empty(&self) -> bool {
        matches!(self, MaybeBox::Empty)
    }

    pub fn into_option(self) -> Option<BoxSet> {
        match self {
            MaybeBox::Box(b) => Some(b),
            MaybeBox::Empty => None,
        }
    }
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(lo.len(), hi.len()));
        }
        if lo.is_empty() {
            return Err(Error::InvalidInput("box must have dimension >= 1".into()));
        }
        for (k, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidInput(format!(
                    "box side {k} is not an interval: [{l}, {h}]"
                )));
            }
        }
        Ok(BoxSet { lo, hi })
    }

    /// The singleton `{p}`.
    pub fn point(p: &[f64]) -> Self {
        BoxSet { lo: p.to_vec(), hi: p.to_vec() }
    }

    /// The singleton `{0}` in `R^d`.
    pub fn zero(d: usize) -> Self {
        BoxSet { lo: vec![0.0; d], hi: vec![0.0; d] }
    }

    /// One-dimensional interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        BoxSet::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// True when every side is shorter than `tol`.
    pub fn is_singleton(&self, tol: f64) -> bool {
        self.widths().iter().all(|w| *w < tol)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|x| x.is_finite())
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().enumerate().all(|(k, x)| self.lo[k] <= *x && *x <= self.hi[k])
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &BoxSet) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|k| other.lo[k] <= self.lo[k] && self.hi[k] <= other.hi[k])
    }

    /// Corner points; `2^d` of them (duplicates kept for degenerate sides).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] })
                    .collect()
            })
            .collect()
    }
}

fn check_dims(a: &BoxSet, b: &BoxSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// `a + b = {x + y : x in a, y in b}`.
pub fn minkowski_sum(a: &BoxSet, b: &BoxSet) -> Result<BoxSet> {
    check_dims(a, b)?;
    let lo = a.lo.iter().zip(&b.lo).map(|(x, y)| x + y).collect();
    let hi = a.hi.iter().zip(&b.hi).map(|(x, y)| x + y).collect();
    Ok(BoxSet { lo, hi })
}

/// Minkowski sum with an empty operand is an error: the caller has lost the
/// nonemptiness guarantee somewhere upstream.
pub fn minkowski_sum_maybe(a: &MaybeBox, b: &MaybeBox) -> Result<BoxSet> {
    match (a, b) {
        (MaybeBox::Box(a), MaybeBox::Box(b)) => minkowski_sum(a, b),
        _ => Err(Error::EmptySet("Minkowski sum operand".into())),
    }
}

pub fn intersect(a: &BoxSet, b: &BoxSet) -> Result<MaybeBox> {
    check_dims(a, b)?;
    let mut lo = Vec::with_capacity(a.dim());
    let mut hi = Vec::with_capacity(a.dim());
    for k in 0..a.dim() {
        let l = a.lo[k].max(b.lo[k]);
        let h = a.hi[k].min(b.hi[k]);
        if l > h {
            return Ok(MaybeBox::Empty);
        }
        lo.push(l);
        hi.push(h);
    }
    Ok(MaybeBox::Box(BoxSet { lo, hi }))
}

/// Componentwise `[min lo, max hi]`.
///
/// This is the closed convex hull of the union only when the family is
/// nested, which is the case for every index-set union in the examples. With
/// `strict` set, nestedness is asserted in debug builds.
pub fn bounding_hull(boxes: &[BoxSet], strict: bool) -> Result<BoxSet> {
    let first = boxes
        .first()
        .ok_or_else(|| Error::InvalidInput("bounding_hull of an empty list".into()))?;
    let mut lo = first.lo.clone();
    let mut hi = first.hi.clone();
    for b in &boxes[1..] {
        check_dims(first, b)?;
        for k in 0..lo.len() {
            lo[k] = lo[k].min(b.lo[k]);
            hi[k] = hi[k].max(b.hi[k]);
        }
    }
    if strict {
        debug_assert!(
            boxes.windows(2).all(|w| w[0].is_subset_of(&w[1]) || w[1].is_subset_of(&w[0])),
            "bounding_hull called on a non-nested family"
        );
    }
    Ok(BoxSet { lo, hi })
}

/// Euclidean projection of `p` onto `b` (componentwise clamp).
pub fn project(p: &[f64], b: &BoxSet) -> Result<Vec<f64>> {
    if p.len() != b.dim() {
        return Err(Error::DimensionMismatch(p.len(), b.dim()));
    }
    Ok(p.iter().enumerate().map(|(k, x)| x.clamp(b.lo[k], b.hi[k])).collect())
}

fn dist_to(p: &[f64], b: &BoxSet) -> f64 {
    let mut s = 0.0;
    for (k, x) in p.iter().enumerate() {
        let c = x.clamp(b.lo[k], b.hi[k]);
        s += (x - c) * (x - c);
    }
    s.sqrt()
}

/// Hausdorff distance between two boxes.
///
/// The distance to a convex set is convex, so its supremum over a box is
/// attained at a corner; checking the `2^d` corners of each side is exact.
/// Boxes with infinite sides fall back to the per-axis excess, where equal
/// infinite bounds contribute nothing.
pub fn hausdorff(a: &BoxSet, b: &BoxSet) -> Result<f64> {
    check_dims(a, b)?;
    if !a.is_bounded() || !b.is_bounded() {
        return Ok(excess(a, b).max(excess(b, a)));
    }
    let one = a.vertices().iter().map(|v| dist_to(v, b)).fold(0.0, f64::max);
    let two = b.vertices().iter().map(|v| dist_to(v, a)).fold(0.0, f64::max);
    Ok(one.max(two))
}

// sup over x in a of dist(x, b); separable across axes for boxes.
fn excess(a: &BoxSet, b: &BoxSet) -> f64 {
    let gap = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).max(0.0) };
    let mut s = 0.0;
    for k in 0..a.dim() {
        let e = gap(b.lo[k], a.lo[k]).max(gap(a.hi[k], b.hi[k]));
        s += e * e;
    }
    s.sqrt()
}
