//! Scalar Fenchel–Young check for the power bequest utility
//! `U(x) = d (x^{1-p} - 1)/(1-p)`, `d = e^{-beta T}`.

use crate::error::{Error, Result};

/// `U(x)`.
pub fn bequest_utility(p_circ: f64, discount: f64, x: f64) -> f64 {
    discount * (x.powf(1.0 - p_circ) - 1.0) / (1.0 - p_circ)
}

/// `(-U)^dagger(-y) = sup_x { U(x) - y x }` in closed form.
pub fn conjugate(p_circ: f64, discount: f64, y: f64) -> Result<f64> {
    check(p_circ, discount, y)?;
    let p = p_circ;
    Ok(discount.powf(1.0 / p) * y.powf(1.0 - 1.0 / p) * p / (1.0 - p) - discount / (1.0 - p))
}

/// Maximizer `x* = (U')^{-1}(y) = (d/y)^{1/p}`.
pub fn maximizer(p_circ: f64, discount: f64, y: f64) -> Result<f64> {
    check(p_circ, discount, y)?;
    Ok((discount / y).powf(1.0 / p_circ))
}

fn check(p_circ: f64, discount: f64, y: f64) -> Result<()> {
    if !(y > 0.0) {
        return Err(Error::InvalidInput(format!("conjugate needs y > 0, got {y}")));
    }
    if !(p_circ > 0.0) || p_circ == 1.0 || !(discount > 0.0) {
        return Err(Error::InvalidInput(format!("bad bequest parameters p = {p_circ}, d = {discount}")));
    }
    Ok(())
}

/// Returns `(gap, x*)` with `gap = U(x*) - y x* - (-U)^dagger(-y)`.
pub fn fenchel_check(p_circ: f64, discount: f64, y: f64) -> Result<(f64, f64)> {
    let x = maximizer(p_circ, discount, y)?;
    let gap = bequest_utility(p_circ, discount, x) - y * x - conjugate(p_circ, discount, y)?;
    Ok((gap, x))
}
