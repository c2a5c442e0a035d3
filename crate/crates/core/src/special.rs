//! Log-gamma, digamma and trigamma for positive real arguments.
//!
//! All three use the same scheme: shift the argument upward with the
//! functional recurrence until it reaches [`ASYMPTOTIC_THRESHOLD`], then sum
//! the Bernoulli-number asymptotic series. For `x >= 10` the truncated series
//! is accurate to well below one ulp.
//!
//! The plain functions return `NaN` for arguments that are non-positive or
//! NaN. The `try_*` variants report a [`Error::Domain`] instead.

use crate::error::{Error, Result};

/// Arguments at or above this value go straight to the asymptotic series.
pub const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// A finite, strictly positive real.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_finite() && x > 0.0 {
            Ok(Self(x))
        } else {
            Err(Error::Domain(format!(
                "expected a finite positive real, got {x}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

#[inline]
fn outside_domain(x: f64) -> bool {
    x.is_nan() || x <= 0.0
}

/// ln Γ(x) for x > 0.
pub fn lgamma(x: f64) -> f64 {
    if outside_domain(x) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x >= ASYMPTOTIC_THRESHOLD {
        return lgamma_stirling(x);
    }
    // Γ(x) = Γ(x + n) / (x (x+1) ... (x+n-1)); the product stays below 10!.
    let mut shifted = x;
    let mut prod = 1.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        prod *= shifted;
        shifted += 1.0;
    }
    lgamma_stirling(shifted) - prod.ln()
}

fn lgamma_stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k (2k-1) x^{2k-1}), k = 1..7
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2
                                                * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

/// ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    if outside_domain(x) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut shifted = x;
    let mut acc = 0.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / shifted;
        shifted += 1.0;
    }
    acc + shifted.ln() - 0.5 / shifted - digamma_tail(shifted)
}

/// Σ_{k≥1} B_{2k} / (2k x^{2k}), k = 1..7, valid for large x.
#[inline]
fn digamma_tail(x: f64) -> f64 {
    let inv2 = 1.0 / (x * x);
    inv2 * (1.0 / 12.0
        + inv2
            * (-1.0 / 120.0
                + inv2
                    * (1.0 / 252.0
                        + inv2
                            * (-1.0 / 240.0
                                + inv2
                                    * (1.0 / 132.0
                                        + inv2 * (-691.0 / 32_760.0 + inv2 * (1.0 / 12.0)))))))
}

/// ψ′(x), the derivative of the digamma function, for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if outside_domain(x) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let mut shifted = x;
    let mut acc = 0.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (shifted * shifted);
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let series = inv
        + inv2 * 0.5
        + inv
            * inv2
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2
                            * (1.0 / 42.0
                                + inv2
                                    * (-1.0 / 30.0
                                        + inv2
                                            * (5.0 / 66.0
                                                + inv2
                                                    * (-691.0 / 2730.0 + inv2 * (7.0 / 6.0)))))));
    acc + series
}

/// ln x − ψ(x), computed without the cancellation of the direct difference
/// for large x. Always positive.
pub fn ln_minus_digamma(x: f64) -> f64 {
    if outside_domain(x) {
        return f64::NAN;
    }
    if x >= ASYMPTOTIC_THRESHOLD {
        0.5 / x + digamma_tail(x)
    } else {
        x.ln() - digamma(x)
    }
}

/// ln x − ψ(x + 1) = ln x − ψ(x) − 1/x, again cancellation-free for large x.
/// Always negative.
pub fn ln_minus_digamma_succ(x: f64) -> f64 {
    if outside_domain(x) {
        return f64::NAN;
    }
    if x >= ASYMPTOTIC_THRESHOLD {
        -0.5 / x + digamma_tail(x)
    } else {
        x.ln() - digamma(x + 1.0)
    }
}

pub fn try_lgamma(x: f64) -> Result<f64> {
    PositiveReal::new(x).map(|p| lgamma(p.get()))
}

pub fn try_digamma(x: f64) -> Result<f64> {
    PositiveReal::new(x).map(|p| digamma(p.get()))
}

pub fn try_trigamma(x: f64) -> Result<f64> {
    PositiveReal::new(x).map(|p| trigamma(p.get()))
}
