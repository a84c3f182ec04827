//! Univariate standard normal functions.
//!
//! `cdf` goes through the complementary error function. Below `z = -6` both
//! `log_cdf` and `mills` switch to a continued-fraction evaluation of the
//! scaled complementary error function `erfcx(x) = exp(x²)·erfc(x)`, so
//! neither underflows however far into the left tail `z` is.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TAIL_SWITCH: f64 = -6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFuncs {
    pub pdf: f64,
    pub cdf: f64,
    pub log_cdf: f64,
    pub mills: f64,
}

/// All four normal functions at `z`, rejecting non-finite input.
pub fn normal_funcs(z: f64) -> Result<NormalFuncs> {
    if !z.is_finite() {
        return Err(Error::NonFinite("normal_funcs argument"));
    }
    Ok(NormalFuncs {
        pdf: pdf(z),
        cdf: cdf(z),
        log_cdf: log_cdf(z),
        mills: mills(z),
    })
}

#[inline]
pub fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn log_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let x = -z * std::f64::consts::FRAC_1_SQRT_2;
        (0.5 * erfcx_cf(x)).ln() - 0.5 * z * z
    } else if z < 0.0 {
        cdf(z).ln()
    } else {
        (-0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)).ln_1p()
    }
}

/// Inverse Mills ratio `φ(z)/Φ(z)`.
pub fn mills(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let x = -z * std::f64::consts::FRAC_1_SQRT_2;
        2.0 * FRAC_1_SQRT_2PI / erfcx_cf(x)
    } else {
        pdf(z) / cdf(z)
    }
}

/// Standard normal quantile.
pub fn quantile(p: f64) -> f64 {
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // polish with Newton steps on the accurate cdf
    for _ in 0..2 {
        if x.is_finite() {
            x -= (cdf(x) - p) / pdf(x);
        }
    }
    x
}

/// `exp(x²)·erfc(x)` by backward evaluation of the Laplace continued fraction.
/// Only accurate for `x` above roughly 4.
fn erfcx_cf(x: f64) -> f64 {
    const TERMS: u32 = 40;
    let mut t = x;
    for n in (1..=TERMS).rev() {
        t = x + 0.5 * f64::from(n) / t;
    }
    1.0 / (std::f64::consts::PI.sqrt() * t)
}
