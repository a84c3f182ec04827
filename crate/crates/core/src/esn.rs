//! Extended skew normal (ESN) distribution and conditioning a bivariate
//! Gaussian on a half-line.
//!
//! `ESN(ξ, ω², α, τ)` has density
//!
//! ```text
//! p(x) = φ(z) · Φ(τ·√(1+α²) + α·z) / (ω·Φ(τ)),   z = (x − ξ)/ω
//! ```
//!
//! and cumulant-generating function
//!
//! ```text
//! K(t) = −log Φ(τ) + ξt + ω²t²/2 + log Φ(τ + αωt/√(1+α²)).
//! ```
//!
//! If `(x₁, x₂)` is bivariate normal then `x₁ | x₂ ≥ 0` is ESN, which is what
//! makes the preferential look-ahead mean available in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnParams {
    pub xi: f64,
    pub omega: f64,
    pub alpha: f64,
    pub tau: f64,
}

impl EsnParams {
    pub fn new(xi: f64, omega: f64, alpha: f64, tau: f64) -> Result<Self> {
        if ![xi, omega, alpha, tau].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ESN parameters"));
        }
        if omega <= 0.0 {
            return Err(Error::invalid(format!(
                "ESN scale must be positive, got {omega}"
            )));
        }
        Ok(Self {
            xi,
            omega,
            alpha,
            tau,
        })
    }

    /// `αω/√(1+α²)`, the loading of the truncated component.
    fn delta_omega(&self) -> f64 {
        self.alpha * self.omega / self.alpha.hypot(1.0)
    }
}

pub fn esn_pdf(x: f64, p: &EsnParams) -> f64 {
    let z = (x - p.xi) / p.omega;
    let arg = p.tau * p.alpha.hypot(1.0) + p.alpha * z;
    (normal::log_pdf(z) + normal::log_cdf(arg) - normal::log_cdf(p.tau) - p.omega.ln()).exp()
}

pub fn esn_cgf(t: f64, p: &EsnParams) -> f64 {
    let log_phi_tau = normal::log_cdf(p.tau);
    p.xi * t
        + 0.5 * p.omega * p.omega * t * t
        + (normal::log_cdf(p.tau + p.delta_omega() * t) - log_phi_tau)
}

/// `K'(0) = ξ + (φ(τ)/Φ(τ))·αω/√(1+α²)`.
pub fn esn_mean(p: &EsnParams) -> f64 {
    p.xi + normal::mills(p.tau) * p.delta_omega()
}

/// Moments of `(x₁, x₂)`; `s12` is the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateGaussian {
    pub mu1: f64,
    pub mu2: f64,
    pub s11: f64,
    pub s22: f64,
    pub s12: f64,
}

impl BivariateGaussian {
    pub fn new(mu1: f64, mu2: f64, s11: f64, s22: f64, s12: f64) -> Result<Self> {
        if ![mu1, mu2, s11, s22, s12].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bivariate Gaussian moments"));
        }
        if s11 <= 0.0 || s22 <= 0.0 {
            return Err(Error::invalid(
                "bivariate Gaussian variances must be positive",
            ));
        }
        // Allow rounding slack on the Cauchy–Schwarz bound.
        if s12 * s12 > s11 * s22 * (1.0 + 1e-9) {
            return Err(Error::invalid(
                "bivariate Gaussian covariance exceeds Cauchy-Schwarz bound",
            ));
        }
        Ok(Self {
            mu1,
            mu2,
            s11,
            s22,
            s12,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfLineConditional {
    /// Law of `x₁ | x₂ ≥ 0`.
    pub esn: EsnParams,
    /// `E[x₁ | x₂ ≥ 0] = μ₁ + (φ(τ)/Φ(τ))·s₁₂/√s₂₂`, `τ = μ₂/√s₂₂`.
    pub mean: f64,
}

/// Conditions `x₁` on `x₂ ≥ 0`.
///
/// The ESN shape `α` blows up under perfect correlation, so the conditional
/// variance `s₂₂ − s₁₂²/s₁₁` is floored at `1e-12·s₂₂`. The mean itself has no
/// such singularity and is computed directly.
pub fn condition_on_nonneg(b: &BivariateGaussian) -> HalfLineConditional {
    let sd2 = b.s22.sqrt();
    let tau = b.mu2 / sd2;
    let resid = (b.s22 - b.s12 * b.s12 / b.s11).max(1e-12 * b.s22);
    let alpha = b.s12 / b.s11.sqrt() / resid.sqrt();
    let esn = EsnParams {
        xi: b.mu1,
        omega: b.s11.sqrt(),
        alpha,
        tau,
    };
    let mean = b.mu1 + normal::mills(tau) * b.s12 / sd2;
    HalfLineConditional { esn, mean }
}
