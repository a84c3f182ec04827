//! Matérn-5/2 ARD kernel and Gamma hyperpriors.
//!
//! Hyperparameters live on the log scale and act on inputs normalized to the
//! unit cube.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};
use crate::stats::RandomSource;

const SQRT_5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHypers {
    pub log_lengthscales: Vec<f64>,
    /// Log of the kernel variance `s²`.
    pub log_outputscale: f64,
}

impl KernelHypers {
    pub fn new(lengthscales: &[f64], outputscale: f64) -> Result<Self> {
        if lengthscales
            .iter()
            .chain([&outputscale])
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::invalid(
                "kernel hyperparameters must be positive and finite",
            ));
        }
        Ok(Self {
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_outputscale: outputscale.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|v| v.exp()).collect()
    }

    pub fn outputscale(&self) -> f64 {
        self.log_outputscale.exp()
    }

    /// Flattened `[log ℓ₁, …, log ℓ_d, log s²]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_outputscale);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let (ls, os) = v.split_at(v.len() - 1);
        Self {
            log_lengthscales: ls.to_vec(),
            log_outputscale: os[0],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Kernel with precomputed inverse lengthscales, for hot loops.
#[derive(Debug, Clone)]
pub struct Matern52 {
    inv_ls: Vec<f64>,
    outputscale: f64,
}

impl Matern52 {
    pub fn new(h: &KernelHypers) -> Self {
        Self {
            inv_ls: h.log_lengthscales.iter().map(|l| (-l).exp()).collect(),
            outputscale: h.outputscale(),
        }
    }

    pub fn dim(&self) -> usize {
        self.inv_ls.len()
    }

    pub fn outputscale(&self) -> f64 {
        self.outputscale
    }

    /// Assumes both points have the kernel's dimension.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.inv_ls)
            .map(|((a, b), s)| {
                let d = (a - b) * s;
                d * d
            })
            .sum();
        let sr = SQRT_5 * r2.sqrt();
        self.outputscale * (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
    }

    pub fn matrix<P: AsRef<[f64]>>(&self, xs: &[P], ys: &[P]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            self.eval(xs[i].as_ref(), ys[j].as_ref())
        })
    }

    /// Symmetric `K(X, X)`.
    pub fn gram<P: AsRef<[f64]>>(&self, xs: &[P]) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.outputscale;
            for j in 0..i {
                let v = self.eval(xs[i].as_ref(), xs[j].as_ref());
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// `s²·(1 + √5 r + 5r²/3)·exp(−√5 r)` with `r` the lengthscale-scaled distance.
pub fn matern52(x: &[f64], y: &[f64], h: &KernelHypers) -> Result<f64> {
    check_dim(h.dim(), x.len())?;
    check_dim(h.dim(), y.len())?;
    Ok(Matern52::new(h).eval(x, y))
}

pub fn kernel_matrix(xs: &[Vec<f64>], ys: &[Vec<f64>], h: &KernelHypers) -> Result<DMatrix<f64>> {
    for p in xs.iter().chain(ys) {
        check_dim(h.dim(), p.len())?;
    }
    Ok(Matern52::new(h).matrix(xs, ys))
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `Gamma(shape, rate)` on the natural scale of a positive parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::invalid("Gamma prior parameters must be positive"));
        }
        Ok(Self { shape, rate })
    }

    /// Log density of `u = log θ`: Gamma log density at `θ = e^u` plus the
    /// log-Jacobian `u`.
    pub fn log_density_of_log(&self, u: f64) -> f64 {
        let theta = u.exp();
        self.shape * self.rate.ln() - libm::lgamma(self.shape) + (self.shape - 1.0) * u
            - self.rate * theta
            + u
    }

    pub fn median(&self) -> f64 {
        GammaDist::new(self.shape, self.rate)
            .expect("validated parameters")
            .inverse_cdf(0.5)
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub lengthscale: GammaPrior,
    pub outputscale: GammaPrior,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            lengthscale: GammaPrior {
                shape: 3.0,
                rate: 6.0,
            },
            outputscale: GammaPrior {
                shape: 2.0,
                rate: 0.15,
            },
        }
    }
}

impl HyperPriors {
    /// Hyperparameters at the prior medians.
    pub fn median(&self, dim: usize) -> KernelHypers {
        KernelHypers {
            log_lengthscales: vec![self.lengthscale.median().ln(); dim],
            log_outputscale: self.outputscale.median().ln(),
        }
    }

    pub fn sample(&self, dim: usize, rng: &mut RandomSource) -> KernelHypers {
        let log_lengthscales = (0..dim)
            .map(|_| self.lengthscale.sample(rng).ln())
            .collect();
        KernelHypers {
            log_lengthscales,
            log_outputscale: self.outputscale.sample(rng).ln(),
        }
    }
}

/// Log prior density of the log-scale hyperparameters.
pub fn hyperprior_logpdf(h: &KernelHypers, priors: &HyperPriors) -> f64 {
    h.log_lengthscales
        .iter()
        .map(|u| priors.lengthscale.log_density_of_log(*u))
        .sum::<f64>()
        + priors.outputscale.log_density_of_log(h.log_outputscale)
}
