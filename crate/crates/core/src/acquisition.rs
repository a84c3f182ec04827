//! Duel selection: the one-shot knowledge gradient with its closed-form
//! look-ahead mean, plus EUBO, batch LogEI and random baselines.
//!
//! Every formula is driven by three posterior statistics of
//! `Δ = f(x₁) − f(x₂)`: its mean, its variance, and its covariance with the
//! utility `f(x)` at a point of interest. Observing `x₁ ≻ x₂` under probit
//! noise `σ` is the event `Δ + ε ≥ 0` with `ε ~ N(0, σ²)`, so the look-ahead
//! mean is the mean of `f(x)` conditioned on a Gaussian half-line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::{condition_on_nonneg, BivariateGaussian};
use crate::laplace::LaplacePosterior;
use crate::optim::{maximize_unit_cube, MultiStartOptions};
use crate::stats::{normal, sobol_unit, RandomSource};

/// Look-ahead probit noise used by the knowledge gradient.
pub const LOOKAHEAD_NOISE: f64 = 1.0;

/// Moments of `Δ = f(x₁) − f(x₂)` and its covariance with `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuelStats {
    pub mean_delta: f64,
    pub var_delta: f64,
    pub cov_x_delta: f64,
}

impl DuelStats {
    /// The statistics seen from the other side of the duel.
    pub fn flipped(&self) -> Self {
        Self {
            mean_delta: -self.mean_delta,
            var_delta: self.var_delta,
            cov_x_delta: -self.cov_x_delta,
        }
    }
}

/// Two candidate inputs, in domain units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelQuery {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl DuelQuery {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>) -> Self {
        Self { x1, x2 }
    }

    pub fn swapped(&self) -> Self {
        Self {
            x1: self.x2.clone(),
            x2: self.x1.clone(),
        }
    }

    /// Euclidean distance between the two candidates.
    pub fn separation(&self) -> f64 {
        self.x1
            .iter()
            .zip(&self.x2)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// `x₁ ≻ x₂`
    FirstWins,
    /// `x₁ ≺ x₂`
    SecondWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kg,
    Eubo,
    Logei,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kg, Method::Eubo, Method::Logei, Method::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Kg => "kg",
            Method::Eubo => "eubo",
            Method::Logei => "logei",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub optimizer: MultiStartOptions,
    /// Probit noise assumed by the knowledge-gradient look-ahead.
    pub lookahead_noise: f64,
    pub logei_samples: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            optimizer: MultiStartOptions::default(),
            lookahead_noise: LOOKAHEAD_NOISE,
            logei_samples: 128,
        }
    }
}

/// `Pr(x₁ ≻ x₂) = Φ(E[Δ]/√(Var[Δ] + σ²))`.
pub fn duel_probability_from_stats(mean_delta: f64, var_delta: f64, noise: f64) -> f64 {
    normal::cdf(mean_delta / (var_delta.max(0.0) + noise * noise).sqrt())
}

/// `E[f(x) | outcome]` from the predictive moments of `f(x)` and the duel.
///
/// Routed through the half-line conditioning of `(f(x), Δ + ε)`. The
/// variance of `f(x)` is raised to the Cauchy–Schwarz bound when rounding
/// leaves it below `cov²/Var[Δ+ε]`.
pub fn lookahead_from_stats(
    mu_x: f64,
    var_x: f64,
    stats: &DuelStats,
    outcome: Outcome,
    noise: f64,
) -> f64 {
    let s = match outcome {
        Outcome::FirstWins => *stats,
        Outcome::SecondWins => stats.flipped(),
    };
    let s22 = s.var_delta.max(0.0) + noise * noise;
    let s11 = var_x
        .max(s.cov_x_delta * s.cov_x_delta / s22)
        .max(f64::MIN_POSITIVE);
    let b = BivariateGaussian {
        mu1: mu_x,
        mu2: s.mean_delta,
        s11,
        s22,
        s12: s.cov_x_delta,
    };
    condition_on_nonneg(&b).mean
}

/// `E[max(f(x₁), f(x₂))]` for jointly Gaussian utilities with means
/// `mu1, mu2` and `Var[f(x₁) − f(x₂)] = var_delta`.
pub fn eubo_from_moments(mu1: f64, mu2: f64, var_delta: f64) -> f64 {
    let theta = var_delta.max(0.0).sqrt();
    if theta < 1e-12 {
        return mu1.max(mu2);
    }
    let z = (mu1 - mu2) / theta;
    mu1 * normal::cdf(z) + mu2 * normal::cdf(-z) + theta * normal::pdf(z)
}

fn duel_stats_from_joint(
    mean: &nalgebra::DVector<f64>,
    cov: &nalgebra::DMatrix<f64>,
    x: usize,
    i1: usize,
    i2: usize,
) -> DuelStats {
    DuelStats {
        mean_delta: mean[i1] - mean[i2],
        var_delta: (cov[(i1, i1)] + cov[(i2, i2)] - 2.0 * cov[(i1, i2)]).max(0.0),
        cov_x_delta: cov[(x, i1)] - cov[(x, i2)],
    }
}

fn check_point(post: &LaplacePosterior, x: &[f64]) -> Result<()> {
    post.dataset().domain().check_point(x)
}

fn check_query(post: &LaplacePosterior, q: &DuelQuery) -> Result<()> {
    check_point(post, &q.x1)?;
    check_point(post, &q.x2)
}

/// Predictive mean and variance of `f(x)` plus the statistics of the duel.
pub fn duel_stats(
    post: &LaplacePosterior,
    x: &[f64],
    q: &DuelQuery,
) -> Result<(f64, f64, DuelStats)> {
    check_point(post, x)?;
    check_query(post, q)?;
    let (mean, cov) = post.predict_joint(&[x.to_vec(), q.x1.clone(), q.x2.clone()])?;
    Ok((
        mean[0],
        cov[(0, 0)],
        duel_stats_from_joint(&mean, &cov, 0, 1, 2),
    ))
}

pub fn duel_probability(post: &LaplacePosterior, q: &DuelQuery) -> Result<f64> {
    check_query(post, q)?;
    let (mean, cov) = post.predict_joint(&[q.x1.clone(), q.x2.clone()])?;
    let s = duel_stats_from_joint(&mean, &cov, 0, 0, 1);
    Ok(duel_probability_from_stats(
        s.mean_delta,
        s.var_delta,
        LOOKAHEAD_NOISE,
    ))
}

/// One-step look-ahead posterior mean `E[f(x) | 𝒟, outcome of q]`.
pub fn lookahead_mean(
    post: &LaplacePosterior,
    x: &[f64],
    q: &DuelQuery,
    outcome: Outcome,
) -> Result<f64> {
    let (mu, var, s) = duel_stats(post, x, q)?;
    Ok(lookahead_from_stats(mu, var, &s, outcome, LOOKAHEAD_NOISE))
}

fn kg_unit(post: &LaplacePosterior, pts: [&[f64]; 4], noise: f64) -> f64 {
    let (mean, cov) = post.predict_joint_unit(&pts);
    let s_plus = duel_stats_from_joint(&mean, &cov, 2, 0, 1);
    let s_minus = duel_stats_from_joint(&mean, &cov, 3, 0, 1);
    let p_first = duel_probability_from_stats(s_plus.mean_delta, s_plus.var_delta, noise);
    let p_second = duel_probability_from_stats(-s_plus.mean_delta, s_plus.var_delta, noise);
    let up = lookahead_from_stats(mean[2], cov[(2, 2)], &s_plus, Outcome::FirstWins, noise);
    let down = lookahead_from_stats(mean[3], cov[(3, 3)], &s_minus, Outcome::SecondWins, noise);
    p_first * up + p_second * down
}

/// One-shot knowledge gradient
/// `Pr(x₁≻x₂)·E[f(x₊) | x₁≻x₂] + Pr(x₁≺x₂)·E[f(x₋) | x₁≺x₂]`,
/// without the `max μ` baseline.
pub fn kg_oneshot(
    post: &LaplacePosterior,
    x1: &[f64],
    x2: &[f64],
    xplus: &[f64],
    xminus: &[f64],
) -> Result<f64> {
    kg_oneshot_with_noise(post, x1, x2, xplus, xminus, LOOKAHEAD_NOISE)
}

pub fn kg_oneshot_with_noise(
    post: &LaplacePosterior,
    x1: &[f64],
    x2: &[f64],
    xplus: &[f64],
    xminus: &[f64],
    noise: f64,
) -> Result<f64> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!(
            "look-ahead noise must be positive, got {noise}"
        )));
    }
    let dom = post.dataset().domain();
    let mut unit = Vec::with_capacity(4);
    for x in [x1, x2, xplus, xminus] {
        check_point(post, x)?;
        unit.push(dom.to_unit(x));
    }
    Ok(kg_unit(
        post,
        [&unit[0], &unit[1], &unit[2], &unit[3]],
        noise,
    ))
}

fn eubo_unit(post: &LaplacePosterior, x1: &[f64], x2: &[f64]) -> f64 {
    let (mean, cov) = post.predict_joint_unit(&[x1, x2]);
    let var_delta = cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)];
    eubo_from_moments(mean[0], mean[1], var_delta)
}

/// Expected utility of the best option, `E[max(f(x₁), f(x₂)) | 𝒟]`.
pub fn eubo(post: &LaplacePosterior, q: &DuelQuery) -> Result<f64> {
    check_query(post, q)?;
    let dom = post.dataset().domain();
    Ok(eubo_unit(post, &dom.to_unit(&q.x1), &dom.to_unit(&q.x2)))
}

/// Fixed standard-normal draws for the batch LogEI sample average.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSamples {
    rows: Vec<[f64; 2]>,
}

impl BaseSamples {
    /// `n` scrambled-Sobol normal pairs.
    pub fn sobol(n: usize, rng: &mut RandomSource) -> Result<Self> {
        let u = sobol_unit(n, 2, rng.next_seed32())?;
        let q = |p: f64| normal::quantile(p.clamp(1e-12, 1.0 - 1e-12));
        Ok(Self {
            rows: u.iter().map(|p| [q(p[0]), q(p[1])]).collect(),
        })
    }

    pub fn from_rows(rows: Vec<[f64; 2]>) -> Result<Self> {
        if rows.is_empty() || rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "base samples must be a nonempty finite matrix",
            ));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }
}

/// Softplus temperature of the smoothed improvement.
pub const LOGEI_TEMPERATURE: f64 = 1e-3;

fn log_softplus(u: f64) -> f64 {
    if u < -30.0 {
        u
    } else if u > 30.0 {
        u.ln()
    } else {
        u.exp().ln_1p().ln()
    }
}

/// Sample-average `log E[softplus_τ(max(f₁, f₂) − β)]` for a bivariate
/// Gaussian with the given mean and covariance, floored at `log(1e-300)`.
pub fn qlogei_from_moments(
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    incumbent: f64,
    base: &BaseSamples,
) -> f64 {
    let floor = 1e-300f64.ln();
    let l11 = cov[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov[1][0] / l11 } else { 0.0 };
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let t = LOGEI_TEMPERATURE;
    let logs: Vec<f64> = base
        .rows
        .iter()
        .map(|z| {
            let f1 = mean[0] + l11 * z[0];
            let f2 = mean[1] + l21 * z[0] + l22 * z[1];
            t.ln() + log_softplus((f1.max(f2) - incumbent) / t)
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lme = top + (logs.iter().map(|v| (v - top).exp()).sum::<f64>() / logs.len() as f64).ln();
    if lme.is_nan() {
        floor
    } else {
        lme.max(floor)
    }
}

fn qlogei_unit(
    post: &LaplacePosterior,
    x1: &[f64],
    x2: &[f64],
    incumbent: f64,
    base: &BaseSamples,
) -> f64 {
    let (mean, cov) = post.predict_joint_unit(&[x1, x2]);
    qlogei_from_moments(
        [mean[0], mean[1]],
        [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        incumbent,
        base,
    )
}

/// Batch (q = 2) LogEI with fixed base samples.
pub fn qlogei(
    post: &LaplacePosterior,
    q: &DuelQuery,
    incumbent: f64,
    base: &BaseSamples,
) -> Result<f64> {
    check_query(post, q)?;
    let dom = post.dataset().domain();
    Ok(qlogei_unit(
        post,
        &dom.to_unit(&q.x1),
        &dom.to_unit(&q.x2),
        incumbent,
        base,
    ))
}

/// Largest posterior mean over the training inputs, or 0 without data.
pub fn incumbent(post: &LaplacePosterior) -> f64 {
    post.f_map().iter().copied().reduce(f64::max).unwrap_or(0.0)
}

/// Two scrambled Sobol points from the domain.
pub fn random_duel(post: &LaplacePosterior, rng: &mut RandomSource) -> Result<DuelQuery> {
    random_duel_in(post.dataset().domain(), rng)
}

pub fn random_duel_in(
    domain: &crate::stats::BoxDomain,
    rng: &mut RandomSource,
) -> Result<DuelQuery> {
    let mut pts = crate::stats::sobol_sample(2, domain, rng)?;
    let x2 = pts.pop().expect("two points");
    let x1 = pts.pop().expect("two points");
    Ok(DuelQuery { x1, x2 })
}

/// Selects the next duel with `method`.
///
/// The knowledge gradient is maximized jointly over `(x₁, x₂, x₊, x₋)` and
/// the fantasy points are discarded; EUBO and LogEI are maximized over
/// `(x₁, x₂)`.
pub fn next_duel(
    post: &LaplacePosterior,
    method: Method,
    cfg: &AcquisitionConfig,
    rng: &mut RandomSource,
) -> Result<DuelQuery> {
    let d = post.dim();
    let dom = post.dataset().domain();
    let split = |z: &[f64]| DuelQuery {
        x1: dom.from_unit(&z[..d]),
        x2: dom.from_unit(&z[d..2 * d]),
    };
    match method {
        Method::Random => random_duel(post, rng),
        Method::Kg => {
            let noise = cfg.lookahead_noise;
            if !(noise > 0.0 && noise.is_finite()) {
                return Err(Error::invalid(format!(
                    "look-ahead noise must be positive, got {noise}"
                )));
            }
            let f = |z: &[f64]| {
                kg_unit(
                    post,
                    [&z[..d], &z[d..2 * d], &z[2 * d..3 * d], &z[3 * d..]],
                    noise,
                )
            };
            let r = maximize_unit_cube(f, 4 * d, &cfg.optimizer, rng)?;
            Ok(split(&r.x))
        }
        Method::Eubo => {
            let f = |z: &[f64]| eubo_unit(post, &z[..d], &z[d..]);
            let r = maximize_unit_cube(f, 2 * d, &cfg.optimizer, rng)?;
            Ok(split(&r.x))
        }
        Method::Logei => {
            let base = BaseSamples::sobol(cfg.logei_samples, rng)?;
            let best = incumbent(post);
            let f = |z: &[f64]| qlogei_unit(post, &z[..d], &z[d..], best, &base);
            let r = maximize_unit_cube(f, 2 * d, &cfg.optimizer, rng)?;
            Ok(split(&r.x))
        }
    }
}

/// Estimated maximizer `argmax_x E[f(x) | 𝒟]` and its posterior mean.
pub fn argmax_posterior_mean(
    post: &LaplacePosterior,
    opts: &MultiStartOptions,
    rng: &mut RandomSource,
) -> Result<(Vec<f64>, f64)> {
    let r = maximize_unit_cube(|u| post.mean_unit(u), post.dim(), opts, rng)?;
    Ok((post.dataset().domain().from_unit(&r.x), r.value))
}
