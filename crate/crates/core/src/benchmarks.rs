//! Synthetic test functions (negated to maximization form), the simulated
//! probit preference oracle, and top-1% noise calibration.

use std::f64::consts::{E, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::acquisition::{DuelQuery, Outcome};
use crate::error::{Error, Result};
use crate::stats::{normal, sobol_sample, BoxDomain, RandomSource};

/// A latent utility with its domain and known maximum.
#[derive(Clone)]
pub struct TestFunction {
    name: &'static str,
    domain: BoxDomain,
    known_max: f64,
    known_argmax: Vec<f64>,
    f: fn(&[f64]) -> f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("known_max", &self.known_max)
            .finish()
    }
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn known_max(&self) -> f64 {
        self.known_max
    }

    pub fn known_argmax(&self) -> &[f64] {
        &self.known_argmax
    }

    /// Utility at `x`; points outside the domain are rejected.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_point(x)?;
        Ok((self.f)(x))
    }

    /// Utility without the domain check, for callers that already hold
    /// in-domain points.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// `f* − f(x)`.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        Ok(self.known_max - self.eval(x)?)
    }
}

pub const FUNCTION_NAMES: [&str; 7] = [
    "quadratic2",
    "branin2",
    "hartmann6",
    "ackley6",
    "alpine1_7",
    "levy6",
    "levy2",
];

fn quadratic(x: &[f64]) -> f64 {
    -0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    let u = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
    -(u * u + 10.0 * (1.0 - t) * x[0].cos() + 10.0)
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HARTMANN_ARGMAX: [f64; 6] = [
    0.201_689_509_093_657_46,
    0.150_010_693_541_113_74,
    0.476_873_972_925_099_8,
    0.275_332_427_522_078_2,
    0.311_651_617_239_568_6,
    0.657_300_534_553_670_2,
];

fn hartmann6(x: &[f64]) -> f64 {
    HARTMANN_ALPHA
        .iter()
        .zip(HARTMANN_A.iter().zip(&HARTMANN_P))
        .map(|(alpha, (a, p))| {
            let r: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
            alpha * (-r).exp()
        })
        .sum()
}

fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    -(-20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E)
}

fn alpine1(x: &[f64]) -> f64 {
    -x.iter().map(|v| (v * v.sin() + 0.1 * v).abs()).sum::<f64>()
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let d = w.len();
    let mut s = (PI * w[0]).sin().powi(2);
    for wi in &w[..d - 1] {
        s += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
    }
    let wd = w[d - 1];
    s += (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
    -s
}

fn build(
    name: &'static str,
    domain: BoxDomain,
    argmax: Vec<f64>,
    f: fn(&[f64]) -> f64,
) -> TestFunction {
    let known_max = f(&argmax);
    TestFunction {
        name,
        domain,
        known_max,
        known_argmax: argmax,
        f,
    }
}

/// Looks up a registered test function by name.
pub fn test_function(name: &str) -> Result<TestFunction> {
    let cube = |d: usize, lo: f64, hi: f64| BoxDomain::cube(d, lo, hi).expect("valid cube");
    Ok(match name {
        "quadratic2" => build("quadratic2", cube(2, -1.0, 1.0), vec![0.0; 2], quadratic),
        "branin2" => build(
            "branin2",
            BoxDomain::new(vec![-5.0, 0.0], vec![10.0, 15.0])?,
            vec![PI, 2.275],
            branin,
        ),
        "hartmann6" => build(
            "hartmann6",
            cube(6, 0.0, 1.0),
            HARTMANN_ARGMAX.to_vec(),
            hartmann6,
        ),
        "ackley6" => build("ackley6", cube(6, -32.768, 32.768), vec![0.0; 6], ackley),
        "alpine1_7" => build("alpine1_7", cube(7, -10.0, 10.0), vec![0.0; 7], alpine1),
        "levy6" => build("levy6", cube(6, -10.0, 10.0), vec![1.0; 6], levy),
        "levy2" => build("levy2", cube(2, -10.0, 10.0), vec![1.0; 2], levy),
        _ => {
            return Err(Error::Unknown {
                kind: "test function",
                name: name.to_string(),
            })
        }
    })
}

/// Comparison noise of the simulated oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub sigma_true: f64,
    pub deterministic: bool,
}

impl OracleConfig {
    pub fn noisy(sigma_true: f64) -> Result<Self> {
        if !(sigma_true >= 0.0 && sigma_true.is_finite()) {
            return Err(Error::invalid(format!(
                "oracle noise must be nonnegative, got {sigma_true}"
            )));
        }
        Ok(Self {
            sigma_true,
            deterministic: sigma_true == 0.0,
        })
    }

    pub fn deterministic() -> Self {
        Self {
            sigma_true: 0.0,
            deterministic: true,
        }
    }
}

/// Simulated preference: `x₁ ≻ x₂` with probability `Φ((f(x₁) − f(x₂))/σ)`,
/// or by the sign of the difference (ties to `x₁`) when deterministic.
pub fn oracle_compare(
    t: &TestFunction,
    cfg: &OracleConfig,
    q: &DuelQuery,
    rng: &mut RandomSource,
) -> Result<Outcome> {
    let diff = t.eval(&q.x1)? - t.eval(&q.x2)?;
    Ok(compare_with_noise(diff, cfg, rng))
}

fn compare_with_noise(diff: f64, cfg: &OracleConfig, rng: &mut RandomSource) -> Outcome {
    let first = if cfg.deterministic || cfg.sigma_true == 0.0 {
        diff >= 0.0
    } else {
        rng.uniform() < normal::cdf(diff / cfg.sigma_true)
    };
    if first {
        Outcome::FirstWins
    } else {
        Outcome::SecondWins
    }
}

const CALIBRATION_POINTS: usize = 1 << 16;
const ELITE_FRACTION: f64 = 0.01;
const SIGMA_RANGE: (f64, f64) = (1e-8, 1e8);
/// Accepted distance between the calibrated and the target error rate.
pub const CALIBRATION_TOLERANCE: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    pub target: f64,
    /// Mean comparison error on the calibration pairs at `sigma`.
    pub achieved: f64,
}

/// Utility values of the top 1% of a scrambled Sobol sample.
fn elite_values(t: &TestFunction, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let pts = sobol_sample(CALIBRATION_POINTS, t.domain(), rng)?;
    let mut vals: Vec<f64> = pts.iter().map(|x| t.eval_unchecked(x)).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.truncate((ELITE_FRACTION * CALIBRATION_POINTS as f64).ceil() as usize);
    Ok(vals)
}

/// Absolute utility differences of every unordered pair of distinct elites.
fn all_elite_gaps(elite: &[f64]) -> Result<Vec<f64>> {
    let m = elite.len();
    if m < 2 {
        return Err(Error::Calibration(format!(
            "top-1% subset has only {m} points"
        )));
    }
    Ok((0..m)
        .flat_map(|i| elite[i + 1..].iter().map(move |b| (elite[i] - b).abs()))
        .collect())
}

/// Absolute utility differences of `n` uniformly drawn elite pairs with
/// distinct members.
fn elite_gaps(elite: &[f64], n: usize, rng: &mut RandomSource) -> Result<Vec<f64>> {
    let m = elite.len();
    if m < 2 {
        return Err(Error::Calibration(format!(
            "top-1% subset has only {m} points"
        )));
    }
    let pick = |rng: &mut RandomSource| ((rng.uniform() * m as f64) as usize).min(m - 1);
    Ok((0..n)
        .map(|_| {
            let i = pick(rng);
            let mut j = pick(rng);
            while j == i {
                j = pick(rng);
            }
            (elite[i] - elite[j]).abs()
        })
        .collect())
}

/// Mean probit error `Φ(−|Δ|/σ)` over the given gaps.
pub fn mean_error(gaps: &[f64], sigma: f64) -> f64 {
    gaps.iter().map(|g| normal::cdf(-g / sigma)).sum::<f64>() / gaps.len() as f64
}

/// Finds the oracle noise at which comparisons within the top 1% of the
/// domain err with probability `target`.
///
/// The error rate is averaged over all pairs of distinct elite points rather
/// than a random subset, which keeps σ stable across seeds.
pub fn calibrate_sigma(
    t: &TestFunction,
    target: f64,
    rng: &mut RandomSource,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 0.5) {
        return Err(Error::invalid(format!(
            "target error rate must lie in (0, 0.5), got {target}"
        )));
    }
    let gaps = all_elite_gaps(&elite_values(t, rng)?)?;
    let (mut lo, mut hi) = (SIGMA_RANGE.0.ln(), SIGMA_RANGE.1.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_error(&gaps, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let sigma = (0.5 * (lo + hi)).exp();
    let achieved = mean_error(&gaps, sigma);
    if (achieved - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration(format!(
            "{}: error rate {achieved:.4} at sigma {sigma:e} misses target {target}",
            t.name()
        )));
    }
    Ok(Calibration {
        sigma,
        target,
        achieved,
    })
}

/// Simulated oracle error rate on `n_pairs` fresh top-1% pairs, counting
/// a comparison as wrong when it prefers the lower-utility point.
pub fn simulated_error_rate(
    t: &TestFunction,
    sigma: f64,
    n_pairs: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    let cfg = OracleConfig::noisy(sigma)?;
    let elite = elite_values(t, rng)?;
    let gaps = elite_gaps(&elite, n_pairs, rng)?;
    let errors = gaps
        .iter()
        .filter(|g| compare_with_noise(**g, &cfg, rng) == Outcome::SecondWins)
        .count();
    Ok(errors as f64 / n_pairs as f64)
}
