//! Laplace-approximate GP posterior for pairwise preference data under the
//! probit likelihood `Pr(w ≻ l | f) = Φ((f_w − f_l)/σ)`.
//!
//! The likelihood curvature `W = Σ_k d_k v_k v_kᵀ/σ²` (with `v_k = e_w − e_l`)
//! is singular whenever the data leave directions unconstrained, e.g. the
//! common translation of all utilities. Writing `W = GᵀG` with one row of
//! `G` per duel, every solve goes through the duel-space matrix
//! `B = I + G K Gᵀ`, which is positive definite by construction:
//!
//! ```text
//! (K⁻¹ + W)⁻¹   = K − K Gᵀ B⁻¹ G K
//! (K + W⁻¹)⁻¹   = Gᵀ B⁻¹ G
//! det(I + K W)  = det B
//! ```
//!
//! Neither `W` nor `K` is ever inverted.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Duel, PrefDataset};
use crate::error::{Error, Result};
use crate::kernel::{hyperprior_logpdf, HyperPriors, KernelHypers, Matern52};
use crate::optim::nelder_mead;
use crate::stats::{chol_psd, normal, CholFactor, RandomSource};

/// Probit scale used when fitting the model.
pub const SIGMA_FIT: f64 = 1.0;

const B_JITTER: f64 = 1e-10;

// Relative size of Ψ changes indistinguishable from rounding.
const PSI_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LogLikTerms {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

struct LikelihoodParts {
    value: f64,
    gradient: DVector<f64>,
    /// Curvature `d_k/σ²` of each duel.
    weights: Vec<f64>,
}

fn likelihood_parts(f: &DVector<f64>, duels: &[Duel], sigma: f64) -> LikelihoodParts {
    let mut value = 0.0;
    let mut gradient = DVector::zeros(f.len());
    let mut weights = Vec::with_capacity(duels.len());
    for d in duels {
        let z = (f[d.winner] - f[d.loser]) / sigma;
        let m = normal::mills(z);
        value += normal::log_cdf(z);
        gradient[d.winner] += m / sigma;
        gradient[d.loser] -= m / sigma;
        weights.push((m * (z + m)).max(0.0) / (sigma * sigma));
    }
    LikelihoodParts {
        value,
        gradient,
        weights,
    }
}

/// Log-likelihood of `duels` at latent values `f`, with gradient and Hessian.
pub fn loglik_terms(f: &DVector<f64>, duels: &[Duel], sigma: f64) -> Result<LogLikTerms> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "probit scale must be positive, got {sigma}"
        )));
    }
    if let Some(d) = duels
        .iter()
        .find(|d| d.winner >= f.len() || d.loser >= f.len())
    {
        return Err(Error::invalid(format!(
            "duel {d:?} out of range for {} latents",
            f.len()
        )));
    }
    let parts = likelihood_parts(f, duels, sigma);
    let n = f.len();
    let mut hessian = DMatrix::zeros(n, n);
    for (d, w) in duels.iter().zip(&parts.weights) {
        hessian[(d.winner, d.winner)] -= w;
        hessian[(d.loser, d.loser)] -= w;
        hessian[(d.winner, d.loser)] += w;
        hessian[(d.loser, d.winner)] += w;
    }
    Ok(LogLikTerms {
        value: parts.value,
        gradient: parts.gradient,
        hessian,
    })
}

/// One row of `G`: `scale·(e_winner − e_loser)`.
#[derive(Debug, Clone, Copy)]
struct GRow {
    winner: usize,
    loser: usize,
    scale: f64,
}

fn g_rows(duels: &[Duel], weights: &[f64]) -> Vec<GRow> {
    duels
        .iter()
        .zip(weights)
        .map(|(d, w)| GRow {
            winner: d.winner,
            loser: d.loser,
            scale: w.sqrt(),
        })
        .collect()
}

fn g_apply(rows: &[GRow], v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        rows.len(),
        rows.iter().map(|r| r.scale * (v[r.winner] - v[r.loser])),
    )
}

fn gt_apply(rows: &[GRow], y: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (r, v) in rows.iter().zip(y.iter()) {
        out[r.winner] += r.scale * v;
        out[r.loser] -= r.scale * v;
    }
    out
}

fn factor_b(k: &DMatrix<f64>, rows: &[GRow]) -> Result<CholFactor> {
    let m = rows.len();
    let mut b = DMatrix::from_fn(m, m, |i, j| {
        let (ri, rj) = (rows[i], rows[j]);
        ri.scale
            * rj.scale
            * (k[(ri.winner, rj.winner)] - k[(ri.winner, rj.loser)] - k[(ri.loser, rj.winner)]
                + k[(ri.loser, rj.loser)])
    });
    for i in 0..m {
        b[(i, i)] += 1.0;
    }
    chol_psd(&b, B_JITTER)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Required bound on `‖∇Ψ‖∞` at the returned mode.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            max_halvings: 20,
        }
    }
}

/// Laplace approximation `q(f | 𝒟) = N(f̂, (K⁻¹ + W)⁻¹)` and its predictive.
#[derive(Debug, Clone)]
pub struct LaplacePosterior {
    dataset: PrefDataset,
    hypers: KernelHypers,
    sigma_fit: f64,
    kernel: Matern52,
    unit_points: Vec<Vec<f64>>,
    f_map: DVector<f64>,
    grad_at_map: DVector<f64>,
    /// `K⁻¹ f̂`, carried through the Newton updates.
    prior_precision_f: DVector<f64>,
    loglik_at_map: f64,
    rows: Vec<GRow>,
    b_factor: Option<CholFactor>,
    psi_trace: Vec<f64>,
}

/// Fits the Laplace approximation with the default Newton settings.
pub fn fit_map(dataset: &PrefDataset, hypers: &KernelHypers) -> Result<LaplacePosterior> {
    LaplacePosterior::fit(dataset, hypers, SIGMA_FIT, &NewtonOptions::default())
}

impl LaplacePosterior {
    /// Damped Newton ascent on `Ψ(f) = log p(𝒟|f) − ½ fᵀK⁻¹f`.
    pub fn fit(
        dataset: &PrefDataset,
        hypers: &KernelHypers,
        sigma_fit: f64,
        opts: &NewtonOptions,
    ) -> Result<Self> {
        if hypers.dim() != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: dataset.dim(),
                got: hypers.dim(),
            });
        }
        if !hypers.is_finite() {
            return Err(Error::NonFinite("kernel hyperparameters"));
        }
        if !(sigma_fit > 0.0 && sigma_fit.is_finite()) {
            return Err(Error::invalid("probit scale must be positive"));
        }
        let kernel = Matern52::new(hypers);
        let unit_points = dataset.unit_points();
        let k = kernel.gram(&unit_points);
        let n = unit_points.len();
        let duels = dataset.duels();

        let mut f = DVector::zeros(n);
        let mut a = DVector::zeros(n);
        let mut parts = likelihood_parts(&f, duels, sigma_fit);
        let mut psi = parts.value;
        let mut psi_trace = vec![psi];
        let mut resid = (&parts.gradient - &a).amax();
        let tight = opts.tolerance * 1e-3;

        let mut iterations = 0;
        while resid > tight && !duels.is_empty() {
            if iterations == opts.max_iterations {
                break;
            }
            iterations += 1;
            let rows = g_rows(duels, &parts.weights);
            let b = factor_b(&k, &rows)?;
            let rhs = gt_apply(&rows, &g_apply(&rows, &f), n) + &parts.gradient;
            let k_rhs = &k * &rhs;
            let y = b.solve(&g_apply(&rows, &k_rhs));
            let a_new = rhs - gt_apply(&rows, &y, n);
            let f_new = &k * &a_new;
            if f_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Newton iterate"));
            }

            let df = &f_new - &f;
            let da = &a_new - &a;
            let mut eta = 1.0;
            let mut accepted = None;
            for h in 0..=opts.max_halvings {
                let f_try = &f + &df * eta;
                let a_try = &a + &da * eta;
                let p = likelihood_parts(&f_try, duels, sigma_fit);
                let psi_try = p.value - 0.5 * f_try.dot(&a_try);
                // Near the mode Ψ is flat to rounding; a full step that
                // shrinks the gradient is then taken on the gradient alone.
                let polish = h == 0
                    && psi_try >= psi - PSI_ROUNDING * psi.abs().max(1.0)
                    && (&p.gradient - &a_try).amax() < resid;
                if psi_try >= psi || polish {
                    accepted = Some((f_try, a_try, p, psi_try));
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some((f_acc, a_acc, p, psi_acc)) => {
                    f = f_acc;
                    a = a_acc;
                    parts = p;
                    psi = psi_acc;
                    psi_trace.push(psi);
                    resid = (&parts.gradient - &a).amax();
                }
                // Ψ cannot be increased in floating point any more.
                None => break,
            }
        }
        if resid > opts.tolerance {
            return Err(Error::NotConverged {
                iterations,
                grad_norm: resid,
            });
        }

        let rows = g_rows(duels, &parts.weights);
        let b_factor = if rows.is_empty() {
            None
        } else {
            Some(factor_b(&k, &rows)?)
        };
        Ok(Self {
            dataset: dataset.clone(),
            hypers: hypers.clone(),
            sigma_fit,
            kernel,
            unit_points,
            f_map: f,
            grad_at_map: parts.gradient,
            prior_precision_f: a,
            loglik_at_map: parts.value,
            rows,
            b_factor,
            psi_trace,
        })
    }

    pub fn dataset(&self) -> &PrefDataset {
        &self.dataset
    }

    pub fn hypers(&self) -> &KernelHypers {
        &self.hypers
    }

    pub fn sigma_fit(&self) -> f64 {
        self.sigma_fit
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    /// MAP latent utilities at the dataset points.
    pub fn f_map(&self) -> &DVector<f64> {
        &self.f_map
    }

    /// `∇ log p(𝒟 | f̂)`, which equals `K⁻¹ f̂` at the mode.
    pub fn grad_at_map(&self) -> &DVector<f64> {
        &self.grad_at_map
    }

    /// `‖∇Ψ(f̂)‖∞`.
    pub fn stationarity(&self) -> f64 {
        (&self.grad_at_map - &self.prior_precision_f).amax()
    }

    /// Ψ after every accepted Newton step. Nondecreasing up to rounding
    /// (relative 1e-12).
    pub fn psi_trace(&self) -> &[f64] {
        &self.psi_trace
    }

    /// `log q(𝒟) = log p(𝒟|f̂) − ½ f̂ᵀK⁻¹f̂ − ½ log det(I + KW)`.
    pub fn laplace_evidence(&self) -> f64 {
        let half_log_det = self.b_factor.as_ref().map_or(0.0, |b| 0.5 * b.log_det());
        self.loglik_at_map - 0.5 * self.f_map.dot(&self.prior_precision_f) - half_log_det
    }

    /// Posterior mean at a point in unit coordinates.
    pub fn mean_unit(&self, x: &[f64]) -> f64 {
        self.unit_points
            .iter()
            .zip(self.grad_at_map.iter())
            .map(|(p, g)| self.kernel.eval(x, p) * g)
            .sum()
    }

    /// Joint predictive at points in unit coordinates.
    pub fn predict_joint_unit<P: AsRef<[f64]>>(&self, q: &[P]) -> (DVector<f64>, DMatrix<f64>) {
        let m = q.len();
        let kqx = DMatrix::from_fn(m, self.unit_points.len(), |i, j| {
            self.kernel.eval(q[i].as_ref(), &self.unit_points[j])
        });
        let mean = &kqx * &self.grad_at_map;
        let mut cov = self.kernel.gram(q);
        if let Some(b) = &self.b_factor {
            let v = DMatrix::from_fn(self.rows.len(), m, |r, j| {
                let row = self.rows[r];
                row.scale * (kqx[(j, row.winner)] - kqx[(j, row.loser)])
            });
            let w = b.solve_lower(&v);
            cov -= w.transpose() * w;
        }
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        (mean, cov)
    }

    /// Joint predictive mean and covariance at points in domain units.
    pub fn predict_joint(&self, q: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if q.is_empty() {
            return Err(Error::invalid(
                "predict_joint needs at least one query point",
            ));
        }
        let dom = self.dataset.domain();
        let mut unit = Vec::with_capacity(q.len());
        for x in q {
            if x.len() != dom.dim() {
                return Err(Error::DimensionMismatch {
                    expected: dom.dim(),
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("query point"));
            }
            unit.push(dom.to_unit(x));
        }
        Ok(self.predict_joint_unit(&unit))
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_joint(&[x.to_vec()])?.0[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperFitOptions {
    /// Current hyperparameters plus `starts − 1` prior draws.
    pub starts: usize,
    pub max_evals: usize,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_evals: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub hypers: KernelHypers,
    /// Laplace evidence plus hyperprior log density.
    pub objective: f64,
    /// Every start failed; `hypers` are the prior medians.
    pub fallback: bool,
}

// Box for the log-hyperparameters (inputs are unit-normalized).
const LOG_LS_RANGE: (f64, f64) = (-6.9, 4.6);
const LOG_OS_RANGE: (f64, f64) = (-9.2, 9.2);

/// MAP-II objective: Laplace evidence plus hyperprior log density.
pub fn hyper_objective(
    dataset: &PrefDataset,
    hypers: &KernelHypers,
    priors: &HyperPriors,
) -> Option<f64> {
    let post = fit_map(dataset, hypers).ok()?;
    let v = post.laplace_evidence() + hyperprior_logpdf(hypers, priors);
    v.is_finite().then_some(v)
}

/// Maximizes the MAP-II objective by Nelder–Mead in log space from the
/// current hyperparameters and `starts − 1` draws from the hyperprior.
pub fn fit_hypers(
    dataset: &PrefDataset,
    priors: &HyperPriors,
    current: &KernelHypers,
    opts: &HyperFitOptions,
    rng: &mut RandomSource,
) -> Result<HyperFit> {
    if dataset.n_duels() == 0 {
        return Err(Error::invalid(
            "hyperparameter fitting needs at least one duel",
        ));
    }
    let d = dataset.dim();
    if current.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: current.dim(),
        });
    }
    let mut lower = vec![LOG_LS_RANGE.0; d];
    lower.push(LOG_OS_RANGE.0);
    let mut upper = vec![LOG_LS_RANGE.1; d];
    upper.push(LOG_OS_RANGE.1);

    let mut starts = vec![current.to_vec()];
    for _ in 1..opts.starts.max(1) {
        starts.push(priors.sample(d, rng).to_vec());
    }
    let step = vec![0.5; d + 1];
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|x0| {
            let objective = |theta: &[f64]| {
                hyper_objective(dataset, &KernelHypers::from_vec(theta), priors)
                    .map_or(f64::INFINITY, |v| -v)
            };
            let r = nelder_mead(objective, x0, &step, &lower, &upper, opts.max_evals);
            (r.x, -r.value)
        })
        .collect();
    let best = results
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .reduce(|a, b| if b.1 > a.1 { b } else { a });
    Ok(match best {
        Some((theta, objective)) => HyperFit {
            hypers: KernelHypers::from_vec(&theta),
            objective,
            fallback: false,
        },
        None => {
            log::warn!("all hyperparameter starts failed; using prior medians");
            let hypers = priors.median(d);
            let objective = hyper_objective(dataset, &hypers, priors).unwrap_or(f64::NEG_INFINITY);
            HyperFit {
                hypers,
                objective,
                fallback: true,
            }
        }
    })
}
