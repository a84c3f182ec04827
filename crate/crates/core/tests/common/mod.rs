//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use prefkg::stats::{chol_psd, integrate_1d, normal};
use prefkg::{
    fit_map, BivariateGaussian, BoxDomain, Duel, KernelHypers, LaplacePosterior, PrefDataset,
    RandomSource,
};
use rand_distr::{Distribution, StandardNormal};

pub fn gauss(rng: &mut RandomSource) -> f64 {
    StandardNormal.sample(rng)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and standard error of `x₁` over draws with `x₂ ≥ 0`.
pub fn mc_half_line_mean(
    b: &BivariateGaussian,
    accepted: usize,
    rng: &mut RandomSource,
) -> (f64, f64) {
    let l11 = b.s11.sqrt();
    let l21 = b.s12 / l11;
    let l22 = (b.s22 - l21 * l21).max(0.0).sqrt();
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    while n < accepted {
        let z1 = gauss(rng);
        let z2 = gauss(rng);
        let x2 = b.mu2 + l21 * z1 + l22 * z2;
        if x2 >= 0.0 {
            let x1 = b.mu1 + l11 * z1;
            n += 1;
            sum += x1;
            sq += x1 * x1;
        }
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error of `max(f₁, f₂)`.
pub fn mc_expected_max(
    mu: [f64; 2],
    cov: [[f64; 2]; 2],
    n: usize,
    rng: &mut RandomSource,
) -> (f64, f64) {
    let l11 = cov[0][0].sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let z1 = gauss(rng);
        let z2 = gauss(rng);
        let m = (mu[0] + l11 * z1).max(mu[1] + l21 * z1 + l22 * z2);
        sum += m;
        sq += m * m;
    }
    let mean = sum / n as f64;
    (
        mean,
        ((sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt(),
    )
}

/// Plain Monte Carlo `log E[max(0, max(f₁, f₂) − β)]`.
pub fn mc_log_ei(
    mu: [f64; 2],
    cov: [[f64; 2]; 2],
    beta: f64,
    n: usize,
    rng: &mut RandomSource,
) -> f64 {
    let l11 = cov[0][0].sqrt();
    let l21 = cov[1][0] / l11;
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    let mut sum = 0.0;
    for _ in 0..n {
        let z1 = gauss(rng);
        let z2 = gauss(rng);
        sum += ((mu[0] + l11 * z1).max(mu[1] + l21 * z1 + l22 * z2) - beta).max(0.0);
    }
    (sum / n as f64).ln()
}

/// Look-ahead mean written out directly:
/// `μ(x) + (φ(τ)/Φ(τ))·Cov[f(x),Δ]/√(Var[Δ]+1)`, `τ = E[Δ]/√(Var[Δ]+1)`.
pub fn lookahead_direct(mu_x: f64, cov_x_delta: f64, mean_delta: f64, var_delta: f64) -> f64 {
    let s = (var_delta + 1.0).sqrt();
    let tau = mean_delta / s;
    mu_x + normal::pdf(tau) / normal::cdf(tau) * cov_x_delta / s
}

/// A posterior on `[lo, hi]` fitted to `n_duels` random duels among six points.
pub fn random_posterior_1d(seed: u64, n_duels: usize, lo: f64, hi: f64) -> LaplacePosterior {
    let mut rng = RandomSource::new(seed);
    let domain = BoxDomain::new(vec![lo], vec![hi]).unwrap();
    let mut ds = PrefDataset::new(domain);
    for _ in 0..6 {
        ds.add_point(&[lo + (hi - lo) * rng.uniform()]).unwrap();
    }
    while ds.n_duels() < n_duels {
        let a = (rng.uniform() * 6.0) as usize;
        let b = (rng.uniform() * 6.0) as usize;
        if a != b {
            ds.push_duel(Duel {
                winner: a,
                loser: b,
            })
            .unwrap();
        }
    }
    let h = KernelHypers::new(&[0.1 + 0.3 * rng.uniform()], 0.5 + 3.0 * rng.uniform()).unwrap();
    fit_map(&ds, &h).unwrap()
}

pub fn dataset_1d(xs: &[f64], duels: &[(usize, usize)]) -> PrefDataset {
    let mut ds = PrefDataset::new(BoxDomain::unit(1));
    for x in xs {
        ds.add_point(&[*x]).unwrap();
    }
    for &(winner, loser) in duels {
        ds.push_duel(Duel { winner, loser }).unwrap();
    }
    ds
}

/// log ∫ Π Φ(f_w − f_l) N(f; 0, K) df for duels on at most three points,
/// reduced to the differences u = f₀ − f₁, v = f₁ − f₂.
pub fn exact_log_evidence(k: &DMatrix<f64>, duels: &[(usize, usize)]) -> f64 {
    let n = k.nrows();
    let mut k3 = DMatrix::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            k3[(i, j)] = if i < n && j < n {
                k[(i, j)]
            } else if i == j {
                1.0
            } else {
                0.0
            };
        }
    }
    let a = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
    let s = &a * &k3 * a.transpose();
    let l = chol_psd(&s, 1e-14).unwrap().l();
    let diff = |w: usize, lo: usize, u: f64, v: f64| {
        let val = |i: usize| match i {
            0 => u + v,
            1 => v,
            _ => 0.0,
        };
        val(w) - val(lo)
    };
    let inner = |z1: f64| {
        integrate_1d(
            |z2| {
                let u = l[(0, 0)] * z1;
                let v = l[(1, 0)] * z1 + l[(1, 1)] * z2;
                let lik: f64 = duels
                    .iter()
                    .map(|&(w, lo)| normal::cdf(diff(w, lo, u, v)))
                    .product();
                normal::pdf(z2) * lik
            },
            -9.0,
            9.0,
            1e-12,
        )
        .unwrap()
    };
    integrate_1d(|z1| normal::pdf(z1) * inner(z1), -9.0, 9.0, 1e-11)
        .unwrap()
        .ln()
}

pub struct PassLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl PassLine {
    pub fn print(&self) {
        println!(
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        );
    }
}
