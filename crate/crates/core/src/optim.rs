//! Derivative-free box-constrained optimization: Nelder–Mead with projection
//! onto the box, and a Sobol-seeded multistart wrapper.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{sobol_unit, RandomSource};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Minimizes `f` over the box `[lower, upper]` from `x0`.
///
/// The initial simplex offsets each coordinate by `step[i]` (reflected
/// inward at the upper bound). NaN values count as `+∞`. Returns the best
/// point evaluated, never worse than `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_evals: usize,
) -> OptimResult {
    let n = x0.len();
    let mut evals = 0;
    // Past the budget every trial point scores +∞, so no further move is accepted.
    let mut eval = |x: &[f64], evals: &mut usize| {
        if *evals >= max_evals {
            return f64::INFINITY;
        }
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start, lower, upper);
    let f0 = eval(&start, &mut evals);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = start.clone();
        x[i] = if x[i] + step[i] <= upper[i] {
            x[i] + step[i]
        } else {
            x[i] - step[i]
        };
        project(&mut x, lower, upper);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < n + 1 {
        return best_of(simplex, evals);
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-13 * (best.abs() + 1e-13) && spread <= 1e-10 {
            break;
        }
        if spread == 0.0 {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p, lower, upper);
            p
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    if evals >= max_evals {
                        break;
                    }
                    let mut p: Vec<f64> = x_best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + 0.5 * (v - b))
                        .collect();
                    project(&mut p, lower, upper);
                    let v = eval(&p, &mut evals);
                    *vertex = (p, v);
                }
            }
        }
    }
    best_of(simplex, evals)
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>, evals: usize) -> OptimResult {
    let (x, value) = simplex
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("simplex has at least one vertex");
    OptimResult { x, value, evals }
}

/// Budget of the Sobol-seeded multistart maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOptions {
    pub raw_samples: usize,
    pub restarts: usize,
    pub max_evals: usize,
    /// Initial simplex size as a fraction of the (unit) box width.
    pub simplex_scale: f64,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            raw_samples: 1024,
            restarts: 8,
            max_evals: 300,
            simplex_scale: 0.05,
        }
    }
}

/// Maximizes `f` over `[0,1]^dim`: scores `raw_samples` scrambled Sobol
/// points, runs Nelder–Mead from the best `restarts` of them, and returns
/// the best point found. Ties go to the earliest candidate.
pub fn maximize_unit_cube<F>(
    f: F,
    dim: usize,
    opts: &MultiStartOptions,
    rng: &mut RandomSource,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let raw = sobol_unit(opts.raw_samples.max(1), dim, rng.next_seed32())?;
    let scores: Vec<f64> = raw
        .par_iter()
        .map(|x| {
            let v = f(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(opts.restarts.max(1));

    let lower = vec![0.0; dim];
    let upper = vec![1.0; dim];
    let step = vec![opts.simplex_scale; dim];
    let runs: Vec<OptimResult> = order
        .par_iter()
        .map(|&i| {
            let r = nelder_mead(|x| -f(x), &raw[i], &step, &lower, &upper, opts.max_evals);
            OptimResult {
                x: r.x,
                value: -r.value,
                evals: r.evals,
            }
        })
        .collect();
    let evals = raw.len() + runs.iter().map(|r| r.evals).sum::<usize>();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one restart");
    Ok(OptimResult { evals, ..best })
}
