//! Fixtures shared by the benchmarks.

use prefkg::stats::sobol_sample;
use prefkg::{
    fit_map, test_function, BoxDomain, KernelHypers, LaplacePosterior, PrefDataset, RandomSource,
};

/// A dataset of `n_duels` noiseless Branin comparisons between Sobol points.
pub fn branin_dataset(n_duels: usize, seed: u64) -> PrefDataset {
    let t = test_function("branin2").expect("registered");
    let dom = t.domain().clone();
    let pts = sobol_sample(
        2 * n_duels,
        &dom.product(&dom),
        &mut RandomSource::new(seed),
    )
    .expect("sobol");
    let mut ds = PrefDataset::new(dom);
    for z in pts.iter().take(n_duels) {
        let (a, b) = (&z[..2], &z[2..]);
        if t.eval_unchecked(a) >= t.eval_unchecked(b) {
            ds.add_comparison(a, b).expect("in domain");
        } else {
            ds.add_comparison(b, a).expect("in domain");
        }
    }
    ds
}

pub fn branin_posterior(n_duels: usize) -> LaplacePosterior {
    let hypers = KernelHypers::new(&[0.3, 0.3], 2.0).expect("positive");
    fit_map(&branin_dataset(n_duels, 0), &hypers).expect("fit")
}

pub fn unit_square() -> BoxDomain {
    BoxDomain::unit(2)
}
