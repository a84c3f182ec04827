//! Preferential Bayesian optimization with an exact, closed-form knowledge
//! gradient.
//!
//! A latent utility is learned from pairwise comparisons with a Gaussian
//! process under a probit likelihood (Laplace approximation). Duels are
//! selected by the one-shot knowledge gradient, whose look-ahead posterior
//! mean is available in closed form because conditioning a Gaussian on a
//! noisy comparison yields an extended skew normal law.

pub mod acquisition;
pub mod benchmarks;
pub mod dataset;
pub mod error;
pub mod esn;
pub mod experiment;
pub mod kernel;
pub mod laplace;
pub mod optim;
pub mod stats;

pub use acquisition::{
    argmax_posterior_mean, duel_probability, eubo, kg_oneshot, lookahead_mean, next_duel, qlogei,
    AcquisitionConfig, BaseSamples, DuelQuery, DuelStats, Method, Outcome,
};
pub use benchmarks::{
    calibrate_sigma, oracle_compare, test_function, Calibration, OracleConfig, TestFunction,
};
pub use dataset::{Duel, PrefDataset};
pub use error::{Error, Result};
pub use esn::{condition_on_nonneg, esn_cgf, esn_mean, esn_pdf, BivariateGaussian, EsnParams};
pub use experiment::{
    export_case_study, from_jsonl, group_by_config, read_dir, read_run, run_experiment,
    run_experiment_logged, run_seeds, run_to_dir, summarize, to_jsonl, CaseStudy, ExperimentConfig,
    NoiseMode, ResolvedConfig, RunRecord, Summary,
};
pub use kernel::{
    hyperprior_logpdf, kernel_matrix, matern52, GammaPrior, HyperPriors, KernelHypers,
};
pub use laplace::{fit_hypers, fit_map, loglik_terms, HyperFit, HyperFitOptions, LaplacePosterior};
pub use optim::MultiStartOptions;
pub use stats::{BoxDomain, RandomSource};
