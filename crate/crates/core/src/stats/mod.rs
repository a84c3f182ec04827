//! Numeric primitives shared across the crate.

mod domain;
mod linalg;
pub mod normal;
mod quad;
mod rng;
mod sobol;

pub use domain::BoxDomain;
pub use linalg::{chol_psd, CholFactor, JITTER_ESCALATIONS};
pub use normal::{normal_funcs, NormalFuncs};
pub use quad::integrate_1d;
pub use rng::RandomSource;
pub use sobol::{sobol_sample, sobol_unit, MAX_SOBOL_DIM};
