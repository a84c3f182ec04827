//! Owen-scrambled Sobol points, backed by `sobol_burley`.

use crate::error::{Error, Result};

use super::{BoxDomain, RandomSource};

/// Largest supported point dimension. Covers the one-shot knowledge-gradient
/// search space `4d` for `d ≤ 8`.
pub const MAX_SOBOL_DIM: usize = 32;

const BLOCK: usize = 1 << 16;

/// `n` scrambled Sobol points in `[0,1)^dim` for the given scramble seed.
///
/// Sequences longer than 2^16 are built from consecutive blocks with
/// independent scrambles.
pub fn sobol_unit(n: usize, dim: usize, seed: u32) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("sobol sample size must be at least 1"));
    }
    if dim == 0 || dim > MAX_SOBOL_DIM {
        return Err(Error::invalid(format!(
            "sobol dimension {dim} outside 1..={MAX_SOBOL_DIM}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let block = (i / BLOCK) as u32;
        let index = (i % BLOCK) as u32;
        let block_seed = seed.wrapping_add(block.wrapping_mul(0x9E37_79B9));
        out.push(
            (0..dim as u32)
                .map(|d| f64::from(sobol_burley::sample(index, d, block_seed)))
                .collect(),
        );
    }
    Ok(out)
}

/// `n` scrambled Sobol points inside `domain`; the scramble is drawn from `rng`.
pub fn sobol_sample(n: usize, domain: &BoxDomain, rng: &mut RandomSource) -> Result<Vec<Vec<f64>>> {
    let seed = rng.next_seed32();
    Ok(sobol_unit(n, domain.dim(), seed)?
        .into_iter()
        .map(|u| domain.from_unit(&u))
        .collect())
}
