//! MCAR missingness injection: an exact count of positions drawn uniformly
//! without replacement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Columns must keep at least this many observed entries after injection.
pub const MIN_OBSERVED_PER_COLUMN: usize = 2;
const MAX_ATTEMPTS: usize = 100;

/// Complete ground truth next to the same matrix with injected holes.
#[derive(Debug, Clone)]
pub struct GroundTruthPair {
    pub truth: DataMatrix,
    pub observed: DataMatrix,
    /// Row-major sorted list of injected positions.
    pub injected_positions: Vec<(usize, usize)>,
}

/// Number of entries masked for a given fraction: `floor(fraction * n * p)`.
///
/// A relative slack of a few ulps absorbs products such as `0.7 * 10` that
/// land a hair below the integer they denote.
pub fn missing_count(fraction: f64, n_entries: usize) -> usize {
    let exact = fraction * n_entries as f64;
    (exact * (1.0 + 4.0 * f64::EPSILON)).floor() as usize
}

pub fn inject_missing(m: &DataMatrix, fraction: f64, seed: u64) -> Result<GroundTruthPair> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "missing fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let k = m.missing_count();
    if k > 0 {
        return Err(Error::Injection(format!(
            "input already has {k} missing entries"
        )));
    }
    let (n, p) = m.shape();
    let total = n * p;
    let count = missing_count(fraction, total);
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {total} entries masks nothing"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut flat = rand::seq::index::sample(&mut rng, total, count).into_vec();
        flat.sort_unstable();
        let mut per_col = vec![0usize; p];
        for &idx in &flat {
            per_col[idx % p] += 1;
        }
        if per_col.iter().any(|&mis| n - mis < MIN_OBSERVED_PER_COLUMN) {
            continue;
        }
        let mut observed = m.clone();
        let positions: Vec<(usize, usize)> = flat.iter().map(|&i| (i / p, i % p)).collect();
        for &(r, c) in &positions {
            observed.mark_missing(r, c);
        }
        return Ok(GroundTruthPair {
            truth: m.clone(),
            observed,
            injected_positions: positions,
        });
    }
    Err(Error::Injection(format!(
        "every one of {MAX_ATTEMPTS} draws left a column with fewer than \
         {MIN_OBSERVED_PER_COLUMN} observed entries"
    )))
}
