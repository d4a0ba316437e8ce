use ndarray::Array2;

use crate::error::{Error, Result};

use super::collapse;

/// Largest frame count the exhaustive oracle will enumerate.
pub const ORACLE_MAX_FRAMES: usize = 10;
/// Largest charset the exhaustive oracle will enumerate.
pub const ORACLE_MAX_CHARSET: usize = 5;

/// Exhaustive reference for the CTC posterior: enumerates every one of the
/// `charset^T` frame-label paths, collapses each, and sums the probability of
/// those that collapse to `target`. Intended only as a test oracle; sizes
/// beyond the guard are refused rather than attempted.
pub fn brute_force_posterior(logprobs: &Array2<f64>, target: &[usize]) -> Result<f64> {
    let t = logprobs.nrows();
    let charset = logprobs.ncols();
    if t > ORACLE_MAX_FRAMES || charset > ORACLE_MAX_CHARSET {
        return Err(Error::OracleSizeGuard { t, charset });
    }
    if t == 0 {
        return Ok(if target.is_empty() { 1.0 } else { 0.0 });
    }

    let mut total = 0.0f64;
    let mut path = vec![0usize; t];
    loop {
        let mut logp = 0.0;
        for (frame, &c) in path.iter().enumerate() {
            logp += logprobs[[frame, c]];
        }
        if collapse(&path) == target {
            total += logp.exp();
        }

        // Odometer increment over charset^T.
        let mut pos = 0;
        loop {
            path[pos] += 1;
            if path[pos] < charset {
                break;
            }
            path[pos] = 0;
            pos += 1;
            if pos == t {
                return Ok(total);
            }
        }
    }
}
