use ndarray::Array2;

use crate::charset::BLANK;
use crate::error::{Error, Result};

use super::{logaddexp, logsumexp, min_frames};

/// Outcome of the CTC objective for one (logprobs, target) pair.
#[derive(Debug, Clone)]
pub enum CtcLoss {
    /// Target reachable: negative log posterior and its exact gradient with
    /// respect to the per-frame log-probabilities.
    Reachable { loss: f64, grad: Array2<f64> },
    /// Target needs more frames than available; loss is +inf and training
    /// code is expected to skip the item rather than abort.
    UnreachableTarget,
}

impl CtcLoss {
    pub fn loss(&self) -> f64 {
        match self {
            CtcLoss::Reachable { loss, .. } => *loss,
            CtcLoss::UnreachableTarget => f64::INFINITY,
        }
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self, CtcLoss::UnreachableTarget)
    }

    pub fn grad(&self) -> Option<&Array2<f64>> {
        match self {
            CtcLoss::Reachable { grad, .. } => Some(grad),
            CtcLoss::UnreachableTarget => None,
        }
    }
}

fn validate_target(target: &[usize], charset: usize) -> Result<()> {
    for &l in target {
        if l == BLANK {
            return Err(Error::BlankInTarget(l));
        }
        if l >= charset {
            return Err(Error::Parse {
                what: "label index out of charset range",
                input: l.to_string(),
            });
        }
    }
    Ok(())
}

/// Expanded label sequence: blanks interleaved around every target label,
/// `2L + 1` states in total.
fn expand(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &l in target {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

/// Log posterior `log p(target | logprobs)` via the forward recursion only.
///
/// Returns `None` when the target is unreachable in the given number of
/// frames. `logprobs` rows are per-frame log-probabilities over the charset.
pub fn ctc_posterior_log(logprobs: &Array2<f64>, target: &[usize]) -> Result<Option<f64>> {
    let t_len = logprobs.nrows();
    let charset = logprobs.ncols();
    validate_target(target, charset)?;
    if t_len < min_frames(target) {
        return Ok(None);
    }
    if target.is_empty() && t_len == 0 {
        return Ok(Some(0.0));
    }
    let alpha = forward(logprobs, &expand(target));
    let s = alpha.ncols();
    let last = alpha[[t_len - 1, s - 1]];
    let prev = if s >= 2 {
        alpha[[t_len - 1, s - 2]]
    } else {
        f64::NEG_INFINITY
    };
    Ok(Some(logaddexp(last, prev)))
}

fn forward(logprobs: &Array2<f64>, ext: &[usize]) -> Array2<f64> {
    let t_len = logprobs.nrows();
    let s_len = ext.len();
    let mut alpha = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
    alpha[[0, 0]] = logprobs[[0, ext[0]]];
    if s_len > 1 {
        alpha[[0, 1]] = logprobs[[0, ext[1]]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = logaddexp(acc, alpha[[t - 1, s - 1]]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                acc = logaddexp(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + logprobs[[t, ext[s]]];
        }
    }
    alpha
}

/// Backward variables; `beta[t][s]` excludes the emission at frame `t`, so
/// `alpha[t][s] + beta[t][s]` sums to the log posterior at every frame.
fn backward(logprobs: &Array2<f64>, ext: &[usize]) -> Array2<f64> {
    let t_len = logprobs.nrows();
    let s_len = ext.len();
    let mut beta = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
    beta[[t_len - 1, s_len - 1]] = 0.0;
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[[t + 1, s]] + logprobs[[t + 1, ext[s]]];
            if s + 1 < s_len {
                acc = logaddexp(acc, beta[[t + 1, s + 1]] + logprobs[[t + 1, ext[s + 1]]]);
            }
            if s + 2 < s_len && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                acc = logaddexp(acc, beta[[t + 1, s + 2]] + logprobs[[t + 1, ext[s + 2]]]);
            }
            beta[[t, s]] = acc;
        }
    }
    beta
}

/// CTC loss and gradient: `-log` of the summed probability of every
/// alignment that collapses to `target`, by log-space forward-backward over
/// the expanded-label lattice.
pub fn ctc_loss(logprobs: &Array2<f64>, target: &[usize]) -> Result<CtcLoss> {
    let t_len = logprobs.nrows();
    let charset = logprobs.ncols();
    validate_target(target, charset)?;
    if t_len < min_frames(target) {
        return Ok(CtcLoss::UnreachableTarget);
    }
    if t_len == 0 {
        // Empty target over zero frames: probability one by convention.
        return Ok(CtcLoss::Reachable {
            loss: 0.0,
            grad: Array2::zeros((0, charset)),
        });
    }

    let ext = expand(target);
    let s_len = ext.len();
    let alpha = forward(logprobs, &ext);
    let beta = backward(logprobs, &ext);

    let log_z = logaddexp(
        alpha[[t_len - 1, s_len - 1]],
        if s_len >= 2 {
            alpha[[t_len - 1, s_len - 2]]
        } else {
            f64::NEG_INFINITY
        },
    );
    if log_z == f64::NEG_INFINITY {
        // Posterior is exactly zero (some required symbol has -inf
        // probability everywhere); treat like an unreachable target.
        return Ok(CtcLoss::UnreachableTarget);
    }

    let mut grad = Array2::zeros((t_len, charset));
    let mut acc = vec![f64::NEG_INFINITY; charset];
    for t in 0..t_len {
        acc.fill(f64::NEG_INFINITY);
        for s in 0..s_len {
            let g = alpha[[t, s]] + beta[[t, s]];
            if g != f64::NEG_INFINITY {
                acc[ext[s]] = logaddexp(acc[ext[s]], g);
            }
        }
        for c in 0..charset {
            if acc[c] != f64::NEG_INFINITY {
                grad[[t, c]] = -((acc[c] - log_z).exp());
            }
        }
    }

    Ok(CtcLoss::Reachable { loss: -log_z, grad })
}

#[allow(dead_code)]
pub(crate) fn full_posterior_check(logprobs: &Array2<f64>, ext: &[usize]) -> f64 {
    // Every frame's alpha+beta row sums to the same posterior.
    let alpha = forward(logprobs, ext);
    let beta = backward(logprobs, ext);
    let row: Vec<f64> = (0..ext.len()).map(|s| alpha[[0, s]] + beta[[0, s]]).collect();
    logsumexp(&row)
}
