//! Connectionist Temporal Classification: the alignment lattice loss with
//! exact gradients, an exhaustive-enumeration oracle for small instances,
//! and greedy plus prefix-beam decoders.

mod decode;
mod loss;
mod oracle;

pub use decode::{beam_decode, greedy_decode};
pub use loss::{ctc_loss, ctc_posterior_log, CtcLoss};
pub use oracle::brute_force_posterior;

use crate::charset::BLANK;
use crate::error::{Error, Result};

/// A target label sequence: indices into the charset, blank excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if let Some(&b) = labels.iter().find(|&&l| l == BLANK) {
            return Err(Error::BlankInTarget(b));
        }
        Ok(LabelSequence(labels))
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A per-frame alignment path, blanks included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment(pub Vec<usize>);

impl Alignment {
    /// Merges adjacent repeats, then deletes blanks.
    pub fn collapse(&self) -> LabelSequence {
        LabelSequence(collapse(&self.0))
    }
}

/// Canonical CTC collapse: merge adjacent repeats, then remove blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &a in path {
        if prev != Some(a) && a != BLANK {
            out.push(a);
        }
        prev = Some(a);
    }
    out
}

/// Minimum number of frames needed to emit `target`: its length plus one
/// separating blank per adjacent repeated pair.
pub fn min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        b
    } else if b == f64::NEG_INFINITY {
        a
    } else if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: usize = 1;
    const B: usize = 2;

    #[test]
    fn collapse_merges_repeats_then_blanks() {
        // [a a - a] -> "aa"
        assert_eq!(collapse(&[A, A, BLANK, A]), vec![A, A]);
        // [- - -] -> ""
        assert_eq!(collapse(&[BLANK, BLANK, BLANK]), Vec::<usize>::new());
        // repeat-vs-blank distinction
        assert_eq!(collapse(&[A, BLANK, A]), vec![A, A]);
        assert_eq!(collapse(&[A, A]), vec![A]);
    }

    #[test]
    fn collapse_is_idempotent() {
        let seqs: &[&[usize]] = &[&[A, A, BLANK, B, A], &[BLANK], &[], &[B, B, B, A]];
        for s in seqs {
            let once = collapse(s);
            assert_eq!(collapse(&once), once);
        }
    }

    #[test]
    fn min_frames_counts_repeat_separators() {
        assert_eq!(min_frames(&[]), 0);
        assert_eq!(min_frames(&[A]), 1);
        assert_eq!(min_frames(&[A, A]), 3);
        assert_eq!(min_frames(&[A, B, A]), 3);
        assert_eq!(min_frames(&[A, A, A]), 5);
    }

    #[test]
    fn label_sequence_rejects_blank() {
        assert!(LabelSequence::new(vec![A, BLANK]).is_err());
        assert!(LabelSequence::new(vec![A, B]).is_ok());
    }
}
