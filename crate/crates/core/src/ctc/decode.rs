use std::collections::BTreeMap;

use ndarray::Array2;

use crate::charset::BLANK;

use super::{collapse, logaddexp};

/// Best-path decoding: per-frame argmax (lowest index wins ties) followed by
/// collapse. Fast but ignores probability mass split across alignments.
pub fn greedy_decode(logprobs: &Array2<f64>) -> Vec<usize> {
    let path: Vec<usize> = logprobs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (i, &v) in row.iter().enumerate() {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

#[derive(Clone, Copy)]
struct PrefixScore {
    /// Log probability of the prefix with paths ending in blank.
    blank: f64,
    /// Log probability of the prefix with paths ending in its last symbol.
    nonblank: f64,
}

impl PrefixScore {
    fn empty() -> Self {
        PrefixScore {
            blank: f64::NEG_INFINITY,
            nonblank: f64::NEG_INFINITY,
        }
    }

    fn total(&self) -> f64 {
        logaddexp(self.blank, self.nonblank)
    }
}

/// Prefix beam search over collapsed label sequences.
///
/// Each live prefix carries separate blank/non-blank ending masses so that
/// repeats and blank-separated repeats merge correctly. Pruning and the final
/// pick order by total log probability, breaking ties by lexicographically
/// smaller prefix, so the result is deterministic.
pub fn beam_decode(logprobs: &Array2<f64>, width: usize) -> Vec<usize> {
    assert!(width > 0, "beam width must be positive");
    let charset = logprobs.ncols();

    let mut beam: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
    beam.insert(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            nonblank: f64::NEG_INFINITY,
        },
    );

    for row in logprobs.rows() {
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, score) in &beam {
            for c in 0..charset {
                let lp = row[c];
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                if c == BLANK {
                    let entry = next.entry(prefix.clone()).or_insert_with(PrefixScore::empty);
                    entry.blank = logaddexp(entry.blank, score.total() + lp);
                } else if prefix.last() == Some(&c) {
                    // Same symbol again without a blank: stays one symbol.
                    let entry = next.entry(prefix.clone()).or_insert_with(PrefixScore::empty);
                    entry.nonblank = logaddexp(entry.nonblank, score.nonblank + lp);
                    // A blank separated the repeat: the prefix grows.
                    let mut grown = prefix.clone();
                    grown.push(c);
                    let entry = next.entry(grown).or_insert_with(PrefixScore::empty);
                    entry.nonblank = logaddexp(entry.nonblank, score.blank + lp);
                } else {
                    let mut grown = prefix.clone();
                    grown.push(c);
                    let entry = next.entry(grown).or_insert_with(PrefixScore::empty);
                    entry.nonblank = logaddexp(entry.nonblank, score.total() + lp);
                }
            }
        }

        let mut candidates: Vec<(Vec<usize>, PrefixScore)> = next.into_iter().collect();
        candidates.sort_by(|a, b| {
            b.1.total()
                .partial_cmp(&a.1.total())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        candidates.truncate(width);
        beam = candidates.into_iter().collect();
    }

    let mut best: Option<(Vec<usize>, f64)> = None;
    for (prefix, score) in &beam {
        let total = score.total();
        let better = match &best {
            None => true,
            Some((bp, bv)) => total > *bv || (total == *bv && prefix < bp),
        };
        if better {
            best = Some((prefix.clone(), total));
        }
    }
    best.map(|(p, _)| p).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    const A: usize = 1;
    const B: usize = 2;

    #[test]
    fn greedy_collapses_argmax_path() {
        let lp = arr2(&[
            [0.1f64.ln(), 0.8f64.ln(), 0.1f64.ln()],
            [0.1f64.ln(), 0.8f64.ln(), 0.1f64.ln()],
            [0.8f64.ln(), 0.1f64.ln(), 0.1f64.ln()],
            [0.1f64.ln(), 0.1f64.ln(), 0.8f64.ln()],
        ]);
        assert_eq!(greedy_decode(&lp), vec![A, B]);
    }

    #[test]
    fn greedy_breaks_ties_toward_lower_index() {
        let lp = arr2(&[[0.5f64.ln(), 0.5f64.ln()]]);
        assert_eq!(greedy_decode(&lp), Vec::<usize>::new());
    }

    #[test]
    fn beam_finds_mass_split_across_alignments() {
        // Classic counterexample to best-path decoding: per frame
        // p(blank)=0.6, p(a)=0.4 over two frames. Greedy yields "" with
        // path mass 0.36 while p("a") = 0.64.
        let lp = arr2(&[[0.6f64.ln(), 0.4f64.ln()], [0.6f64.ln(), 0.4f64.ln()]]);
        assert_eq!(greedy_decode(&lp), Vec::<usize>::new());
        assert_eq!(beam_decode(&lp, 4), vec![A]);
    }

    #[test]
    fn beam_width_one_matches_greedy_here() {
        let lp = arr2(&[
            [0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()],
            [0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()],
        ]);
        assert_eq!(beam_decode(&lp, 1), greedy_decode(&lp));
    }

    #[test]
    fn beam_merges_blank_separated_repeats() {
        // Force the path a - a: "aa" must beat "a".
        let lp = arr2(&[
            [0.05f64.ln(), 0.95f64.ln()],
            [0.95f64.ln(), 0.05f64.ln()],
            [0.05f64.ln(), 0.95f64.ln()],
        ]);
        assert_eq!(beam_decode(&lp, 8), vec![A, A]);
    }

    #[test]
    fn beam_posterior_agrees_with_exact_posterior_ranking() {
        use crate::ctc::ctc_posterior_log;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = rng.gen_range(2..5);
            let c = rng.gen_range(2..4);
            let mut lp = Array2::zeros((t, c));
            for mut row in lp.rows_mut() {
                let mut vals: Vec<f64> = (0..c).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = vals.iter().sum();
                for v in &mut vals {
                    *v = (*v / s).ln();
                }
                for (dst, src) in row.iter_mut().zip(&vals) {
                    *dst = *src;
                }
            }
            let picked = beam_decode(&lp, 16);
            let picked_post = ctc_posterior_log(&lp, &picked).unwrap().unwrap();
            let greedy = greedy_decode(&lp);
            if greedy != picked {
                let greedy_post = ctc_posterior_log(&lp, &greedy).unwrap().unwrap();
                assert!(
                    picked_post >= greedy_post - 1e-12,
                    "beam pick worse than greedy: {picked_post} vs {greedy_post}"
                );
            }
        }
    }
}
