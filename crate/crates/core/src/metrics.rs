//! ROUGE-N/L recall and the LCS order-preservation score.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LCS length by the `O(|a|·|b|)` dynamic program, one row at a time.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram recall against `reference`. A reference with fewer than
/// `n` tokens scores 0.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "rouge_n requires n >= 1");
    if reference.len() < n {
        return 0.0;
    }
    let total = reference.len() - n + 1;
    if candidate.len() < n {
        return 0.0;
    }
    let cand = ngram_counts(candidate, n);
    let matched: usize = ngram_counts(reference, n)
        .iter()
        .map(|(gram, &count)| count.min(cand.get(gram).copied().unwrap_or(0)))
        .sum();
    matched as f64 / total as f64
}

/// LCS recall: `LCS(candidate, reference) / |reference|`.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    lcs_len(candidate, reference) as f64 / reference.len() as f64
}

/// A score in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LcsScore(pub f64);

/// How much of `headline` appears in order in `document`.
pub fn lcs_order_score<T: PartialEq>(headline: &[T], document: &[T]) -> Result<LcsScore> {
    if headline.is_empty() {
        return Err(Error::InvalidArgument("empty headline".into()));
    }
    Ok(LcsScore(lcs_len(headline, document) as f64 / headline.len() as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_3: f64,
    pub rouge_l: f64,
}

impl RougeReport {
    pub fn score<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Self {
        RougeReport {
            rouge_1: rouge_n(candidate, reference, 1),
            rouge_2: rouge_n(candidate, reference, 2),
            rouge_3: rouge_n(candidate, reference, 3),
            rouge_l: rouge_l(candidate, reference),
        }
    }

    /// Macro average; an empty slice averages to all zeros.
    pub fn mean(reports: &[RougeReport]) -> Self {
        if reports.is_empty() {
            return RougeReport::default();
        }
        let n = reports.len() as f64;
        let sum = reports.iter().fold(RougeReport::default(), |acc, r| RougeReport {
            rouge_1: acc.rouge_1 + r.rouge_1,
            rouge_2: acc.rouge_2 + r.rouge_2,
            rouge_3: acc.rouge_3 + r.rouge_3,
            rouge_l: acc.rouge_l + r.rouge_l,
        });
        RougeReport {
            rouge_1: sum.rouge_1 / n,
            rouge_2: sum.rouge_2 / n,
            rouge_3: sum.rouge_3 / n,
            rouge_l: sum.rouge_l / n,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.rouge_1, self.rouge_2, self.rouge_3, self.rouge_l]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub threshold: f64,
    pub high_fraction: f64,
    pub low_fraction: f64,
    pub high_mean: f64,
    pub low_mean: f64,
}

/// Result of [`split_by_lcs`]: indices into the input, grouped.
#[derive(Clone, Debug, PartialEq)]
pub struct LcsSplit {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    pub scores: Vec<f64>,
    pub stats: SplitStats,
}

/// Groups pairs by `lcs_order_score(headline, document)`: strictly above the
/// threshold is high, at or below is low.
pub fn split_by_lcs<T: PartialEq>(pairs: &[(&[T], &[T])], threshold: f64) -> Result<LcsSplit> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let scores = pairs
        .iter()
        .map(|(h, d)| lcs_order_score(h, d).map(|s| s.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(split_scores(scores, threshold))
}

/// [`split_by_lcs`] over precomputed scores.
pub fn split_scores(scores: Vec<f64>, threshold: f64) -> LcsSplit {
    let (high, low): (Vec<usize>, Vec<usize>) =
        (0..scores.len()).partition(|&i| scores[i] > threshold);
    let mean = |idx: &[usize]| {
        if idx.is_empty() {
            0.0
        } else {
            idx.iter().map(|&i| scores[i]).sum::<f64>() / idx.len() as f64
        }
    };
    let n = scores.len().max(1) as f64;
    let stats = SplitStats {
        threshold,
        high_fraction: high.len() as f64 / n,
        low_fraction: low.len() as f64 / n,
        high_mean: mean(&high),
        low_mean: mean(&low),
    };
    LcsSplit {
        high,
        low,
        scores,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lcs_memo(a: &[u8], b: &[u8]) -> usize {
        fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if i == a.len() || j == b.len() {
                return 0;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                1 + go(a, b, i + 1, j + 1, memo)
            } else {
                go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    #[test]
    fn rouge_n_cases() {
        assert!((rouge_n(b"abc", b"abd", 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_n(b"abcd", b"abcd", 3), 1.0);
        assert_eq!(rouge_n(b"abc", b"xyz", 1), 0.0);
        assert_eq!(rouge_n(b"ab", b"ab", 3), 0.0);
        // clipping: candidate repeats do not count twice
        assert_eq!(rouge_n(b"aaaa", b"ab", 1), 0.5);
    }

    #[test]
    fn rouge_l_cases() {
        assert!((rouge_l(b"ac", b"abc") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_l(b"abc", b"abc"), 1.0);
        assert_eq!(rouge_l(b"", b"abc"), 0.0);
        assert_eq!(rouge_l(b"abc", b""), 0.0);
    }

    #[test]
    fn lcs_order_score_cases() {
        assert_eq!(lcs_order_score(b"ace", b"abcde").unwrap().0, 1.0);
        assert_eq!(lcs_order_score(b"xyz", b"abcde").unwrap().0, 0.0);
        assert!(lcs_order_score(b"", b"abc").is_err());
    }

    #[test]
    fn split_cases() {
        let split = split_scores(vec![0.2, 0.3, 0.5, 0.9, 1.0], 0.4);
        assert_eq!(split.high, vec![2, 3, 4]);
        assert!((split.stats.high_fraction - 0.6).abs() < 1e-15);
        assert!((split.stats.low_mean - 0.25).abs() < 1e-15);

        let pairs: Vec<(&[u8], &[u8])> = vec![(b"ab", b"ab"), (b"ab", b"a")];
        let split = split_by_lcs(&pairs, 0.0).unwrap();
        assert_eq!(split.high, vec![0, 1]);
        let split = split_by_lcs(&pairs, 1.0).unwrap();
        assert_eq!(split.low, vec![0, 1]);
        // boundary goes low
        let split = split_by_lcs(&pairs, 0.5).unwrap();
        assert_eq!(split.low, vec![1]);
        assert!(split_by_lcs(&pairs, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn lcs_matches_memoized_oracle(a in prop::collection::vec(0u8..5, 0..12), b in prop::collection::vec(0u8..5, 0..12)) {
            prop_assert_eq!(lcs_len(&a, &b), lcs_memo(&a, &b));
            prop_assert_eq!(lcs_len(&a, &b), lcs_len(&b, &a));
        }

        #[test]
        fn scores_in_unit_interval(a in prop::collection::vec(0u8..6, 1..15), b in prop::collection::vec(0u8..6, 1..15)) {
            for n in 1..=3 {
                let r = rouge_n(&a, &b, n);
                prop_assert!((0.0..=1.0).contains(&r));
            }
            let l = rouge_l(&a, &b);
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert_eq!(l * b.len() as f64, lcs_len(&a, &b) as f64);
            let s = lcs_order_score(&a, &b).unwrap().0;
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn identical_is_perfect(a in prop::collection::vec(0u8..6, 3..15)) {
            for n in 1..=3 {
                prop_assert_eq!(rouge_n(&a, &a, n), 1.0);
            }
        }

        #[test]
        fn order_score_monotone_in_document(h in prop::collection::vec(0u8..4, 1..8), d in prop::collection::vec(0u8..4, 0..10), extra in prop::collection::vec(0u8..4, 0..5)) {
            let before = lcs_order_score(&h, &d).unwrap().0;
            let mut longer = d.clone();
            longer.extend(extra);
            prop_assert!(lcs_order_score(&h, &longer).unwrap().0 >= before);
        }

        #[test]
        fn relabeling_invariance(a in prop::collection::vec(0u8..5, 1..10), b in prop::collection::vec(0u8..5, 3..10)) {
            let relabel = |v: &[u8]| v.iter().map(|x| (x + 3) % 5 + 10).collect::<Vec<u8>>();
            let (ra, rb) = (relabel(&a), relabel(&b));
            prop_assert_eq!(RougeReport::score(&a, &b), RougeReport::score(&ra, &rb));
        }
    }
}
