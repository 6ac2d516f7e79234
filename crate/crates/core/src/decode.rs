//! Blank-collapse and inference-time decoding of emission matrices.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ctc::{EmissionMatrix, LabelId, TargetSequence, BLANK};
use crate::error::{Error, Result};
use crate::numerics::{log_add, LogProb};

pub const DEFAULT_BEAM_WIDTH: usize = 8;

/// Frame-aligned hypothesis `[δ₁…δ_T]`; blank allowed.
pub type Path = [LabelId];

/// Merges adjacent repeats, then drops blanks.
///
/// `[a, a, −, −, b, −, b]` collapses to `[a, b, b]`.
pub fn collapse(path: &Path) -> TargetSequence {
    let mut out = Vec::with_capacity(path.len());
    let mut prev = None;
    for &label in path {
        if Some(label) != prev && label != BLANK {
            out.push(label);
        }
        prev = Some(label);
    }
    TargetSequence::new(out).expect("blanks removed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMethod {
    Greedy,
    Beam,
}

/// How to turn emissions into a label sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeConfig {
    #[default]
    Greedy,
    Beam { width: usize },
}

impl DecodeConfig {
    pub fn decode(self, y: &EmissionMatrix) -> Result<DecodeResult> {
        match self {
            DecodeConfig::Greedy => Ok(greedy_decode(y)),
            DecodeConfig::Beam { width } => beam_decode(y, width),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub labels: TargetSequence,
    pub score: LogProb,
    pub method: DecodeMethod,
}

/// Lowest label id wins ties, so a fully uncertain frame is blank.
pub fn argmax_path(y: &EmissionMatrix) -> Vec<LabelId> {
    (0..y.frames())
        .map(|t| {
            let row = y.frame(t);
            let mut best = 0;
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = k;
                }
            }
            best as LabelId
        })
        .collect()
}

/// Best-path decoding: per-frame argmax, then collapse.
pub fn greedy_decode(y: &EmissionMatrix) -> DecodeResult {
    let path = argmax_path(y);
    let score: f64 = path
        .iter()
        .enumerate()
        .map(|(t, &l)| y.prob(t, l).ln())
        .sum();
    DecodeResult {
        labels: collapse(&path),
        score: LogProb::clamped(score),
        method: DecodeMethod::Greedy,
    }
}

#[derive(Clone, Copy, Debug)]
struct PrefixMass {
    blank: f64,
    label: f64,
}

impl PrefixMass {
    const ZERO: PrefixMass = PrefixMass {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Keeps the `width` best prefixes. Ties are broken by the prefix itself so
/// the result does not depend on hash order.
fn prune(next: HashMap<Vec<LabelId>, PrefixMass>, width: usize) -> Vec<(Vec<LabelId>, PrefixMass)> {
    let mut beams: Vec<_> = next
        .into_iter()
        .filter(|(_, m)| m.total() > f64::NEG_INFINITY)
        .collect();
    beams.sort_by(|(pa, ma), (pb, mb)| {
        mb.total()
            .partial_cmp(&ma.total())
            .expect("no NaN masses")
            .then_with(|| pa.cmp(pb))
    });
    beams.truncate(width);
    beams
}

/// Prefix beam search without a language model.
///
/// Each prefix carries the mass of paths ending in blank and of paths ending
/// in its last label separately, so that a repeated label is only appended
/// after a blank.
pub fn beam_decode(y: &EmissionMatrix, beam_width: usize) -> Result<DecodeResult> {
    if beam_width == 0 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let log_y = y.log_matrix();
    let labels = y.labels();
    let mut beams: Vec<(Vec<LabelId>, PrefixMass)> = vec![(
        Vec::new(),
        PrefixMass {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];

    for t in 0..y.frames() {
        let frame = log_y.row(t);
        let mut next: HashMap<Vec<LabelId>, PrefixMass> = HashMap::new();
        for (prefix, mass) in &beams {
            let total = mass.total();
            let entry = next.entry(prefix.clone()).or_insert(PrefixMass::ZERO);
            entry.blank = log_add(entry.blank, total + frame[BLANK as usize]);
            if let Some(&last) = prefix.last() {
                // repeated label without a blank stays on the same prefix
                entry.label = log_add(entry.label, mass.label + frame[last as usize]);
            }
            for (c, &lp) in frame.iter().enumerate().take(labels).skip(1) {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let c = c as LabelId;
                let from = if prefix.last() == Some(&c) { mass.blank } else { total };
                let mut extended = prefix.clone();
                extended.push(c);
                let entry = next.entry(extended).or_insert(PrefixMass::ZERO);
                entry.label = log_add(entry.label, from + lp);
            }
        }
        beams = prune(next, beam_width);
    }

    let (best, mass) = beams.into_iter().next().expect("at least the empty prefix survives");
    Ok(DecodeResult {
        labels: TargetSequence::new(best)?,
        score: LogProb::clamped(mass.total()),
        method: DecodeMethod::Beam,
    })
}

/// `1 − y_t(blank)` per frame: how much each input element contributes.
pub fn blank_saliency(y: &EmissionMatrix) -> Vec<f64> {
    (0..y.frames()).map(|t| 1.0 - y.prob(t, BLANK)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::{collapsed_distribution_bruteforce, extend_target};
    use crate::numerics::{seeded_rng, Matrix};
    use proptest::prelude::*;
    use rand::Rng;

    const A: LabelId = 1;
    const B: LabelId = 2;

    fn one_hot(path: &[LabelId], labels: usize) -> EmissionMatrix {
        let mut m = Matrix::zeros(path.len(), labels);
        for (t, &l) in path.iter().enumerate() {
            m[(t, l as usize)] = 1.0;
        }
        EmissionMatrix::new(m).unwrap()
    }

    #[test]
    fn collapse_cases() {
        assert_eq!(collapse(&[A, A, 0, 0, B, 0, B]).labels(), &[A, B, B]);
        assert!(collapse(&[0, 0, 0]).is_empty());
        assert_eq!(collapse(&[A]).labels(), &[A]);
    }

    #[test]
    fn greedy_cases() {
        let y = one_hot(&[0, A, A, 0, B], 3);
        assert_eq!(greedy_decode(&y).labels.labels(), &[A, B]);
        assert_eq!(greedy_decode(&y).score.value(), 0.0);

        let y = EmissionMatrix::from_rows(&[[1.0 / 3.0; 3]; 4]).unwrap();
        assert!(greedy_decode(&y).labels.is_empty());

        let y = EmissionMatrix::from_rows(&[[0.2, 0.7, 0.1], [0.6, 0.3, 0.1], [0.1, 0.5, 0.4]])
            .unwrap();
        assert_eq!(greedy_decode(&y).labels.labels(), &[A, A]);
    }

    #[test]
    fn beam_degenerate_distribution() {
        let y = one_hot(&[A, 0, A, B, B], 3);
        let r = beam_decode(&y, 8).unwrap();
        assert_eq!(r.labels.labels(), &[A, A, B]);
        assert_eq!(r.score.value(), 0.0);
        assert!(beam_decode(&y, 0).is_err());
    }

    #[test]
    fn beam_picks_larger_collapsed_mass() {
        let y = EmissionMatrix::from_rows(&[[0.6, 0.4], [0.6, 0.4]]).unwrap();
        let oracle = collapsed_distribution_bruteforce(&y).unwrap();
        let (best, best_lp) = oracle
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let r = beam_decode(&y, 8).unwrap();
        assert_eq!(&r.labels, best);
        assert!((r.score.value() - best_lp).abs() < 1e-12);
        // greedy takes the all-blank path here
        assert!(greedy_decode(&y).labels.is_empty());
    }

    #[test]
    fn beam_matches_exhaustive_small() {
        let mut rng = seeded_rng(9);
        for _ in 0..200 {
            let frames = rng.gen_range(1..=3);
            let rows: Vec<Vec<f64>> = (0..frames)
                .map(|_| {
                    let a: f64 = rng.gen_range(0.01..1.0);
                    vec![a, 1.0 - a]
                })
                .collect();
            let y = EmissionMatrix::from_rows(&rows).unwrap();
            let oracle = collapsed_distribution_bruteforce(&y).unwrap();
            let best = oracle.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let r = beam_decode(&y, 64).unwrap();
            assert!((oracle[&r.labels] - best).abs() <= 1e-12);
        }
    }

    #[test]
    fn saliency_cases() {
        let y = EmissionMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.25, 0.75]]).unwrap();
        assert_eq!(blank_saliency(&y), vec![0.0, 1.0, 0.75]);
    }

    proptest! {
        #[test]
        fn collapse_has_no_blanks_and_preserves_order(path in prop::collection::vec(0u32..4, 0..30)) {
            let z = collapse(&path);
            prop_assert!(z.labels().iter().all(|&l| l != BLANK));
            // subsequence of the non-blank frames
            let non_blank: Vec<_> = path.iter().copied().filter(|&l| l != BLANK).collect();
            let mut it = non_blank.iter();
            prop_assert!(z.labels().iter().all(|l| it.any(|x| x == l)));
        }

        #[test]
        fn collapse_inverts_extension(target in prop::collection::vec(1u32..4, 0..10)) {
            let ext = extend_target(&target).unwrap();
            let z = collapse(ext.slots());
            prop_assert_eq!(z.labels(), &target[..]);
        }

        #[test]
        fn greedy_is_collapse_of_argmax(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..8)) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            }).collect();
            let y = EmissionMatrix::from_rows(&rows).unwrap();
            // independent two-step route
            let mut path = Vec::new();
            for r in &rows {
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] { best = k; }
                }
                path.push(best as LabelId);
            }
            prop_assert_eq!(greedy_decode(&y).labels, collapse(&path));
        }
    }
}
