//! Sliding-window headline generation for documents longer than the
//! training context: decode several overlapping windows, keep the candidate
//! sharing the most tokens with the start of the document.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::ctc::LabelId;
use crate::decode::{blank_saliency, DecodeConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::par;
use crate::text::{k_fold, tokenize, TokenMode, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
    pub max_windows: usize,
    pub scan_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: 55,
            stride: 5,
            max_windows: 20,
            scan_len: 150,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 || self.max_windows == 0 {
            return Err(Error::InvalidArgument(
                "window_len, stride and max_windows must be at least 1".into(),
            ));
        }
        if self.scan_len < self.window_len {
            return Err(Error::InvalidArgument("scan_len must be at least window_len".into()));
        }
        Ok(())
    }

    /// Exclusive bound on window start offsets for a document of `len`.
    fn start_limit(&self, len: usize) -> usize {
        len.min(self.scan_len - self.window_len + 1)
    }

    /// Number of windows [`windows`] yields for a document of `len` elements.
    pub fn window_count(&self, len: usize) -> usize {
        if len == 0 {
            return 0;
        }
        let limit = self.start_limit(len);
        self.max_windows.min((limit - 1) / self.stride + 1)
    }
}

/// Windows starting at `0, stride, 2·stride, …`, clipped to the document end.
/// Starts stay inside the scan region and below the document length.
pub fn windows<'a, T>(document: &'a [T], cfg: &WindowConfig) -> Vec<(usize, &'a [T])> {
    (0..cfg.window_count(document.len()))
        .map(|i| {
            let start = i * cfg.stride;
            let end = (start + cfg.window_len).min(document.len());
            (start, &document[start..end])
        })
        .collect()
}

/// Size of the multiset intersection of `headline` and `prefix`.
pub fn overlap<T: Eq + Hash>(headline: &[T], prefix: &[T]) -> usize {
    let mut available: HashMap<&T, usize> = HashMap::new();
    for t in prefix {
        *available.entry(t).or_insert(0) += 1;
    }
    headline
        .iter()
        .filter(|t| match available.get_mut(t) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Index and overlap of the candidate sharing the most tokens with `prefix`.
/// The earliest candidate wins ties.
pub fn select_headline<T: Eq + Hash>(candidates: &[Vec<T>], prefix: &[T]) -> Result<(usize, usize)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate headlines".into()));
    }
    let mut best = (0, overlap(&candidates[0], prefix));
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let o = overlap(c, prefix);
        if o > best.1 {
            best = (i, o);
        }
    }
    Ok(best)
}

/// Maps input-side ids to the output labels that spell the same characters,
/// so window candidates can be compared with the document.
#[derive(Clone, Debug)]
pub struct TokenBridge {
    spellings: Vec<Vec<LabelId>>,
}

impl TokenBridge {
    pub fn new(input: &Vocabulary, output: &Vocabulary) -> Self {
        let spellings = input
            .tokens()
            .iter()
            .enumerate()
            .map(|(id, token)| {
                if id < crate::text::RESERVED.len() {
                    return output.id(token).filter(|&o| o >= 2).into_iter().collect();
                }
                tokenize(token, TokenMode::Character)
                    .iter()
                    .filter_map(|c| output.id(c))
                    .collect()
            })
            .collect();
        TokenBridge { spellings }
    }

    /// Identity bridge for models whose input and output vocabularies coincide.
    pub fn identity(size: usize) -> Self {
        TokenBridge {
            spellings: (0..size as LabelId).map(|i| if i >= 2 { vec![i] } else { vec![] }).collect(),
        }
    }

    pub fn spell(&self, ids: &[LabelId]) -> Vec<LabelId> {
        ids.iter()
            .flat_map(|&i| self.spellings.get(i as usize).into_iter().flatten().copied())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub offset: usize,
    pub labels: Vec<LabelId>,
    pub overlap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub headline: Vec<LabelId>,
    pub overlap: usize,
    pub window: usize,
    pub candidates: Vec<Candidate>,
    /// `1 − P(blank)` per frame of the winning window.
    pub saliency: Vec<f64>,
}

/// Decodes every window of `document_ids` and selects one headline.
///
/// Windows are taken over the document before k-fold duplication; each
/// window is duplicated `k` times before entering the network.
pub fn summarize_document(
    params: &ModelParams,
    document_ids: &[LabelId],
    bridge: &TokenBridge,
    k: usize,
    cfg: &WindowConfig,
    decode: DecodeConfig,
) -> Result<Summary> {
    cfg.validate()?;
    if document_ids.is_empty() {
        return Ok(Summary {
            headline: Vec::new(),
            overlap: 0,
            window: 0,
            candidates: Vec::new(),
            saliency: Vec::new(),
        });
    }
    let wins = windows(document_ids, cfg);
    let decoded = par::map_ordered(&wins, |(_, ids)| -> Result<_> {
        let input = k_fold(ids, k)?;
        let y = params.emissions(&input)?;
        let labels = decode.decode(&y)?.labels.into_inner();
        Ok((labels, blank_saliency(&y)))
    });
    let decoded = decoded.into_iter().collect::<Result<Vec<_>>>()?;

    let scan = &document_ids[..document_ids.len().min(cfg.scan_len)];
    let prefix = bridge.spell(scan);
    let labels: Vec<Vec<LabelId>> = decoded.iter().map(|(l, _)| l.clone()).collect();
    let (best, best_overlap) = select_headline(&labels, &prefix)?;
    let candidates = wins
        .iter()
        .zip(&labels)
        .map(|((offset, _), l)| Candidate {
            offset: *offset,
            labels: l.clone(),
            overlap: overlap(l, &prefix),
        })
        .collect();
    let (headline, saliency) = decoded.into_iter().nth(best).expect("index from select");
    Ok(Summary {
        headline,
        overlap: best_overlap,
        window: best,
        candidates,
        saliency,
    })
}
