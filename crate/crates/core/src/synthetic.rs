//! Synthetic extraction corpora with a known order-preserving answer.
//!
//! Documents are 20 units over a 20-symbol alphabet. Between 3 and 8 units
//! come from a designated salient subset; the headline is those units in
//! document order. In the [`SyntheticTask::Bigram`] variant every unit is a
//! two-character word, so each salient unit contributes two output labels.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::seeded_rng;
use crate::text::RawPair;

/// Ten heavenly stems followed by ten earthly branches.
pub const SYMBOLS: [char; 20] = [
    '甲', '乙', '丙', '丁', '戊', '己', '庚', '辛', '壬', '癸', '子', '丑', '寅', '卯', '辰', '巳',
    '午', '未', '申', '酉',
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticTask {
    /// Character units; use character-mode preparation.
    Salient,
    /// Two-character word units; use word-mode preparation.
    Bigram,
}

impl std::str::FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "salient" => Ok(SyntheticTask::Salient),
            "bigram" => Ok(SyntheticTask::Bigram),
            other => Err(Error::InvalidArgument(format!("unknown synthetic task {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub task: SyntheticTask,
    pub doc_len: usize,
    /// The first `salient` units of the alphabet are salient.
    pub salient: usize,
    pub min_marked: usize,
    pub max_marked: usize,
}

impl SyntheticConfig {
    pub fn new(task: SyntheticTask) -> Self {
        SyntheticConfig {
            task,
            doc_len: 20,
            salient: 6,
            min_marked: 3,
            max_marked: 8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.salient == 0 || self.salient >= SYMBOLS.len() {
            return Err(Error::InvalidArgument("salient subset must be a proper subset".into()));
        }
        if self.min_marked > self.max_marked || self.max_marked > self.doc_len {
            return Err(Error::InvalidArgument("marked-token range does not fit the document".into()));
        }
        Ok(())
    }

    /// Surface form of unit `i`.
    pub fn unit(&self, i: usize) -> String {
        match self.task {
            SyntheticTask::Salient => SYMBOLS[i].to_string(),
            // stem/branch pairs with a fixed offset keep the 20 words distinct
            SyntheticTask::Bigram => format!("{}{}", SYMBOLS[i], SYMBOLS[(i + 7) % SYMBOLS.len()]),
        }
    }

    fn separator(&self) -> &'static str {
        match self.task {
            SyntheticTask::Salient => "",
            SyntheticTask::Bigram => " ",
        }
    }
}

/// `count` pairs from `seed`. Ids are `syn-<n>`.
pub fn generate(cfg: &SyntheticConfig, count: usize, seed: u64) -> Result<Vec<RawPair>> {
    cfg.validate()?;
    let mut rng = seeded_rng(seed);
    let background = SYMBOLS.len() - cfg.salient;
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let marked = rng.gen_range(cfg.min_marked..=cfg.max_marked);
        let mut is_marked = vec![false; cfg.doc_len];
        for pos in sample(&mut rng, cfg.doc_len, marked) {
            is_marked[pos] = true;
        }
        let mut doc = Vec::with_capacity(cfg.doc_len);
        let mut head = Vec::with_capacity(marked);
        for &m in &is_marked {
            let unit = if m {
                let u = cfg.unit(rng.gen_range(0..cfg.salient));
                head.push(u.clone());
                u
            } else {
                cfg.unit(cfg.salient + rng.gen_range(0..background))
            };
            doc.push(unit);
        }
        out.push(RawPair {
            id: Some(format!("syn-{n}")),
            document: doc.join(cfg.separator()),
            headline: head.concat(),
        });
    }
    Ok(out)
}
