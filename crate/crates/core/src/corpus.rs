//! Raw corpus → vocabularies and encoded training pairs.
//!
//! Documents are tokenized in the configured mode, truncated, then k-folded.
//! Headlines are always character tokens.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctc::{required_frames, LabelId};
use crate::error::{Error, Result};
use crate::text::{build_vocab, build_vocab_from_tokens, encode, k_fold, tokenize, CorpusPair, RawPair, TokenMode, Vocabulary, UNK_ID};

/// Training-time truncation applied to character-mode documents by default.
pub const DEFAULT_TRUNCATE: usize = 55;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub mode: TokenMode,
    pub k: usize,
    pub min_count: usize,
    /// Keep only the first `n` document tokens (before k-fold).
    pub truncate: Option<usize>,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            mode: TokenMode::Character,
            k: 1,
            min_count: 1,
            truncate: Some(DEFAULT_TRUNCATE),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub pairs: usize,
    pub oov_rate: f64,
    pub infeasible: usize,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: PrepareConfig,
    pub input_vocab: Vocabulary,
    pub output_vocab: Vocabulary,
    pub ids: Vec<String>,
    pub pairs: Vec<CorpusPair>,
    pub stats: PrepareStats,
}

/// Document tokens before k-fold, after truncation.
pub fn document_tokens(text: &str, mode: TokenMode, truncate: Option<usize>) -> Vec<String> {
    let mut tokens = tokenize(text, mode);
    if let Some(n) = truncate {
        tokens.truncate(n);
    }
    tokens
}

pub fn encode_document(text: &str, vocab: &Vocabulary, cfg: &PrepareConfig) -> Result<Vec<LabelId>> {
    k_fold(&encode(&document_tokens(text, cfg.mode, cfg.truncate), vocab), cfg.k)
}

pub fn encode_headline(text: &str, vocab: &Vocabulary) -> Vec<LabelId> {
    encode(&tokenize(text, TokenMode::Character), vocab)
}

/// Builds both vocabularies from `raw` and encodes every pair.
///
/// `min_count` applies to the input side only; every headline character gets
/// an output label.
pub fn prepare(raw: &[RawPair], cfg: &PrepareConfig) -> Result<Prepared> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let docs: Vec<Vec<String>> = raw
        .iter()
        .map(|p| document_tokens(&p.document, cfg.mode, cfg.truncate))
        .collect();
    let input_vocab = build_vocab_from_tokens(&docs, cfg.min_count)?;
    let heads: Vec<&str> = raw.iter().map(|p| p.headline.as_str()).collect();
    let output_vocab = build_vocab(&heads, TokenMode::Character, 1)?;

    let mut pairs = Vec::with_capacity(raw.len());
    let mut ids = Vec::with_capacity(raw.len());
    let (mut tokens, mut unknown, mut infeasible) = (0usize, 0usize, 0usize);
    for (i, p) in raw.iter().enumerate() {
        let document = encode_document(&p.document, &input_vocab, cfg)?;
        let headline = encode_headline(&p.headline, &output_vocab);
        tokens += document.len();
        unknown += document.iter().filter(|&&id| id == UNK_ID).count();
        if document.is_empty() || required_frames(&headline) > document.len() {
            infeasible += 1;
        }
        ids.push(p.id.clone().unwrap_or_else(|| i.to_string()));
        pairs.push(CorpusPair { document, headline });
    }
    Ok(Prepared {
        config: *cfg,
        input_vocab,
        output_vocab,
        ids,
        stats: PrepareStats {
            pairs: pairs.len(),
            oov_rate: if tokens == 0 { 0.0 } else { unknown as f64 / tokens as f64 },
            infeasible,
        },
        pairs,
    })
}

const CORPUS_MAGIC: &[u8; 4] = b"CTCC";
const CORPUS_VERSION: u32 = 1;

/// Writes encoded pairs: `"CTCC" | u32 version | u32 count`, then per pair
/// `u32 id_len | id | u32 doc_len | u32 ids | u32 head_len | u32 ids`.
pub fn write_encoded<W: Write>(mut w: W, ids: &[String], pairs: &[CorpusPair]) -> Result<()> {
    let u32_le = |v: usize| (v as u32).to_le_bytes();
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&u32_le(pairs.len()))?;
    for (id, pair) in ids.iter().zip(pairs) {
        w.write_all(&u32_le(id.len()))?;
        w.write_all(id.as_bytes())?;
        for seq in [&pair.document, &pair.headline] {
            w.write_all(&u32_le(seq.len()))?;
            for &v in seq.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Format("truncated encoded corpus".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_encoded<R: Read>(mut r: R) -> Result<(Vec<String>, Vec<CorpusPair>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != CORPUS_MAGIC {
        return Err(Error::Format("not an encoded corpus".into()));
    }
    let version = cur.u32()?;
    if version != CORPUS_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: CORPUS_VERSION,
        });
    }
    let count = cur.u32()? as usize;
    let mut ids = Vec::with_capacity(count.min(1 << 20));
    let mut pairs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = cur.u32()? as usize;
        let id = String::from_utf8(cur.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
        let mut read_seq = || -> Result<Vec<LabelId>> {
            let n = cur.u32()? as usize;
            (0..n).map(|_| cur.u32()).collect()
        };
        let document = read_seq()?;
        let headline = read_seq()?;
        ids.push(id);
        pairs.push(CorpusPair { document, headline });
    }
    if cur.pos != buf.len() {
        return Err(Error::Format("trailing bytes in encoded corpus".into()));
    }
    Ok((ids, pairs))
}

pub fn save_encoded(path: &Path, ids: &[String], pairs: &[CorpusPair]) -> Result<()> {
    let mut buf = Vec::new();
    write_encoded(&mut buf, ids, pairs)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_encoded(path: &Path) -> Result<(Vec<String>, Vec<CorpusPair>)> {
    read_encoded(std::fs::File::open(path)?)
}
