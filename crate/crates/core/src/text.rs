//! Tokenization with number/foreign tags, vocabularies, k-fold duplication
//! and the JSONL corpus reader.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctc::LabelId;
use crate::error::{Error, Result};

pub const BLANK_TOKEN: &str = "<blank>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NUM_TOKEN: &str = "<num>";
pub const FOREIGN_TOKEN: &str = "<foreign>";

pub const BLANK_ID: LabelId = 0;
pub const UNK_ID: LabelId = 1;
pub const NUM_ID: LabelId = 2;
pub const FOREIGN_ID: LabelId = 3;
pub const RESERVED: [&str; 4] = [BLANK_TOKEN, UNK_TOKEN, NUM_TOKEN, FOREIGN_TOKEN];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Character,
    Word,
}

impl TokenMode {
    /// Separator used when rendering tokens back to text.
    pub fn joiner(self) -> &'static str {
        match self {
            TokenMode::Character => "",
            TokenMode::Word => " ",
        }
    }
}

impl std::str::FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "character" | "char" => Ok(TokenMode::Character),
            "word" => Ok(TokenMode::Word),
            other => Err(Error::InvalidArgument(format!("unknown token mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Digit,
    Latin,
    Space,
    Other,
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || (c.is_alphabetic() && ('\u{00C0}'..='\u{024F}').contains(&c))
}

fn classify(c: char) -> CharClass {
    if c.is_ascii_digit() {
        CharClass::Digit
    } else if is_latin_letter(c) {
        CharClass::Latin
    } else if c.is_whitespace() {
        CharClass::Space
    } else {
        CharClass::Other
    }
}

/// Splits one whitespace-free chunk into character tokens with digit and
/// Latin runs replaced by a single tag each.
fn char_tokens(text: &str, out: &mut Vec<String>) {
    let mut prev = CharClass::Space;
    for c in text.chars() {
        let class = classify(c);
        match class {
            CharClass::Digit if prev != CharClass::Digit => out.push(NUM_TOKEN.to_string()),
            CharClass::Latin if prev != CharClass::Latin => out.push(FOREIGN_TOKEN.to_string()),
            CharClass::Digit | CharClass::Latin | CharClass::Space => {}
            CharClass::Other => out.push(c.to_string()),
        }
        prev = class;
    }
}

/// Same substitution inside a word, producing one token.
fn word_token(word: &str) -> String {
    let mut pieces = Vec::new();
    char_tokens(word, &mut pieces);
    pieces.concat()
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Character => {
            let mut out = Vec::new();
            char_tokens(text, &mut out);
            out
        }
        TokenMode::Word => text.split_whitespace().map(word_token).collect(),
    }
}

/// [`tokenize`] over raw bytes, rejecting invalid UTF-8.
pub fn tokenize_bytes(bytes: &[u8], mode: TokenMode) -> Result<Vec<String>> {
    Ok(tokenize(std::str::from_utf8(bytes)?, mode))
}

/// Bijection between tokens and ids. Ids 0..4 are reserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, LabelId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new()).expect("reserved only")
    }
}

impl Vocabulary {
    /// Builds from non-reserved tokens in id order (ids start at 4).
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens.into_iter().map(Into::into));
        Vocabulary::from_id_order(id_to_token)
    }

    fn from_id_order(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < RESERVED.len()
            || id_to_token[..RESERVED.len()].iter().zip(RESERVED).any(|(a, b)| a != b)
        {
            return Err(Error::InvalidArgument(
                "vocabulary must start with the four reserved tokens".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, token) in id_to_token.iter().enumerate() {
            if token.is_empty() || token.contains('\n') {
                return Err(Error::InvalidArgument(format!("bad token at id {id}")));
            }
            if token_to_id.insert(token.clone(), id as LabelId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {token:?}")));
            }
        }
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// Never true: the reserved ids are always present.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn id(&self, token: &str) -> Option<LabelId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: LabelId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// One token per line; line number is the id.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for token in &self.id_to_token {
            writeln!(w, "{token}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let tokens = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        Vocabulary::from_id_order(tokens).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Format(format!("vocabulary file: {m}")),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Vocabulary::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Counts tokens over `texts`; tokens seen at least `min_count` times get ids
/// in frequency-descending order, ties by first occurrence.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], mode: TokenMode, min_count: usize) -> Result<Vocabulary> {
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref(), mode)).collect();
    build_vocab_from_tokens(&tokenized, min_count)
}

/// [`build_vocab`] over already tokenized texts.
pub fn build_vocab_from_tokens<S: AsRef<str>>(texts: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for token in texts.iter().flatten() {
        let token = token.as_ref();
        if RESERVED.contains(&token) {
            continue;
        }
        let entry = counts.entry(token).or_insert_with(|| {
            order += 1;
            (0, order)
        });
        entry.0 += 1;
    }
    let mut kept: Vec<_> = counts.into_iter().filter(|(_, (c, _))| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
}

/// Repeats every element `k` times in place.
pub fn k_fold<T: Clone>(input: &[T], k: usize) -> Result<Vec<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(input
        .iter()
        .flat_map(|x| std::iter::repeat_n(x.clone(), k))
        .collect())
}

/// Unknown tokens map to `<unk>`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<LabelId> {
    tokens
        .iter()
        .map(|t| vocab.id(t.as_ref()).unwrap_or(UNK_ID))
        .collect()
}

/// Renders ids back to text. Reserved ids render as their tag strings; the
/// blank id is rejected.
pub fn decode_ids(ids: &[LabelId], vocab: &Vocabulary, mode: TokenMode) -> Result<String> {
    Ok(id_tokens(ids, vocab)?.join(mode.joiner()))
}

/// Surface tokens for `ids`.
pub fn id_tokens<'v>(ids: &[LabelId], vocab: &'v Vocabulary) -> Result<Vec<&'v str>> {
    ids.iter()
        .map(|&id| {
            if id == BLANK_ID {
                return Err(Error::InvalidArgument("blank id in label sequence".into()));
            }
            vocab.token(id).ok_or(Error::OutOfVocabulary {
                id: id as usize,
                size: vocab.len(),
            })
        })
        .collect()
}

/// One line of a corpus file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub document: String,
    pub headline: String,
}

/// An encoded training pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusPair {
    pub document: Vec<LabelId>,
    pub headline: Vec<LabelId>,
}

/// Reads JSON Lines. Blank lines are skipped; errors carry 1-based line numbers.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Data {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Data {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, value));
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<RawPair>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(read_jsonl(file)?.into_iter().map(|(_, p)| p).collect())
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses an external embedding table: a `count dim` header, then one token
/// and `dim` reals per line.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Data {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let parts: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
    let [count, dim] = parts[..] else {
        return Err(Error::Data {
            line: 1,
            message: "header must be `count dim`".into(),
        });
    };
    let mut out = Vec::with_capacity(count);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data {
                line: idx + 1,
                message: format!("bad value: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Data {
                line: idx + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        out.push((token, values));
    }
    if out.len() != count {
        return Err(Error::Data {
            line: 1,
            message: format!("header announces {count} rows, found {}", out.len()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_cases() {
        assert_eq!(
            tokenize("AB12 甲", TokenMode::Character),
            vec![FOREIGN_TOKEN, NUM_TOKEN, "甲"]
        );
        assert!(tokenize("", TokenMode::Character).is_empty());
        assert_eq!(tokenize("甲乙", TokenMode::Character), vec!["甲", "乙"]);
        assert_eq!(
            tokenize("研究 2024 GPU 3月", TokenMode::Word),
            vec!["研究", NUM_TOKEN, FOREIGN_TOKEN, "<num>月"]
        );
        assert!(tokenize_bytes(&[0xff, 0xfe], TokenMode::Character).is_err());
    }

    #[test]
    fn build_vocab_cases() {
        let v = build_vocab(&["甲甲乙"], TokenMode::Character, 2).unwrap();
        assert!(v.contains("甲"));
        assert!(!v.contains("乙"));

        let v = build_vocab(&["甲乙丙", "乙"], TokenMode::Character, 1).unwrap();
        assert_eq!(&v.tokens()[4..], &["乙", "甲", "丙"]);

        let v = build_vocab::<&str>(&[], TokenMode::Character, 1).unwrap();
        assert_eq!(v.tokens(), &RESERVED);
        assert!(build_vocab(&["x"], TokenMode::Character, 0).is_err());
    }

    #[test]
    fn k_fold_cases() {
        assert_eq!(k_fold(&[1, 2], 2).unwrap(), vec![1, 1, 2, 2]);
        assert_eq!(k_fold(&[1, 2, 3], 1).unwrap(), vec![1, 2, 3]);
        assert!(k_fold::<u32>(&[], 3).unwrap().is_empty());
        assert!(k_fold(&[1], 0).is_err());
    }

    #[test]
    fn encode_decode() {
        let v = build_vocab(&["甲乙丙"], TokenMode::Character, 1).unwrap();
        let ids = encode(&tokenize("丙甲", TokenMode::Character), &v);
        assert_eq!(decode_ids(&ids, &v, TokenMode::Character).unwrap(), "丙甲");
        assert_eq!(encode(&["丁"], &v), vec![UNK_ID]);
        assert_eq!(decode_ids(&[NUM_ID, 4], &v, TokenMode::Character).unwrap(), "<num>甲");
        assert!(decode_ids(&[BLANK_ID], &v, TokenMode::Character).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = build_vocab(&["甲乙 丙"], TokenMode::Word, 1).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("<blank>\n<unk>\n<num>\n<foreign>\n"));
        assert_eq!(Vocabulary::read_from(&buf[..]).unwrap(), v);
        assert!(Vocabulary::read_from(&b"a\nb\n"[..]).is_err());
    }

    #[test]
    fn jsonl_errors_name_the_line() {
        let input = "{\"document\":\"甲\",\"headline\":\"甲\"}\n{\"document\":\"乙\"}\n";
        let err = read_jsonl::<RawPair, _>(input.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Data { line: 2, .. }), "{err}");
    }

    #[test]
    fn embedding_table() {
        let input = "2 3\n甲 0.1 0.2 0.3\n乙 1 2 3\n";
        let rows = read_embeddings(input.as_bytes()).unwrap();
        assert_eq!(rows[1], ("乙".to_string(), vec![1.0, 2.0, 3.0]));
        assert!(read_embeddings("2 3\n甲 0.1 0.2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn k_fold_length(v in prop::collection::vec(0u32..100, 0..50), k in 1usize..6) {
            prop_assert_eq!(k_fold(&v, k).unwrap().len(), k * v.len());
        }

        #[test]
        fn char_tokenize_concatenates(a in "[甲乙丙丁，。]{0,10}", b in "[甲乙丙丁，。]{0,10}") {
            let joined = format!("{a}{b}");
            let mut expected = tokenize(&a, TokenMode::Character);
            expected.extend(tokenize(&b, TokenMode::Character));
            prop_assert_eq!(tokenize(&joined, TokenMode::Character), expected);
        }

        #[test]
        fn encoded_text_has_no_blank(text in "\\PC{0,40}") {
            let v = build_vocab(&[text.as_str()], TokenMode::Character, 1).unwrap();
            let ids = encode(&tokenize(&text, TokenMode::Character), &v);
            prop_assert!(ids.iter().all(|&i| i != BLANK_ID));
        }
    }
}
