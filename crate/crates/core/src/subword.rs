//! WordPiece-style sub-word tokenization with character-offset alignment.
//!
//! Text is first split into words on whitespace; punctuation and CJK
//! ideographs each form a word of their own. Every word is then segmented
//! by greedy longest match, non-initial pieces carrying the continuation
//! marker (`##` by default). When no piece matches, the rest of the word
//! becomes a single unknown token.
//!
//! ```
//! use wic::subword::{Vocabulary, tokenize};
//!
//! let vocab = Vocabulary::with_default_specials(["quali", "##fy", "the"]).unwrap();
//! let tok = tokenize(&vocab, "the qualify");
//! assert_eq!(tok.pieces(&vocab), ["the", "quali", "##fy"]);
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CharSpan;
use crate::error::{dim_err, Error, Result};
use crate::numgrad::Tensor;

pub const DEFAULT_CONTINUATION: &str = "##";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: usize,
    pub sep: usize,
    pub unk: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    pieces: Vec<String>,
    piece_to_id: HashMap<String, usize>,
    specials: SpecialIds,
    continuation: String,
}

const SPECIAL_ROLES: [&str; 4] = ["cls", "sep", "unk", "pad"];

impl Vocabulary {
    /// Builds a vocabulary whose first ids are `[CLS] [SEP] [UNK] [PAD]`.
    pub fn with_default_specials<I, S>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = ["[CLS]", "[SEP]", "[UNK]", "[PAD]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        all.extend(pieces.into_iter().map(Into::into));
        Self::from_pieces(
            all,
            ["[CLS]", "[SEP]", "[UNK]", "[PAD]"],
            DEFAULT_CONTINUATION,
        )
    }

    /// `pieces` in id order; `specials` names the cls, sep, unk and pad
    /// pieces, all of which must be present.
    pub fn from_pieces(
        pieces: Vec<String>,
        specials: [&str; 4],
        continuation: &str,
    ) -> Result<Self> {
        let mut piece_to_id = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Format(format!("vocabulary piece {i} is empty")));
            }
            if piece_to_id.insert(p.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary piece `{p}`")));
            }
        }
        let lookup = |role: &str, name: &str| {
            piece_to_id
                .get(name)
                .copied()
                .ok_or_else(|| Error::Format(format!("special {role} piece `{name}` missing")))
        };
        let ids = SpecialIds {
            cls: lookup("cls", specials[0])?,
            sep: lookup("sep", specials[1])?,
            unk: lookup("unk", specials[2])?,
            pad: lookup("pad", specials[3])?,
        };
        let mut distinct = [ids.cls, ids.sep, ids.unk, ids.pad];
        distinct.sort_unstable();
        if distinct.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("special pieces must be distinct".into()));
        }
        if continuation.is_empty() {
            return Err(Error::Format(
                "continuation marker must be non-empty".into(),
            ));
        }
        Ok(Vocabulary {
            pieces,
            piece_to_id,
            specials: ids,
            continuation: continuation.to_string(),
        })
    }

    /// Parses the vocabulary file format.
    ///
    /// An optional header declares the special pieces and continuation marker:
    ///
    /// ```text
    /// [specials]
    /// cls = <s>
    /// sep = </s>
    /// unk = <unk>
    /// pad = <pad>
    /// continuation = ##
    /// [pieces]
    /// ...
    /// ```
    ///
    /// Declared specials take ids 0..4 in the order cls, sep, unk, pad, then
    /// the listed pieces follow. Without a header every line is a piece in id
    /// order and `[CLS] [SEP] [UNK] [PAD]` must appear among them, which is
    /// how BERT `vocab.txt` files look.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).peekable();
        if lines.peek().map(|l| l.trim()) != Some("[specials]") {
            let pieces = lines
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            return Self::from_pieces(
                pieces,
                ["[CLS]", "[SEP]", "[UNK]", "[PAD]"],
                DEFAULT_CONTINUATION,
            );
        }
        lines.next();
        let mut declared: HashMap<String, String> = HashMap::new();
        let mut continuation = DEFAULT_CONTINUATION.to_string();
        loop {
            let Some(line) = lines.next() else {
                return Err(Error::Format(
                    "vocabulary header without [pieces] section".into(),
                ));
            };
            let line = line.trim();
            if line == "[pieces]" {
                break;
            }
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad vocabulary header line `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "continuation" => continuation = value.to_string(),
                k if SPECIAL_ROLES.contains(&k) => {
                    declared.insert(k.to_string(), value.to_string());
                }
                k => {
                    return Err(Error::Format(format!(
                        "unknown vocabulary header key `{k}`"
                    )))
                }
            }
        }
        let mut names = Vec::with_capacity(4);
        for role in SPECIAL_ROLES {
            let name = declared
                .get(role)
                .ok_or_else(|| Error::Format(format!("vocabulary header lacks `{role}`")))?;
            names.push(name.clone());
        }
        let mut pieces = names.clone();
        pieces.extend(lines.filter(|l| !l.is_empty()).map(str::to_string));
        Self::from_pieces(
            pieces,
            [&names[0], &names[1], &names[2], &names[3]],
            &continuation,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes with a header, so that `parse(to_text())` reproduces the
    /// same ids whenever the specials occupy ids 0..4.
    pub fn to_text(&self) -> String {
        let s = self.specials;
        let mut out = format!(
            "[specials]\ncls = {}\nsep = {}\nunk = {}\npad = {}\ncontinuation = {}\n[pieces]\n",
            self.pieces[s.cls],
            self.pieces[s.sep],
            self.pieces[s.unk],
            self.pieces[s.pad],
            self.continuation
        );
        for (i, p) in self.pieces.iter().enumerate() {
            if !self.is_special(i) {
                out.push_str(p);
                out.push('\n');
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn continuation(&self) -> &str {
        &self.continuation
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.piece_to_id.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn is_special(&self, id: usize) -> bool {
        let s = self.specials;
        id == s.cls || id == s.sep || id == s.unk || id == s.pad
    }
}

/// Token ids of one sentence with the character range each covers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub ids: Vec<usize>,
    /// `None` for `[CLS]`/`[SEP]`-style markers that cover no text.
    pub offsets: Vec<Option<CharSpan>>,
    pub text: String,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Wraps the tokens as `[CLS] tokens [SEP]`; indices shift by one.
    pub fn with_specials(&self, vocab: &Vocabulary) -> TokenizedSentence {
        let s = vocab.specials();
        let mut ids = Vec::with_capacity(self.ids.len() + 2);
        ids.push(s.cls);
        ids.extend_from_slice(&self.ids);
        ids.push(s.sep);
        let mut offsets = Vec::with_capacity(ids.len());
        offsets.push(None);
        offsets.extend_from_slice(&self.offsets);
        offsets.push(None);
        TokenizedSentence {
            ids,
            offsets,
            text: self.text.clone(),
        }
    }

    pub fn pieces<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.ids
            .iter()
            .map(|&i| vocab.piece(i).unwrap_or("?"))
            .collect()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF |
        0x20000..=0x2A6DF | 0x2A700..=0x2CEAF | 0x2F800..=0x2FA1F)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x00A1..=0x00BF | 0x2000..=0x206F | 0x3000..=0x303F | 0xFF01..=0xFF0F |
            0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65)
}

/// Whitespace-delimited words, with punctuation and CJK characters split
/// off as single-character words.
pub fn pre_split(text: &str) -> Vec<CharSpan> {
    let mut words = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        let alone = is_cjk(c) || is_punct(c);
        if c.is_whitespace() || alone {
            if let Some(s) = start.take() {
                words.push(CharSpan::new(s, i));
            }
            if alone {
                words.push(CharSpan::new(i, i + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push(CharSpan::new(s, text.chars().count()));
    }
    words
}

/// Greedy longest-match segmentation. Deterministic; never fails, since
/// unmatched residue becomes an unknown token.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> TokenizedSentence {
    let chars: Vec<char> = text.chars().collect();
    let mut ids = Vec::new();
    let mut offsets = Vec::new();
    let mut buf = String::new();
    for word in pre_split(text) {
        let mut i = word.start;
        while i < word.end {
            let mut matched = None;
            for j in (i + 1..=word.end).rev() {
                buf.clear();
                if i > word.start {
                    buf.push_str(vocab.continuation());
                }
                buf.extend(&chars[i..j]);
                if let Some(id) = vocab.id(&buf) {
                    if !vocab.is_special(id) {
                        matched = Some((id, j));
                        break;
                    }
                }
            }
            match matched {
                Some((id, j)) => {
                    ids.push(id);
                    offsets.push(Some(CharSpan::new(i, j)));
                    i = j;
                }
                None => {
                    ids.push(vocab.specials().unk);
                    offsets.push(Some(CharSpan::new(i, word.end)));
                    i = word.end;
                }
            }
        }
    }
    TokenizedSentence {
        ids,
        offsets,
        text: text.to_string(),
    }
}

/// Indices of every text-bearing token overlapping `span`, ascending.
pub fn align_span(tok: &TokenizedSentence, span: CharSpan) -> Result<Vec<usize>> {
    let idx: Vec<usize> = tok
        .offsets
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o {
            Some(r) if r.overlap(&span) > 0 => Some(i),
            _ => None,
        })
        .collect();
    if idx.is_empty() {
        return Err(Error::Alignment(format!(
            "span {span} of `{}` covers no sub-token",
            tok.text
        )));
    }
    Ok(idx)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    #[default]
    Average,
    Sum,
}

/// Collapses `k` row vectors (a `k×H` matrix) into one `H` vector.
pub fn pool(vectors: &Tensor, mode: PoolingMode) -> Result<Tensor> {
    let (k, h) = match vectors.shape() {
        [k, h] => (*k, *h),
        [h] => (1, *h),
        s => return Err(dim_err!("pool: expected k×H rows, got shape {s:?}")),
    };
    let mut out = vec![0.0; h];
    for r in 0..k {
        for (o, v) in out.iter_mut().zip(vectors.row(r)) {
            *o += v;
        }
    }
    if mode == PoolingMode::Average {
        for o in out.iter_mut() {
            *o /= k as f64;
        }
    }
    Tensor::vector(out)
}

/// Pools the rows of `hidden` selected by `idx`.
pub fn pool_rows(hidden: &Tensor, idx: &[usize], mode: PoolingMode) -> Result<Tensor> {
    if idx.is_empty() {
        return Err(dim_err!("pool: no rows selected"));
    }
    pool(&hidden.select_rows(idx)?, mode)
}
