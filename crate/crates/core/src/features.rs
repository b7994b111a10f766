//! Frozen-encoder features for a sentence pair.
//!
//! * target concatenation: `[pool(target₁); pool(target₂)]`, `D = 2H`;
//! * syntax-incorporated: per sentence `[target; head; dependents]`, then
//!   both sentences concatenated, `D = 6H`. A missing head or an empty
//!   dependent set is filled with the embedding of the word "null".
//!
//! The two sentences of a pair are encoded independently.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{find_target_token, DepAnnotation, Label, Side, WicPair};
use crate::encoder::{HiddenStates, PrecomputedStore, ToyEncoder};
use crate::error::{dim_err, Error, Result};
use crate::numgrad::Tensor;
use crate::subword::{
    align_span, pool, pool_rows, tokenize, PoolingMode, TokenizedSentence, Vocabulary,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    TargetConcat,
    Syntax,
}

impl FeatureVariant {
    /// Feature dimension for hidden size `h`.
    pub fn dim(self, h: usize) -> usize {
        match self {
            FeatureVariant::TargetConcat => 2 * h,
            FeatureVariant::Syntax => 6 * h,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Tensor,
    pub pair_id: String,
    pub variant: FeatureVariant,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// How the embeddings of several dependents are merged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependentCombine {
    #[default]
    Sum,
    Average,
}

pub fn build_target_concat(
    h1: &HiddenStates,
    h2: &HiddenStates,
    span1: &[usize],
    span2: &[usize],
    pooling: PoolingMode,
    pair_id: &str,
) -> Result<FeatureVector> {
    if h1.hidden_size() != h2.hidden_size() {
        return Err(dim_err!(
            "hidden sizes {} and {} differ",
            h1.hidden_size(),
            h2.hidden_size()
        ));
    }
    let t1 = pool_rows(h1.matrix(), span1, pooling)?;
    let t2 = pool_rows(h2.matrix(), span2, pooling)?;
    Ok(FeatureVector {
        values: Tensor::concat(&[&t1, &t2])?,
        pair_id: pair_id.to_string(),
        variant: FeatureVariant::TargetConcat,
    })
}

/// `[target; head; dependents]` for one sentence, `3H` values.
///
/// `tok` is the tokenization the rows of `h` correspond to; dependency
/// tokens are mapped onto it through their character offsets.
pub fn build_syntax_sentence(
    h: &HiddenStates,
    tok: &TokenizedSentence,
    ann: &DepAnnotation,
    target_token: usize,
    pooling: PoolingMode,
    combine: DependentCombine,
    null: &Tensor,
) -> Result<Tensor> {
    if tok.len() != h.token_count() {
        return Err(Error::Alignment(format!(
            "{} tokens against {} hidden rows",
            tok.len(),
            h.token_count()
        )));
    }
    if null.len() != h.hidden_size() {
        return Err(dim_err!(
            "null embedding has {} values, H is {}",
            null.len(),
            h.hidden_size()
        ));
    }
    if target_token >= ann.tokens.len() {
        return Err(Error::Alignment(format!(
            "{}: target token {target_token} beyond {} tokens",
            ann.sentence_id,
            ann.tokens.len()
        )));
    }
    let word = |i: usize| -> Result<Tensor> {
        let idx = align_span(tok, ann.tokens[i].span).map_err(|e| {
            Error::Alignment(format!(
                "{}: token `{}`: {e}",
                ann.sentence_id, ann.tokens[i].form
            ))
        })?;
        pool_rows(h.matrix(), &idx, pooling)
    };

    let target = word(target_token)?;
    let head = match ann.head_of(target_token) {
        Some(i) => word(i)?,
        None => null.clone(),
    };
    let deps = ann.dependents_of(target_token);
    let dep = if deps.is_empty() {
        null.clone()
    } else {
        let rows: Vec<Tensor> = deps.iter().map(|&i| word(i)).collect::<Result<_>>()?;
        let stacked = Tensor::from_rows(&rows.iter().map(|r| r.data()).collect::<Vec<_>>())?;
        let mode = match combine {
            DependentCombine::Sum => PoolingMode::Sum,
            DependentCombine::Average => PoolingMode::Average,
        };
        pool(&stacked, mode)?
    };
    Tensor::concat(&[&target, &head, &dep])
}

pub fn build_syntax_pair(s1: &Tensor, s2: &Tensor, pair_id: &str) -> Result<FeatureVector> {
    if s1.len() != s2.len() || !s1.len().is_multiple_of(3) {
        return Err(dim_err!(
            "sentence vectors of length {} and {} cannot form a syntax pair",
            s1.len(),
            s2.len()
        ));
    }
    Ok(FeatureVector {
        values: Tensor::concat(&[s1, s2])?,
        pair_id: pair_id.to_string(),
        variant: FeatureVariant::Syntax,
    })
}

/// Where frozen hidden states come from.
#[derive(Clone, Copy)]
pub enum StateSource<'a> {
    Encoder(&'a ToyEncoder),
    Store(&'a PrecomputedStore),
}

impl StateSource<'_> {
    pub fn hidden_size(&self) -> usize {
        match self {
            StateSource::Encoder(e) => e.hidden_size(),
            StateSource::Store(s) => s.hidden_size(),
        }
    }
}

/// Builds feature vectors for pairs from one frozen state source.
pub struct FeatureExtractor<'a> {
    source: StateSource<'a>,
    vocab: &'a Vocabulary,
    pub pooling: PoolingMode,
    pub combine: DependentCombine,
    null: OnceLock<Tensor>,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        source: StateSource<'a>,
        vocab: &'a Vocabulary,
        pooling: PoolingMode,
        combine: DependentCombine,
    ) -> Self {
        FeatureExtractor {
            source,
            vocab,
            pooling,
            combine,
            null: OnceLock::new(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.source.hidden_size()
    }

    fn states(&self, key: (&str, Side), text: &str) -> Result<(HiddenStates, TokenizedSentence)> {
        let tok = tokenize(self.vocab, text).with_specials(self.vocab);
        let h = match self.source {
            StateSource::Encoder(enc) => enc.encode(&tok.ids)?,
            StateSource::Store(store) => {
                let h = store.lookup(key.0, key.1).ok_or_else(|| {
                    Error::Validation(format!(
                        "store has no states for {}.{}",
                        key.0,
                        key.1.number()
                    ))
                })?;
                if h.token_count() != tok.len() {
                    return Err(Error::Alignment(format!(
                        "{}.{}: store holds {} rows but the sentence has {} tokens",
                        key.0,
                        key.1.number(),
                        h.token_count(),
                        tok.len()
                    )));
                }
                h
            }
        };
        Ok((h, tok))
    }

    /// Hidden states and tokenization of one side of a pair.
    pub fn sentence_states(
        &self,
        pair: &WicPair,
        side: Side,
    ) -> Result<(HiddenStates, TokenizedSentence)> {
        self.states((&pair.id, side), pair.sentence(side))
    }

    /// Pooled embedding of the word "null" encoded on its own; computed once.
    pub fn null_embedding(&self) -> Result<&Tensor> {
        if let Some(t) = self.null.get() {
            return Ok(t);
        }
        let (h, tok) = self.states((crate::encoder::NULL_PAIR_ID, Side::First), "null")?;
        let idx: Vec<usize> = (0..tok.len())
            .filter(|&i| tok.offsets[i].is_some())
            .collect();
        let v = pool_rows(h.matrix(), &idx, self.pooling)?;
        Ok(self.null.get_or_init(|| v))
    }

    pub fn target_concat(&self, pair: &WicPair) -> Result<FeatureVector> {
        let (h1, t1) = self.sentence_states(pair, Side::First)?;
        let (h2, t2) = self.sentence_states(pair, Side::Second)?;
        let s1 = align_span(&t1, pair.span1)?;
        let s2 = align_span(&t2, pair.span2)?;
        build_target_concat(&h1, &h2, &s1, &s2, self.pooling, &pair.id)
    }

    /// Target concatenation from one joint encoding of both sentences.
    /// Needs a toy encoder; stores hold separately encoded sentences only.
    pub fn joint_target_concat(&self, pair: &WicPair) -> Result<FeatureVector> {
        let StateSource::Encoder(enc) = self.source else {
            return Err(Error::Config(
                "joint feature encoding needs a toy encoder".into(),
            ));
        };
        let t1 = tokenize(self.vocab, &pair.sentence1);
        let t2 = tokenize(self.vocab, &pair.sentence2);
        let (h, layout) = enc.encode_joint(&t1.ids, &t2.ids, self.vocab.specials())?;
        let s1: Vec<usize> = align_span(&t1, pair.span1)?
            .iter()
            .map(|i| i + layout.first_shift)
            .collect();
        let s2: Vec<usize> = align_span(&t2, pair.span2)?
            .iter()
            .map(|i| i + layout.second_shift)
            .collect();
        build_target_concat(&h, &h, &s1, &s2, self.pooling, &pair.id)
    }

    pub fn syntax_sentence(
        &self,
        pair: &WicPair,
        side: Side,
        ann: &DepAnnotation,
    ) -> Result<Tensor> {
        if ann.text != pair.sentence(side) {
            return Err(Error::Alignment(format!(
                "annotation {} text differs from sentence {} of pair {}",
                ann.sentence_id,
                side.number(),
                pair.id
            )));
        }
        let (h, tok) = self.sentence_states(pair, side)?;
        let target = find_target_token(pair, side, ann)?;
        let null = self.null_embedding()?;
        build_syntax_sentence(&h, &tok, ann, target, self.pooling, self.combine, null)
    }

    pub fn syntax(
        &self,
        pair: &WicPair,
        ann1: &DepAnnotation,
        ann2: &DepAnnotation,
    ) -> Result<FeatureVector> {
        let s1 = self.syntax_sentence(pair, Side::First, ann1)?;
        let s2 = self.syntax_sentence(pair, Side::Second, ann2)?;
        build_syntax_pair(&s1, &s2, &pair.id)
    }
}

/// One line of a feature cache.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedFeature {
    pub pair_id: String,
    pub label: Option<Label>,
    pub values: Tensor,
}

/// Writes `D=<dim>` then `pair_id TAB label TAB values` per pair, with `?`
/// for unlabelled pairs.
pub fn save_feature_cache(path: &Path, rows: &[CachedFeature]) -> Result<()> {
    let dim = rows.first().map(|r| r.values.len()).unwrap_or(0);
    let mut out = format!("D={dim}\n");
    for r in rows {
        if r.values.len() != dim {
            return Err(dim_err!(
                "feature {} has {} values, cache D={dim}",
                r.pair_id,
                r.values.len()
            ));
        }
        let label = r.label.map(|l| l.as_str()).unwrap_or("?");
        let _ = write!(out, "{}\t{label}\t", r.pair_id);
        for (i, v) in r.values.data().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_feature_cache(path: &Path) -> Result<Vec<CachedFeature>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let dim: usize = header
        .strip_prefix("D=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("{}: bad header `{header}`", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format(format!("{}:{}: {m}", path.display(), n + 2));
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        let [id, label, values] = cols[..] else {
            return Err(bad("expected pair_id, label and values"));
        };
        let label = match label {
            "?" => None,
            l => Some(
                l.parse::<Label>()
                    .map_err(|_| bad("label must be T, F or ?"))?,
            ),
        };
        let values: Vec<f64> = values
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("unparsable value"))?;
        if values.len() != dim {
            return Err(bad(&format!(
                "{} values, header says D={dim}",
                values.len()
            )));
        }
        rows.push(CachedFeature {
            pair_id: id.to_string(),
            label,
            values: Tensor::vector(values)?,
        });
    }
    Ok(rows)
}
