use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open range `[start, end)` of Unicode scalar-value indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlap(&self, other: &CharSpan) -> usize {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }

    pub fn shift(&self, by: usize) -> CharSpan {
        CharSpan::new(self.start + by, self.end + by)
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Extracts the characters covered by `span`.
pub fn char_slice(text: &str, span: CharSpan) -> String {
    text.chars().skip(span.start).take(span.len()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LangPair(pub String, pub String);

impl LangPair {
    pub fn new(a: &str, b: &str) -> Self {
        LangPair(a.to_string(), b.to_string())
    }

    pub fn en_en() -> Self {
        Self::new("en", "en")
    }

    pub fn is_multilingual(&self) -> bool {
        self.0 == self.1
    }

    pub fn involves(&self, lang: &str) -> bool {
        self.0 == lang || self.1 == lang
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

impl FromStr for LangPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let is_code =
            |c: &str| (2..=3).contains(&c.len()) && c.chars().all(|ch| ch.is_ascii_lowercase());
        match s.split_once('-') {
            Some((a, b)) if is_code(a) && is_code(b) => Ok(LangPair::new(a, b)),
            _ => Err(Error::Validation(format!(
                "`{s}` is not a language pair like en-fr"
            ))),
        }
    }
}

/// Binary WiC label. Index 0 is `F`, index 1 is `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "F")]
    False,
    #[serde(rename = "T")]
    True,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::False => 0,
            Label::True => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::True
        } else {
            Label::False
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::False => "F",
            Label::True => "T",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" => Ok(Label::True),
            "F" => Ok(Label::False),
            other => Err(Error::Label(format!(
                "unknown tag `{other}`, expected T or F"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    fn from_prefix(s: &str) -> Option<Self> {
        match s {
            "train" | "training" => Some(SplitName::Train),
            "dev" | "development" => Some(SplitName::Dev),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        })
    }
}

/// One sentence pair with its two target-word spans.
#[derive(Clone, Debug, PartialEq)]
pub struct WicPair {
    pub id: String,
    pub lang_pair: LangPair,
    pub lemma: Option<String>,
    pub pos: Option<String>,
    pub sentence1: String,
    pub sentence2: String,
    pub span1: CharSpan,
    pub span2: CharSpan,
    pub gold: Option<Label>,
}

impl WicPair {
    pub fn sentence(&self, side: Side) -> &str {
        match side {
            Side::First => &self.sentence1,
            Side::Second => &self.sentence2,
        }
    }

    pub fn span(&self, side: Side) -> CharSpan {
        match side {
            Side::First => self.span1,
            Side::Second => self.span2,
        }
    }

    pub fn target(&self, side: Side) -> String {
        char_slice(self.sentence(side), self.span(side))
    }

    /// Key used to join per-sentence resources: `<pair_id>.<side>`.
    pub fn sentence_key(&self, side: Side) -> String {
        format!("{}.{}", self.id, side.number())
    }

    pub fn validate(&self) -> Result<()> {
        for side in [Side::First, Side::Second] {
            let text = self.sentence(side);
            let span = self.span(side);
            let n = text.chars().count();
            if span.start >= span.end || span.end > n {
                return Err(Error::Validation(format!(
                    "pair {}: span{} {span} invalid for sentence of {n} chars",
                    self.id,
                    side.number()
                )));
            }
            let target = char_slice(text, span);
            if target.contains('\n') || target.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "pair {}: span{} covers `{}`",
                    self.id,
                    side.number(),
                    target.escape_debug()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    First,
    Second,
}

impl Side {
    pub fn number(self) -> u8 {
        match self {
            Side::First => 1,
            Side::Second => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Side::First),
            2 => Some(Side::Second),
            _ => None,
        }
    }
}

/// All pairs of one split for one language pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub lang_pair: LangPair,
    pub pairs: Vec<WicPair>,
    /// Only the first `dev_subset` pairs are used when set.
    pub dev_subset: Option<usize>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, lang_pair: LangPair, pairs: Vec<WicPair>) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| p.lang_pair != lang_pair) {
            return Err(Error::Validation(format!(
                "pair {} is {} in a {lang_pair} split",
                p.id, p.lang_pair
            )));
        }
        Ok(DatasetSplit {
            name,
            lang_pair,
            pairs,
            dev_subset: None,
        })
    }

    /// Restricts use to the first `n` pairs in file order.
    pub fn with_subset(mut self, n: usize) -> Result<Self> {
        if n > self.pairs.len() {
            return Err(Error::Config(format!(
                "subset of {n} requested from {} pairs",
                self.pairs.len()
            )));
        }
        self.dev_subset = Some(n);
        Ok(self)
    }

    pub fn active(&self) -> &[WicPair] {
        match self.dev_subset {
            Some(n) => &self.pairs[..n],
            None => &self.pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lemma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<String>,
    sentence1: String,
    sentence2: String,
    #[serde(deserialize_with = "de_offset")]
    start1: usize,
    #[serde(deserialize_with = "de_offset")]
    end1: usize,
    #[serde(deserialize_with = "de_offset")]
    start2: usize,
    #[serde(deserialize_with = "de_offset")]
    end2: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GoldRecord {
    id: String,
    tag: String,
}

/// Offsets appear both as numbers and as numeric strings in released data.
fn de_offset<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        N(usize),
        S(String),
    }
    match Raw::deserialize(d)? {
        Raw::N(n) => Ok(n),
        Raw::S(s) => s.trim().parse().map_err(serde::de::Error::custom),
    }
}

/// Split name and language pair encoded in ids such as `training.en-fr.12`.
pub fn parse_pair_id(id: &str) -> Option<(SplitName, LangPair)> {
    let mut it = id.split('.');
    let split = SplitName::from_prefix(it.next()?)?;
    let lp = it.next()?.parse().ok()?;
    Some((split, lp))
}

fn infer_from_filename(path: &Path) -> Option<(SplitName, LangPair)> {
    let name = path.file_name()?.to_str()?;
    parse_pair_id(name)
}

fn read_json_array(path: &Path) -> Result<Vec<serde_json::Value>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        index: 0,
        message: e.to_string(),
    })?;
    match value {
        serde_json::Value::Array(items) => Ok(items),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            index: 0,
            message: "top-level value is not an array".into(),
        }),
    }
}

/// Reads pair records (and optionally their gold tags) in file order.
///
/// Pairs may mix language pairs; the language pair and split of each record
/// come from its id, falling back to the data file name.
pub fn load_records(
    data_path: &Path,
    gold_path: Option<&Path>,
) -> Result<Vec<(SplitName, WicPair)>> {
    let items = read_json_array(data_path)?;
    let fallback = infer_from_filename(data_path);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let rec: PairRecord = serde_json::from_value(item).map_err(|e| Error::Parse {
            path: data_path.to_path_buf(),
            index,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Validation(format!("duplicate pair id {}", rec.id)));
        }
        let (split, lang_pair) = parse_pair_id(&rec.id)
            .or_else(|| fallback.clone())
            .ok_or_else(|| {
                Error::Validation(format!(
                    "pair {}: cannot infer split and language pair from id or file name",
                    rec.id
                ))
            })?;
        let pair = WicPair {
            id: rec.id,
            lang_pair,
            lemma: rec.lemma,
            pos: rec.pos,
            sentence1: rec.sentence1,
            sentence2: rec.sentence2,
            span1: CharSpan::new(rec.start1, rec.end1),
            span2: CharSpan::new(rec.start2, rec.end2),
            gold: None,
        };
        pair.validate()?;
        out.push((split, pair));
    }

    if let Some(gp) = gold_path {
        let tags = load_gold(gp)?;
        let known: HashSet<&str> = out.iter().map(|(_, p)| p.id.as_str()).collect();
        if let Some(extra) = tags.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::Validation(format!(
                "gold tag for unknown pair id {extra}"
            )));
        }
        for (_, p) in out.iter_mut() {
            p.gold = tags.get(&p.id).copied();
        }
    }
    Ok(out)
}

/// Gold tags by pair id.
pub fn load_gold(path: &Path) -> Result<HashMap<String, Label>> {
    let items = read_json_array(path)?;
    let mut tags = HashMap::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            index,
            message,
        };
        let rec: GoldRecord = serde_json::from_value(item).map_err(|e| parse_err(e.to_string()))?;
        let label: Label = rec
            .tag
            .parse()
            .map_err(|e: Error| parse_err(e.to_string()))?;
        if tags.insert(rec.id.clone(), label).is_some() {
            return Err(Error::Validation(format!("duplicate gold id {}", rec.id)));
        }
    }
    Ok(tags)
}

/// Loads one split. Every record must belong to the same split and
/// language pair.
pub fn load_pairs(data_path: &Path, gold_path: Option<&Path>) -> Result<DatasetSplit> {
    let records = load_records(data_path, gold_path)?;
    let (name, lang_pair) = match records.first() {
        Some((s, p)) => (*s, p.lang_pair.clone()),
        None => infer_from_filename(data_path).unwrap_or((SplitName::Test, LangPair::en_en())),
    };
    if let Some((_, p)) = records
        .iter()
        .find(|(s, p)| *s != name || p.lang_pair != lang_pair)
    {
        return Err(Error::Validation(format!(
            "pair {} does not belong to split {name}.{lang_pair}; use load_mixed for mixed files",
            p.id
        )));
    }
    DatasetSplit::new(
        name,
        lang_pair,
        records.into_iter().map(|(_, p)| p).collect(),
    )
}

/// Loads a file that mixes language pairs, grouping records into one split
/// per (split, language pair) in order of first appearance.
pub fn load_mixed(data_path: &Path, gold_path: Option<&Path>) -> Result<Vec<DatasetSplit>> {
    let mut splits: Vec<DatasetSplit> = Vec::new();
    for (name, pair) in load_records(data_path, gold_path)? {
        match splits
            .iter_mut()
            .find(|s| s.name == name && s.lang_pair == pair.lang_pair)
        {
            Some(s) => s.pairs.push(pair),
            None => splits.push(DatasetSplit::new(name, pair.lang_pair.clone(), vec![pair])?),
        }
    }
    Ok(splits)
}

/// Writes pairs in the record schema, plus gold tags for labelled pairs.
pub fn write_pairs(pairs: &[WicPair], data_path: &Path, gold_path: Option<&Path>) -> Result<()> {
    let records: Vec<PairRecord> = pairs
        .iter()
        .map(|p| PairRecord {
            id: p.id.clone(),
            lemma: p.lemma.clone(),
            pos: p.pos.clone(),
            sentence1: p.sentence1.clone(),
            sentence2: p.sentence2.clone(),
            start1: p.span1.start,
            end1: p.span1.end,
            start2: p.span2.start,
            end2: p.span2.end,
        })
        .collect();
    write_json(data_path, &records)?;
    if let Some(gp) = gold_path {
        let gold: Vec<GoldRecord> = pairs
            .iter()
            .filter_map(|p| {
                p.gold.map(|g| GoldRecord {
                    id: p.id.clone(),
                    tag: g.to_string(),
                })
            })
            .collect();
        write_json(gp, &gold)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
