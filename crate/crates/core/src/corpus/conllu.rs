//! Minimal CoNLL-U reader and writer.
//!
//! Only the columns needed for head/dependent lookup are kept: `FORM`,
//! `HEAD` and `DEPREL`. Character offsets are recovered by matching token
//! forms against the `# text` comment from left to right.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::pairs::{CharSpan, Side, WicPair};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepToken {
    pub form: String,
    pub span: CharSpan,
    /// 1-based index of the governing token; 0 marks the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepAnnotation {
    pub sentence_id: String,
    pub text: String,
    pub tokens: Vec<DepToken>,
}

impl DepAnnotation {
    /// 0-based index of the head of token `i`, or `None` for the root.
    pub fn head_of(&self, i: usize) -> Option<usize> {
        match self.tokens[i].head {
            0 => None,
            h => Some(h - 1),
        }
    }

    /// 0-based indices of the direct children of token `i`.
    pub fn dependents_of(&self, i: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.head == i + 1)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let mut prev_end = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.head > n {
                return Err(Error::Format(format!(
                    "{}: token {} has head {} beyond {n} tokens",
                    self.sentence_id,
                    i + 1,
                    t.head
                )));
            }
            if t.span.start < prev_end || t.span.is_empty() {
                return Err(Error::Format(format!(
                    "{}: token {} offsets {} overlap or are empty",
                    self.sentence_id,
                    i + 1,
                    t.span
                )));
            }
            prev_end = t.span.end;
        }
        Ok(())
    }

    /// Renders the annotation as one CoNLL-U sentence block.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# sent_id = {}", self.sentence_id);
        let _ = writeln!(out, "# text = {}", self.text);
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                t.form,
                t.head,
                t.deprel
            );
        }
        out.push('\n');
        out
    }
}

pub fn load_conllu(path: &Path) -> Result<BTreeMap<String, DepAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text)
}

pub fn parse_conllu(input: &str) -> Result<BTreeMap<String, DepAnnotation>> {
    let mut out = BTreeMap::new();
    let mut block: Vec<&str> = Vec::new();
    let mut anonymous = 0usize;
    for line in input.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !block.is_empty() {
                let ann = parse_block(&block, &mut anonymous)?;
                if out.contains_key(&ann.sentence_id) {
                    return Err(Error::Format(format!(
                        "duplicate sent_id {}",
                        ann.sentence_id
                    )));
                }
                out.insert(ann.sentence_id.clone(), ann);
                block.clear();
            }
        } else {
            block.push(line);
        }
    }
    Ok(out)
}

struct RawToken<'a> {
    id: usize,
    form: &'a str,
    head: usize,
    deprel: &'a str,
}

fn parse_block(lines: &[&str], anonymous: &mut usize) -> Result<DepAnnotation> {
    let mut sent_id = None;
    let mut text = None;
    let mut raw = Vec::new();
    for line in lines {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "sent_id" => sent_id = Some(value.trim().to_string()),
                    // keep everything after "= " verbatim so offsets stay exact
                    "text" => text = Some(value.strip_prefix(' ').unwrap_or(value).to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Format(format!(
                "expected 10 tab-separated columns, got {} in `{line}`",
                cols.len()
            )));
        }
        // multiword ranges and empty nodes carry no head of their own
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let num = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad {what} `{s}` in `{line}`")))
        };
        raw.push(RawToken {
            id: num(cols[0], "token id")?,
            form: cols[1],
            head: num(cols[6], "head")?,
            deprel: cols[7],
        });
    }

    let sentence_id = sent_id.unwrap_or_else(|| {
        *anonymous += 1;
        format!("#{anonymous}")
    });
    for (i, t) in raw.iter().enumerate() {
        if t.id != i + 1 {
            return Err(Error::Format(format!(
                "{sentence_id}: token ids not contiguous at `{}`",
                t.id
            )));
        }
    }
    let text = text.ok_or_else(|| {
        Error::Alignment(format!(
            "{sentence_id}: no `# text` comment to recover offsets from"
        ))
    })?;

    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0;
    let mut tokens = Vec::with_capacity(raw.len());
    for t in &raw {
        while cursor < chars.len() && chars[cursor].is_whitespace() {
            cursor += 1;
        }
        let form: Vec<char> = t.form.chars().collect();
        let start = find_from(&chars, &form, cursor).ok_or_else(|| {
            Error::Alignment(format!(
                "{sentence_id}: token {} `{}` not found at or after character {cursor}",
                t.id, t.form
            ))
        })?;
        let span = CharSpan::new(start, start + form.len());
        cursor = span.end;
        tokens.push(DepToken {
            form: t.form.to_string(),
            span,
            head: t.head,
            deprel: t.deprel.to_string(),
        });
    }
    let ann = DepAnnotation {
        sentence_id,
        text,
        tokens,
    };
    ann.validate()?;
    Ok(ann)
}

fn find_from(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

/// Index of the token overlapping the target span the most; ties go to the
/// leftmost token.
pub fn find_target_token(pair: &WicPair, side: Side, ann: &DepAnnotation) -> Result<usize> {
    let span = pair.span(side);
    let mut best: Option<(usize, usize)> = None;
    for (i, t) in ann.tokens.iter().enumerate() {
        let ov = t.span.overlap(&span);
        if ov > 0 && best.is_none_or(|(_, b)| ov > b) {
            best = Some((i, ov));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| {
        Error::Alignment(format!(
            "pair {} side {}: target span {span} overlaps no token of {}",
            pair.id,
            side.number(),
            ann.sentence_id
        ))
    })
}
