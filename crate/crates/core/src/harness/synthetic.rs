//! A constructed corpus with a known decision rule.
//!
//! Every sentence places a sense marker immediately before the target word.
//! Sentence 2 always uses a marker of sense A; the pair is `T` exactly when
//! the marker of sentence 1 is also of sense A. Targets include words that
//! split into several sub-tokens.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CharSpan, DepAnnotation, DepToken, Label, LangPair, Side, SplitName, WicPair};
use crate::error::Result;
use crate::subword::Vocabulary;

pub const TARGETS: [&str; 6] = ["mouse", "bank", "spring", "qualify", "plant", "bat"];
pub const SENSE_A: [&str; 3] = ["river", "green", "soft"];
pub const SENSE_B: [&str; 3] = ["money", "steel", "loud"];
pub const FILLERS: [&str; 12] = [
    "the", "a", "we", "saw", "near", "today", "it", "was", "there", "old", "one", "again",
];

/// Vocabulary covering the synthetic corpus; `qualify` and `spring` are
/// split into two pieces.
pub fn synthetic_vocab() -> Vocabulary {
    let mut pieces: Vec<&str> = Vec::new();
    pieces.extend(FILLERS);
    pieces.extend(SENSE_A);
    pieces.extend(SENSE_B);
    pieces.extend([
        "mouse", "bank", "plant", "bat", "quali", "##fy", "spr", "##ing", ".", "null", "nu", "##ll",
    ]);
    Vocabulary::with_default_specials(pieces).expect("synthetic pieces are distinct")
}

fn sentence(rng: &mut ChaCha8Rng, marker: &str, target: &str) -> (String, CharSpan) {
    let mut words: Vec<&str> = (0..rng.random_range(1..=4))
        .map(|_| *FILLERS.choose(rng).unwrap())
        .collect();
    words.push(marker);
    let start = words.iter().map(|w| w.chars().count() + 1).sum::<usize>();
    words.push(target);
    let tail = rng.random_range(0..=3);
    words.extend((0..tail).map(|_| *FILLERS.choose(rng).unwrap()));
    let text = format!("{} .", words.join(" "));
    (text, CharSpan::new(start, start + target.chars().count()))
}

/// `n` labelled pairs with ids `<split>.<lang_pair>.<i>`, alternating
/// `T` and `F`.
pub fn synthetic_pairs(
    n: usize,
    split: SplitName,
    lang_pair: &LangPair,
    seed: u64,
) -> Result<Vec<WicPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let gold = if i % 2 == 0 {
            Label::True
        } else {
            Label::False
        };
        let target = *TARGETS.choose(&mut rng).unwrap();
        let m1 = match gold {
            Label::True => *SENSE_A.choose(&mut rng).unwrap(),
            Label::False => *SENSE_B.choose(&mut rng).unwrap(),
        };
        let m2 = *SENSE_A.choose(&mut rng).unwrap();
        let (sentence1, span1) = sentence(&mut rng, m1, target);
        let (sentence2, span2) = sentence(&mut rng, m2, target);
        let pair = WicPair {
            id: format!("{split}.{lang_pair}.{i}"),
            lang_pair: lang_pair.clone(),
            lemma: Some(target.to_string()),
            pos: Some(if target == "qualify" { "VERB" } else { "NOUN" }.to_string()),
            sentence1,
            sentence2,
            span1,
            span2,
            gold: Some(gold),
        };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// A dependency tree for one synthetic sentence: the target is the root,
/// the marker and the final period attach to it, and every filler attaches
/// to the marker.
pub fn synthetic_annotation(pair: &WicPair, side: Side) -> DepAnnotation {
    let text = pair.sentence(side);
    let target = pair.span(side);
    let mut spans = Vec::new();
    let mut pos = 0;
    for w in text.split(' ') {
        let n = w.chars().count();
        spans.push((w, CharSpan::new(pos, pos + n)));
        pos += n + 1;
    }
    let t = spans
        .iter()
        .position(|(_, s)| *s == target)
        .expect("target is a whole word");
    let tokens = spans
        .iter()
        .enumerate()
        .map(|(i, &(form, span))| {
            let (head, deprel) = if i == t {
                (0, "root")
            } else if i + 1 == t {
                (t + 1, "amod")
            } else if form == "." {
                (t + 1, "punct")
            } else {
                (t, "dep")
            };
            DepToken {
                form: form.to_string(),
                span,
                head,
                deprel: deprel.to_string(),
            }
        })
        .collect();
    DepAnnotation {
        sentence_id: pair.sentence_key(side),
        text: text.to_string(),
        tokens,
    }
}
