//! WiC sentence pairs, gold labels, split bookkeeping and CoNLL-U
//! dependency annotations.
//!
//! Pair files are JSON arrays of records with the fields `id`, `lemma`,
//! `pos`, `sentence1`, `sentence2`, `start1`, `end1`, `start2`, `end2`.
//! Offsets count Unicode scalar values. Gold files are parallel arrays of
//! `{"id", "tag"}` with tag `T` or `F`. Ids of the form
//! `<split>.<l1>-<l2>.<n>` carry the split and language pair.

mod conllu;
mod pairs;

pub use conllu::{find_target_token, load_conllu, parse_conllu, DepAnnotation, DepToken};
pub use pairs::{
    char_slice, load_gold, load_mixed, load_pairs, load_records, parse_pair_id, write_pairs,
    CharSpan, DatasetSplit, Label, LangPair, Side, SplitName, WicPair,
};

/// Column order of result tables: multilingual pairs, then cross-lingual.
pub const REPORT_LANG_PAIRS: [&str; 9] = [
    "en-en", "zh-zh", "fr-fr", "ru-ru", "ar-ar", "en-zh", "en-fr", "en-ru", "en-ar",
];

/// Released split sizes per language pair: (train, dev, test).
pub fn released_split_sizes(lang_pair: &LangPair) -> (Option<usize>, Option<usize>, usize) {
    if lang_pair == &LangPair::en_en() {
        (Some(8000), Some(1000), 1000)
    } else if lang_pair.is_multilingual() {
        (None, Some(1000), 1000)
    } else {
        (None, None, 1000)
    }
}

/// Number of dev pairs used during development: the first half.
pub const DEV_HALF: usize = 500;
