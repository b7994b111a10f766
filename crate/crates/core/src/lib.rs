//! Word-in-context (WiC) disambiguation.
//!
//! Given two sentences that share a target word, decide whether the word is
//! used in the same sense in both. Two strategies are provided:
//!
//! * **fine-tuning**: a transformer encoder topped by a span classification
//!   head ([`spanhead`]) that attends only to the two target spans;
//! * **feature extraction**: a frozen encoder ([`encoder`]) produces
//!   target-word embeddings, optionally enriched with dependency head and
//!   dependent embeddings ([`features`]), which feed a logistic regression or
//!   a two-layer MLP ([`classifiers`]).
//!
//! Everything is differentiated by the small reverse-mode engine in
//! [`numgrad`] and checked against central finite differences.
//! [`harness`] ties the pieces into experiments that emit per-language-pair
//! accuracy tables.

pub mod checkpoint;
pub mod classifiers;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod features;
pub mod harness;
pub mod numgrad;
pub mod spanhead;
pub mod subword;

pub use error::{Error, Result};

// The guide under book/ is compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/subwords.md")]
    mod subwords {}
    #[doc = include_str!("../../../book/src/span_head.md")]
    mod span_head {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
