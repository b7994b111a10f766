//! Frozen features, a classifier trained on en-en, zero-shot evaluation on
//! every other language pair.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};

use super::config::{ClassifierKind, ExperimentConfig, Strategy};
use super::report::{evaluate, Prediction};
use super::{ensure_zero_shot, ExperimentData};
use crate::classifiers::{train_lr, train_mlp, LrModel, MlpModel};
use crate::corpus::{DepAnnotation, Label, Side, WicPair};
use crate::error::{Error, Result};
use crate::features::{CachedFeature, FeatureExtractor, FeatureVector, StateSource};
use crate::numgrad::Tensor;
use crate::subword::Vocabulary;

/// Language excluded from syntax-enriched features for lack of parses.
pub const SYNTAX_EXCLUDED_LANG: &str = "ar";

#[derive(Clone, Debug, PartialEq)]
pub enum TrainedClassifier {
    Lr(LrModel),
    Mlp(MlpModel),
}

impl TrainedClassifier {
    pub fn predict(&self, e: &Tensor) -> Result<Label> {
        match self {
            TrainedClassifier::Lr(m) => m.predict(e),
            TrainedClassifier::Mlp(m) => m.predict(e),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            TrainedClassifier::Lr(m) => m.save(path),
            TrainedClassifier::Mlp(m) => m.save(path),
        }
    }
}

/// Why a pair produced no feature vector.
fn skip_reason(
    strategy: Strategy,
    pair: &WicPair,
    annotations: &BTreeMap<String, DepAnnotation>,
) -> Option<String> {
    if !strategy.is_syntax() {
        return None;
    }
    if pair.lang_pair.involves(SYNTAX_EXCLUDED_LANG) {
        return Some(format!(
            "{}: no dependency parses for {}",
            pair.id, pair.lang_pair
        ));
    }
    [Side::First, Side::Second]
        .into_iter()
        .map(|s| pair.sentence_key(s))
        .find(|k| !annotations.contains_key(k))
        .map(|k| format!("{}: no annotation for sentence {k}", pair.id))
}

/// Feature vector of one pair, or `None` when it has to be skipped.
pub fn pair_features(
    ex: &FeatureExtractor<'_>,
    strategy: Strategy,
    joint: bool,
    pair: &WicPair,
    annotations: &BTreeMap<String, DepAnnotation>,
) -> Result<std::result::Result<FeatureVector, String>> {
    if let Some(reason) = skip_reason(strategy, pair, annotations) {
        return Ok(Err(reason));
    }
    let f = if strategy.is_syntax() {
        let a1 = &annotations[&pair.sentence_key(Side::First)];
        let a2 = &annotations[&pair.sentence_key(Side::Second)];
        ex.syntax(pair, a1, a2)?
    } else if joint {
        ex.joint_target_concat(pair)?
    } else {
        ex.target_concat(pair)?
    };
    Ok(Ok(f))
}

#[derive(Clone, Debug)]
pub struct FeatureOutcome {
    pub classifier: TrainedClassifier,
    pub feature_dim: usize,
    pub train_losses: Vec<f64>,
    pub dev_accuracy: Option<f64>,
    pub predictions: Vec<Prediction>,
    /// One message per skipped pair.
    pub skipped: Vec<String>,
}

/// Features of every usable pair, with skip messages for the rest.
pub fn collect_features<'p>(
    ex: &FeatureExtractor<'_>,
    cfg: &ExperimentConfig,
    pairs: &'p [WicPair],
    annotations: &BTreeMap<String, DepAnnotation>,
    skipped: &mut Vec<String>,
) -> Result<Vec<(&'p WicPair, FeatureVector)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        match pair_features(ex, cfg.strategy, cfg.joint_features, p, annotations)? {
            Ok(f) => out.push((p, f)),
            Err(reason) => {
                warn!("skipping {reason}");
                skipped.push(reason);
            }
        }
    }
    Ok(out)
}

pub fn run_feature_experiment(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    vocab: &Vocabulary,
    source: StateSource<'_>,
) -> Result<FeatureOutcome> {
    let kind = cfg
        .strategy
        .classifier()
        .ok_or_else(|| Error::Config("fine-tuning is not a feature experiment".into()))?;
    ensure_zero_shot(&data.train)?;
    let ex = FeatureExtractor::new(source, vocab, cfg.pooling, cfg.dependent_combine);
    let system = cfg.system_label();
    let mut skipped = Vec::new();

    let train = collect_features(
        &ex,
        cfg,
        data.train.active(),
        &data.annotations,
        &mut skipped,
    )?;
    if train.is_empty() {
        return Err(Error::DegenerateData("no usable training pairs".into()));
    }
    let feature_dim = train[0].1.dim();
    info!(
        "{} training vectors of dimension {feature_dim}",
        train.len()
    );
    let x: Vec<Tensor> = train.iter().map(|(_, f)| f.values.clone()).collect();
    let y: Vec<Label> = train
        .iter()
        .map(|(p, _)| {
            p.gold.ok_or_else(|| {
                Error::Validation(format!("training pair {} has no gold label", p.id))
            })
        })
        .collect::<Result<_>>()?;
    let regime = cfg.regime();
    let (classifier, train_losses) = match kind {
        ClassifierKind::Lr => {
            let fit = train_lr(&x, &y, &regime)?;
            (TrainedClassifier::Lr(fit.model), fit.epoch_losses)
        }
        ClassifierKind::Mlp => {
            let fit = train_mlp(&x, &y, &regime)?;
            (TrainedClassifier::Mlp(fit.model), fit.epoch_losses)
        }
    };
    info!(
        "classifier trained for {} epochs, final loss {:.6}",
        train_losses.len(),
        train_losses.last().copied().unwrap_or(f64::NAN)
    );

    let dev_accuracy = match &data.dev {
        Some(dev) => {
            let feats = collect_features(&ex, cfg, dev.active(), &data.annotations, &mut skipped)?;
            let mut pred = Vec::new();
            let mut gold = Vec::new();
            for (p, f) in &feats {
                if let Some(g) = p.gold {
                    pred.push(classifier.predict(&f.values)?);
                    gold.push(g);
                }
            }
            let acc = if gold.is_empty() {
                None
            } else {
                Some(evaluate(&pred, &gold)?)
            };
            if let Some(a) = acc {
                info!("dev accuracy {a:.4}");
            }
            acc
        }
        None => None,
    };

    let mut predictions = Vec::new();
    for split in &data.test {
        let feats = collect_features(&ex, cfg, split.active(), &data.annotations, &mut skipped)?;
        for (p, f) in feats {
            predictions.push(Prediction {
                system: system.clone(),
                pair_id: p.id.clone(),
                lang_pair: p.lang_pair.to_string(),
                gold: p.gold,
                predicted: classifier.predict(&f.values)?,
            });
        }
    }
    Ok(FeatureOutcome {
        classifier,
        feature_dim,
        train_losses,
        dev_accuracy,
        predictions,
        skipped,
    })
}

/// Feature-cache rows for `pairs`; skipped pairs are left out.
pub fn extract_features(
    cfg: &ExperimentConfig,
    pairs: &[WicPair],
    annotations: &BTreeMap<String, DepAnnotation>,
    vocab: &Vocabulary,
    source: StateSource<'_>,
) -> Result<Vec<CachedFeature>> {
    let ex = FeatureExtractor::new(source, vocab, cfg.pooling, cfg.dependent_combine);
    let mut skipped = Vec::new();
    Ok(
        collect_features(&ex, cfg, pairs, annotations, &mut skipped)?
            .into_iter()
            .map(|(p, f)| CachedFeature {
                pair_id: p.id.clone(),
                label: p.gold,
                values: f.values,
            })
            .collect(),
    )
}
