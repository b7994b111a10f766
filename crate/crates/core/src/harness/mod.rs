//! Experiment orchestration: data loading, the two training strategies,
//! evaluation and result files.
//!
//! A run writes into its output directory:
//!
//! * `results.csv` with columns `system,lang_pair,n,correct,accuracy`;
//! * `predictions.tsv`, one line per evaluated pair, from which the results
//!   re-derive exactly;
//! * `report.txt`, the language-pair table, left out for joint-feature runs,
//!   which are a diagnostic variant only;
//! * `model.ckpt`, the trained parameters of the final epoch.
//!
//! All randomness (initialisation, shuffling, dropout) is drawn from the
//! configured seed, so identical configurations give identical files.

mod config;
mod feature_exp;
mod finetune;
mod report;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;

pub use config::{
    ClassifierKind, EncoderSource, ExperimentConfig, FinetuneRegime, SplitFiles, Strategy,
    JOINT_SYSTEM_SUFFIX,
};
pub use feature_exp::{
    collect_features, extract_features, pair_features, run_feature_experiment, FeatureOutcome,
    TrainedClassifier, SYNTAX_EXCLUDED_LANG,
};
pub use finetune::{
    encode_pair, encode_pair_separately, finetune, load_encoder, predict_pairs, EncodedPair,
    FinetuneModel, FinetuneOutcome,
};
pub use report::{
    emit_report, evaluate, format_accuracy, read_predictions, read_results, tally,
    write_predictions, write_results, Prediction, Report, ResultGrid, ResultRow,
};

use crate::corpus::{
    load_conllu, load_mixed, load_pairs, DatasetSplit, DepAnnotation, LangPair, SplitName,
};
use crate::encoder::{PrecomputedStore, ToyEncoder};
use crate::error::{Error, Result};
use crate::features::StateSource;
use crate::subword::Vocabulary;

/// Every split of one experiment, plus the dependency parses of all
/// sentences keyed `<pair_id>.<side>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub train: DatasetSplit,
    pub dev: Option<DatasetSplit>,
    pub test: Vec<DatasetSplit>,
    pub annotations: BTreeMap<String, DepAnnotation>,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let train = load_pairs(&cfg.train.data, cfg.train.gold.as_deref())?;
        let dev = match &cfg.dev {
            Some(files) => {
                let split = load_pairs(&files.data, files.gold.as_deref())?;
                Some(match cfg.dev_subset {
                    Some(n) => split.with_subset(n)?,
                    None => split,
                })
            }
            None => None,
        };
        let mut test = Vec::new();
        for files in &cfg.test {
            test.extend(load_mixed(&files.data, files.gold.as_deref())?);
        }
        let mut annotations = BTreeMap::new();
        let conllu = std::iter::once(&cfg.train)
            .chain(&cfg.dev)
            .chain(&cfg.test)
            .filter_map(|s| s.conllu.as_deref());
        for path in conllu {
            annotations.extend(load_conllu(path)?);
        }
        Ok(ExperimentData {
            train,
            dev,
            test,
            annotations,
        })
    }
}

/// Training data must be the English-English training split; nothing from
/// another language pair may reach a training loop.
pub fn ensure_zero_shot(split: &DatasetSplit) -> Result<()> {
    if split.name != SplitName::Train {
        return Err(Error::Validation(format!(
            "training on the {} split",
            split.name
        )));
    }
    let en = LangPair::en_en();
    if let Some(p) = split.active().iter().find(|p| p.lang_pair != en) {
        return Err(Error::Validation(format!(
            "training pair {} is {}; only en-en pairs may be trained on",
            p.id, p.lang_pair
        )));
    }
    Ok(())
}

/// The toy encoder a configuration describes: loaded from its checkpoint,
/// or initialised from the run seed.
pub fn build_toy_encoder(cfg: &ExperimentConfig, vocab: &Vocabulary) -> Result<ToyEncoder> {
    let EncoderSource::Toy { config, checkpoint } = &cfg.encoder else {
        return Err(Error::Config("encoder source is not a toy encoder".into()));
    };
    let mut ec = config.clone();
    if ec.vocab_size == 0 {
        ec.vocab_size = vocab.len();
    }
    match checkpoint {
        Some(path) => load_encoder(path, ec),
        None => ToyEncoder::new(ec, cfg.seed),
    }
}

/// What a run trained.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    Finetuned(FinetuneModel),
    Classifier(TrainedClassifier),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub system: String,
    pub model: TrainedModel,
    pub train_losses: Vec<f64>,
    pub dev_accuracy: Vec<f64>,
    pub predictions: Vec<Prediction>,
    pub skipped: Vec<String>,
    /// Whether the run belongs in report tables.
    pub reportable: bool,
}

impl RunOutcome {
    pub fn results(&self) -> Vec<ResultRow> {
        tally(&self.predictions)
    }

    /// The outcome as a one-row table; language pairs without evaluated
    /// pairs stay absent.
    pub fn grid(&self) -> Result<ResultGrid> {
        let mut g = ResultGrid::from_rows(&self.results())?;
        g.add_system(&self.system);
        Ok(g)
    }
}

/// Runs a configured experiment on already loaded data.
pub fn run_with_data(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    vocab: &Vocabulary,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let system = cfg.system_label();
    match cfg.strategy {
        Strategy::Finetune => {
            ensure_zero_shot(&data.train)?;
            let EncoderSource::Toy { config, .. } = &cfg.encoder else {
                unreachable!("validated: fine-tuning uses a toy encoder");
            };
            let out = finetune(
                data.train.active(),
                data.dev.as_ref().map(|d| d.active()),
                vocab,
                config.clone(),
                &cfg.finetune,
                cfg.seed,
            )?;
            let mut predictions = Vec::new();
            for split in &data.test {
                predictions.extend(predict_pairs(
                    &out.model,
                    vocab,
                    split.active(),
                    cfg.finetune.joint,
                    &system,
                )?);
            }
            Ok(RunOutcome {
                system,
                model: TrainedModel::Finetuned(out.model),
                train_losses: out.train_losses,
                dev_accuracy: out.dev_accuracy,
                predictions,
                skipped: Vec::new(),
                reportable: true,
            })
        }
        _ => {
            let out = match &cfg.encoder {
                EncoderSource::Toy { .. } => {
                    let enc = build_toy_encoder(cfg, vocab)?;
                    run_feature_experiment(cfg, data, vocab, StateSource::Encoder(&enc))?
                }
                EncoderSource::Store { path } => {
                    let store = PrecomputedStore::load(path)?;
                    run_feature_experiment(cfg, data, vocab, StateSource::Store(&store))?
                }
            };
            Ok(RunOutcome {
                system,
                model: TrainedModel::Classifier(out.classifier),
                train_losses: out.train_losses,
                dev_accuracy: out.dev_accuracy.into_iter().collect(),
                predictions: out.predictions,
                skipped: out.skipped,
                reportable: !cfg.joint_features,
            })
        }
    }
}

/// Writes results, predictions, report and checkpoint into `dir`.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_results(&dir.join("results.csv"), &outcome.results())?;
    write_predictions(&dir.join("predictions.tsv"), &outcome.predictions)?;
    if outcome.reportable {
        let report = emit_report(&outcome.grid()?);
        let path = dir.join("report.txt");
        fs::write(&path, report.text).map_err(|e| Error::io(&path, e))?;
    }
    let ckpt = dir.join("model.ckpt");
    match &outcome.model {
        TrainedModel::Finetuned(m) => m.save(&ckpt),
        TrainedModel::Classifier(c) => c.save(&ckpt),
    }
}

/// Loads everything a configuration names, runs it and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let vocab = Vocabulary::load(&cfg.vocab)?;
    let data = ExperimentData::load(cfg)?;
    info!(
        "{}: {} training pairs, {} test splits",
        cfg.system_label(),
        data.train.active().len(),
        data.test.len()
    );
    let outcome = run_with_data(cfg, &data, &vocab)?;
    write_outputs(&cfg.output_dir, &outcome)?;
    Ok(outcome)
}
