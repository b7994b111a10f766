use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::TrainRegime;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::features::{DependentCombine, FeatureVariant};
use crate::numgrad::OptimizerConfig;
use crate::subword::PoolingMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Finetune,
    FeatureLr,
    FeatureMlp,
    FeatureSyntaxLr,
    FeatureSyntaxMlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierKind {
    Lr,
    Mlp,
}

impl Strategy {
    pub fn is_syntax(self) -> bool {
        matches!(self, Strategy::FeatureSyntaxLr | Strategy::FeatureSyntaxMlp)
    }

    /// `None` for fine-tuning.
    pub fn classifier(self) -> Option<ClassifierKind> {
        match self {
            Strategy::Finetune => None,
            Strategy::FeatureLr | Strategy::FeatureSyntaxLr => Some(ClassifierKind::Lr),
            Strategy::FeatureMlp | Strategy::FeatureSyntaxMlp => Some(ClassifierKind::Mlp),
        }
    }

    pub fn variant(self) -> Option<FeatureVariant> {
        match self {
            Strategy::Finetune => None,
            s if s.is_syntax() => Some(FeatureVariant::Syntax),
            _ => Some(FeatureVariant::TargetConcat),
        }
    }

    /// Suffix of the system label in result tables.
    pub fn suffix(self) -> &'static str {
        match self {
            Strategy::Finetune => "span",
            Strategy::FeatureLr => "LR",
            Strategy::FeatureMlp => "MLP",
            Strategy::FeatureSyntaxLr => "Syntax+LR",
            Strategy::FeatureSyntaxMlp => "Syntax+MLP",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EncoderSource {
    /// The in-crate transformer; randomly initialised from the run seed
    /// unless a checkpoint is given. `vocab_size` 0 means the vocabulary size.
    Toy {
        #[serde(default)]
        config: EncoderConfig,
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    /// Hidden states exported from an external encoder.
    Store { path: PathBuf },
}

/// Label suffix of joint-feature runs, which report tables leave out.
pub const JOINT_SYSTEM_SUFFIX: &str = "+joint";

/// Regime of the fine-tuning strategy; epochs are full passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneRegime {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub head_init_std: f64,
    /// Encode each pair as one sequence; `false` encodes the sentences
    /// separately.
    pub joint: bool,
}

impl Default for FinetuneRegime {
    /// Three epochs, batch 32, AdamW at learning rate 1e-5, joint encoding.
    fn default() -> Self {
        FinetuneRegime {
            epochs: 3,
            batch_size: 32,
            optimizer: OptimizerConfig::adamw(1e-5),
            head_init_std: 0.02,
            joint: true,
        }
    }
}

impl FinetuneRegime {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "fine-tuning epochs and batch size must be positive".into(),
            ));
        }
        if self.head_init_std.is_nan() || self.head_init_std <= 0.0 {
            return Err(Error::Config("head_init_std must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// A pair file with optional gold tags and dependency parses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub data: PathBuf,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default)]
    pub conllu: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in result tables; derived from encoder and strategy when
    /// unset.
    #[serde(default)]
    pub system: Option<String>,
    pub strategy: Strategy,
    pub encoder: EncoderSource,
    pub vocab: PathBuf,
    #[serde(default)]
    pub pooling: PoolingMode,
    #[serde(default)]
    pub dependent_combine: DependentCombine,
    /// Encode both sentences as one sequence when building target features.
    /// Such runs are kept out of report tables.
    #[serde(default)]
    pub joint_features: bool,
    /// Classifier regime; the strategy's default when unset.
    #[serde(default)]
    pub regime: Option<TrainRegime>,
    #[serde(default)]
    pub finetune: FinetuneRegime,
    pub train: SplitFiles,
    #[serde(default)]
    pub dev: Option<SplitFiles>,
    #[serde(default)]
    pub test: Vec<SplitFiles>,
    #[serde(default)]
    pub dev_subset: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_split = |s: &mut SplitFiles| {
            fix(&mut s.data);
            s.gold.as_mut().map(fix);
            s.conllu.as_mut().map(fix);
        };
        fix(&mut self.vocab);
        fix(&mut self.output_dir);
        match &mut self.encoder {
            EncoderSource::Toy { checkpoint, .. } => {
                checkpoint.as_mut().map(fix);
            }
            EncoderSource::Store { path } => fix(path),
        }
        fix_split(&mut self.train);
        self.dev.as_mut().map(fix_split);
        self.test.iter_mut().for_each(fix_split);
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.strategy == Strategy::Finetune
            && matches!(self.encoder, EncoderSource::Store { .. })
        {
            return fail("fine-tuning needs a trainable encoder; a hidden-state store is frozen");
        }
        if self.strategy.is_syntax() {
            let splits = std::iter::once(&self.train)
                .chain(&self.dev)
                .chain(&self.test);
            if splits.clone().any(|s| s.conllu.is_none()) {
                return fail("syntax strategies need a conllu file for every split");
            }
            if self.joint_features {
                return fail("joint encoding applies to target features only");
            }
        }
        if self.joint_features && matches!(self.encoder, EncoderSource::Store { .. }) {
            return fail("joint encoding needs a toy encoder");
        }
        if self.dev_subset == Some(0) {
            return fail("dev_subset must be positive");
        }
        if let EncoderSource::Toy { config, .. } = &self.encoder {
            let mut c = config.clone();
            c.vocab_size = c.vocab_size.max(1);
            c.validate()?;
        }
        self.regime().validate()?;
        self.finetune.validate()
    }

    /// The classifier regime in effect.
    pub fn regime(&self) -> TrainRegime {
        let mut r = self
            .regime
            .clone()
            .unwrap_or_else(|| match self.strategy.classifier() {
                Some(ClassifierKind::Lr) => TrainRegime::lr_default(),
                _ => TrainRegime::mlp_default(),
            });
        r.seed = self.seed;
        r
    }

    pub fn system_label(&self) -> String {
        if let Some(s) = &self.system {
            return s.clone();
        }
        let enc = match &self.encoder {
            EncoderSource::Toy { .. } => "toy".to_string(),
            EncoderSource::Store { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "store".into()),
        };
        let joint = if self.joint_features {
            JOINT_SYSTEM_SUFFIX
        } else {
            ""
        };
        format!("{enc}+{}{joint}", self.strategy.suffix())
    }
}
