use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use wic::corpus::load_gold;
use wic::encoder::EncoderConfig;
use wic::features::{save_feature_cache, DependentCombine, StateSource};
use wic::harness::{
    build_toy_encoder, emit_report, extract_features, read_predictions, read_results,
    run_experiment, tally, write_results, EncoderSource, ExperimentConfig, ExperimentData,
    FinetuneRegime, ResultGrid, SplitFiles, Strategy, JOINT_SYSTEM_SUFFIX,
};
use wic::subword::{PoolingMode, Vocabulary};
use wic::Error;

#[derive(Parser)]
#[command(name = "wic", version, about = "Word-in-context experiments")]
struct Cli {
    /// Log per-epoch progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fine-tune the toy encoder with the span head.
    TrainFinetune(ExperimentArgs),
    /// Train LR or MLP on frozen features.
    TrainFeature(ExperimentArgs),
    /// Write feature vectors of one split to a cache file.
    ExtractFeatures {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file, optionally against a separate gold file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Where to write the results CSV; printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge results files into one table.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Finetune,
    FeatureLr,
    FeatureMlp,
    FeatureSyntaxLr,
    FeatureSyntaxMlp,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Finetune => Strategy::Finetune,
            StrategyArg::FeatureLr => Strategy::FeatureLr,
            StrategyArg::FeatureMlp => Strategy::FeatureMlp,
            StrategyArg::FeatureSyntaxLr => Strategy::FeatureSyntaxLr,
            StrategyArg::FeatureSyntaxMlp => Strategy::FeatureSyntaxMlp,
        }
    }
}

/// Configuration file plus per-field overrides. Without `--config`, the
/// flags alone must describe the experiment.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Hidden-state store; selects the store encoder source.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Toy encoder checkpoint.
    #[arg(long)]
    encoder_checkpoint: Option<PathBuf>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    train_gold: Option<PathBuf>,
    #[arg(long)]
    train_conllu: Option<PathBuf>,
    #[arg(long)]
    dev_data: Option<PathBuf>,
    #[arg(long)]
    dev_gold: Option<PathBuf>,
    #[arg(long)]
    dev_conllu: Option<PathBuf>,
    /// Test pair file; repeat for several files.
    #[arg(long)]
    test_data: Vec<PathBuf>,
    /// Gold file for the test pair file at the same position.
    #[arg(long)]
    test_gold: Vec<PathBuf>,
    #[arg(long)]
    test_conllu: Vec<PathBuf>,
    #[arg(long)]
    dev_subset: Option<usize>,
    #[arg(long, value_enum)]
    pooling: Option<Reduce>,
    #[arg(long, value_enum)]
    dependent_combine: Option<Reduce>,
    #[arg(long)]
    joint_features: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn config_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

/// Shared by `--pooling` and `--dependent-combine`.
#[derive(Clone, Copy, ValueEnum)]
enum Reduce {
    Sum,
    Average,
}

impl Reduce {
    fn pooling(self) -> PoolingMode {
        match self {
            Reduce::Sum => PoolingMode::Sum,
            Reduce::Average => PoolingMode::Average,
        }
    }

    fn combine(self) -> DependentCombine {
        match self {
            Reduce::Sum => DependentCombine::Sum,
            Reduce::Average => DependentCombine::Average,
        }
    }
}

impl ExperimentArgs {
    fn into_config(self, default_strategy: Strategy) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig {
                system: None,
                strategy: default_strategy,
                encoder: EncoderSource::Toy {
                    config: EncoderConfig::default(),
                    checkpoint: None,
                },
                vocab: self
                    .vocab
                    .clone()
                    .ok_or_else(|| config_err("--vocab or --config is required"))?,
                pooling: PoolingMode::default(),
                dependent_combine: DependentCombine::default(),
                joint_features: false,
                regime: None,
                finetune: FinetuneRegime::default(),
                train: SplitFiles {
                    data: self
                        .train_data
                        .clone()
                        .ok_or_else(|| config_err("--train-data or --config is required"))?,
                    gold: None,
                    conllu: None,
                },
                dev: None,
                test: Vec::new(),
                dev_subset: None,
                seed: 0,
                output_dir: self
                    .output_dir
                    .clone()
                    .ok_or_else(|| config_err("--output-dir or --config is required"))?,
            },
        };
        if let Some(s) = self.strategy {
            cfg.strategy = s.into();
        }
        if self.system.is_some() {
            cfg.system = self.system;
        }
        if let Some(v) = self.vocab {
            cfg.vocab = v;
        }
        if let Some(path) = self.store {
            cfg.encoder = EncoderSource::Store { path };
        }
        if let Some(path) = self.encoder_checkpoint {
            match &mut cfg.encoder {
                EncoderSource::Toy { checkpoint, .. } => *checkpoint = Some(path),
                EncoderSource::Store { .. } => {
                    return Err(config_err("--encoder-checkpoint conflicts with a store"))
                }
            }
        }
        if let Some(d) = self.train_data {
            cfg.train.data = d;
        }
        if self.train_gold.is_some() {
            cfg.train.gold = self.train_gold;
        }
        if self.train_conllu.is_some() {
            cfg.train.conllu = self.train_conllu;
        }
        if let Some(data) = self.dev_data {
            cfg.dev = Some(SplitFiles {
                data,
                gold: self.dev_gold,
                conllu: self.dev_conllu,
            });
        }
        if !self.test_data.is_empty() {
            if self.test_gold.len() > self.test_data.len()
                || self.test_conllu.len() > self.test_data.len()
            {
                return Err(config_err(
                    "more --test-gold/--test-conllu than --test-data",
                ));
            }
            cfg.test = self
                .test_data
                .into_iter()
                .enumerate()
                .map(|(i, data)| SplitFiles {
                    data,
                    gold: self.test_gold.get(i).cloned(),
                    conllu: self.test_conllu.get(i).cloned(),
                })
                .collect();
        }
        if self.dev_subset.is_some() {
            cfg.dev_subset = self.dev_subset;
        }
        if let Some(p) = self.pooling {
            cfg.pooling = p.pooling();
        }
        if let Some(c) = self.dependent_combine {
            cfg.dependent_combine = c.combine();
        }
        cfg.joint_features |= self.joint_features;
        if let Some(e) = self.epochs {
            if cfg.strategy == Strategy::Finetune {
                cfg.finetune.epochs = e;
            } else {
                let mut r = cfg.regime();
                r.max_iters = e;
                cfg.regime = Some(r);
            }
        }
        if let Some(lr) = self.learning_rate {
            if cfg.strategy == Strategy::Finetune {
                cfg.finetune.optimizer.learning_rate = lr;
            } else {
                let mut r = cfg.regime();
                r.optimizer.learning_rate = lr;
                cfg.regime = Some(r);
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.output_dir {
            cfg.output_dir = o;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn train(args: ExperimentArgs, finetune: bool) -> Result<(), Error> {
    let cfg = args.into_config(if finetune {
        Strategy::Finetune
    } else {
        Strategy::FeatureLr
    })?;
    if finetune != (cfg.strategy == Strategy::Finetune) {
        return Err(config_err(format!(
            "strategy {:?} does not belong to this subcommand",
            cfg.strategy
        )));
    }
    let out = run_experiment(&cfg)?;
    for w in &out.skipped {
        info!("skipped {w}");
    }
    if out.reportable {
        print!("{}", emit_report(&out.grid()?).text);
    }
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

fn extract(args: ExperimentArgs, split: SplitArg, out: PathBuf) -> Result<(), Error> {
    let cfg = args.into_config(Strategy::FeatureLr)?;
    if cfg.strategy == Strategy::Finetune {
        return Err(config_err("extract-features needs a feature strategy"));
    }
    let vocab = Vocabulary::load(&cfg.vocab)?;
    let data = ExperimentData::load(&cfg)?;
    let pairs: Vec<_> = match split {
        SplitArg::Train => data.train.active().to_vec(),
        SplitArg::Dev => data
            .dev
            .as_ref()
            .ok_or_else(|| config_err("no dev split configured"))?
            .active()
            .to_vec(),
        SplitArg::Test => data
            .test
            .iter()
            .flat_map(|s| s.active().iter().cloned())
            .collect(),
    };
    let rows = match &cfg.encoder {
        EncoderSource::Toy { .. } => {
            let enc = build_toy_encoder(&cfg, &vocab)?;
            extract_features(
                &cfg,
                &pairs,
                &data.annotations,
                &vocab,
                StateSource::Encoder(&enc),
            )?
        }
        EncoderSource::Store { path } => {
            let store = wic::encoder::PrecomputedStore::load(path)?;
            extract_features(
                &cfg,
                &pairs,
                &data.annotations,
                &vocab,
                StateSource::Store(&store),
            )?
        }
    };
    save_feature_cache(&out, &rows)?;
    println!(
        "{} feature vectors written to {}",
        rows.len(),
        out.display()
    );
    Ok(())
}

fn evaluate(
    predictions: PathBuf,
    gold: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let mut preds = read_predictions(&predictions)?;
    if let Some(g) = gold {
        let tags = load_gold(&g)?;
        for p in &mut preds {
            p.gold = Some(*tags.get(&p.pair_id).ok_or_else(|| {
                Error::Validation(format!("{} has no gold tag for {}", g.display(), p.pair_id))
            })?);
        }
    }
    let rows = tally(&preds);
    if rows.is_empty() {
        return Err(Error::Validation(
            "no labelled predictions to evaluate".into(),
        ));
    }
    match out {
        Some(path) => write_results(&path, &rows)?,
        None => {
            for r in &rows {
                println!(
                    "{}\t{}\t{}/{}\t{:.4}",
                    r.system, r.lang_pair, r.correct, r.n, r.accuracy
                );
            }
        }
    }
    Ok(())
}

fn report(results: Vec<PathBuf>, out: Option<PathBuf>, csv: Option<PathBuf>) -> Result<(), Error> {
    let mut grid = ResultGrid::new();
    for path in &results {
        for row in read_results(path)? {
            if row.system.ends_with(JOINT_SYSTEM_SUFFIX) {
                info!(
                    "leaving joint-feature system {} out of the report",
                    row.system
                );
                continue;
            }
            grid.insert(&row.system, &row.lang_pair, row.accuracy)?;
        }
    }
    let rep = emit_report(&grid);
    let write = |path: &PathBuf, text: &str| {
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })
    };
    match out {
        Some(path) => write(&path, &rep.text)?,
        None => print!("{}", rep.text),
    }
    if let Some(path) = csv {
        write(&path, &rep.csv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::TrainFinetune(a) => train(a, true),
        Command::TrainFeature(a) => train(a, false),
        Command::ExtractFeatures { exp, split, out } => extract(exp, split, out),
        Command::Evaluate {
            predictions,
            gold,
            out,
        } => evaluate(predictions, gold, out),
        Command::Report { results, out, csv } => report(results, out, csv),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
    }
}
