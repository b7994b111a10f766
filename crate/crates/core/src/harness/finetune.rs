//! Joint encoding of each pair, span-head loss and end-to-end updates.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::FinetuneRegime;
use super::report::{evaluate, Prediction};
use crate::checkpoint;
use crate::corpus::{Label, Side, WicPair};
use crate::encoder::{joint_ids, EncoderConfig, ToyEncoder};
use crate::error::{Error, Result};
use crate::numgrad::{bind, bind_frozen, step, Graph, OptimizerState, Parameter, Tensor, Var};
use crate::spanhead::{predict, SpanHead};
use crate::subword::{align_span, tokenize, Vocabulary};

/// Encoder input of one pair with both target spans located in it.
///
/// Jointly encoded pairs are one `[CLS] s1 [SEP] s2 [SEP]` sequence in
/// `ids` and `second` is `None`. Separately encoded pairs hold
/// `[CLS] s1 [SEP]` in `ids` and `[CLS] s2 [SEP]` in `second`, and `span2`
/// indexes into `second`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub ids: Vec<usize>,
    pub second: Option<Vec<usize>>,
    pub span1: Vec<usize>,
    pub span2: Vec<usize>,
}

/// Joint encoding of a pair.
pub fn encode_pair(vocab: &Vocabulary, pair: &WicPair) -> Result<EncodedPair> {
    let t1 = tokenize(vocab, &pair.sentence1);
    let t2 = tokenize(vocab, &pair.sentence2);
    let (ids, layout) = joint_ids(&t1.ids, &t2.ids, vocab.specials())?;
    let s1 = align_span(&t1, pair.span(Side::First))?;
    let s2 = align_span(&t2, pair.span(Side::Second))?;
    Ok(EncodedPair {
        ids,
        second: None,
        span1: s1.iter().map(|i| i + layout.first_shift).collect(),
        span2: s2.iter().map(|i| i + layout.second_shift).collect(),
    })
}

/// Each sentence of a pair encoded on its own.
pub fn encode_pair_separately(vocab: &Vocabulary, pair: &WicPair) -> Result<EncodedPair> {
    let t1 = tokenize(vocab, &pair.sentence1).with_specials(vocab);
    let t2 = tokenize(vocab, &pair.sentence2).with_specials(vocab);
    Ok(EncodedPair {
        span1: align_span(&t1, pair.span(Side::First))?,
        span2: align_span(&t2, pair.span(Side::Second))?,
        ids: t1.ids,
        second: Some(t2.ids),
    })
}

fn encode_with(vocab: &Vocabulary, pair: &WicPair, joint: bool) -> Result<EncodedPair> {
    if joint {
        encode_pair(vocab, pair)
    } else {
        encode_pair_separately(vocab, pair)
    }
}

fn is_head_param(name: &str) -> bool {
    name.starts_with("span.") || name.starts_with("classifier.")
}

/// Encoder and span head trained together.
#[derive(Clone, Debug)]
pub struct FinetuneModel {
    pub encoder: ToyEncoder,
    pub head: SpanHead,
}

impl FinetuneModel {
    pub fn new(cfg: EncoderConfig, head_init_std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = ToyEncoder::with_rng(cfg, &mut rng)?;
        let head = SpanHead::new(encoder.hidden_size(), head_init_std, &mut rng)?;
        Ok(FinetuneModel { encoder, head })
    }

    pub fn logits(&self, pair: &EncodedPair) -> Result<Tensor> {
        let mut g = Graph::new();
        let ev = bind_frozen(&mut g, self.encoder.params());
        let hv = self.head.bind(&mut g, false);
        let z = self.forward(&mut g, &ev, &hv, pair, None)?;
        Ok(g.value(z).clone())
    }

    /// Logits of one pair recorded on `g`.
    fn forward(
        &self,
        g: &mut Graph<'_>,
        enc_vars: &[Var],
        head_vars: &[Var],
        pair: &EncodedPair,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let h1 = self
            .encoder
            .forward(g, enc_vars, &pair.ids, dropout_rng.as_deref_mut())?
            .hidden;
        match &pair.second {
            None => self
                .head
                .forward_pair(g, head_vars, h1, &pair.span1, &pair.span2),
            Some(ids2) => {
                let h2 = self.encoder.forward(g, enc_vars, ids2, dropout_rng)?.hidden;
                self.head
                    .forward_split(g, head_vars, h1, &pair.span1, h2, &pair.span2)
            }
        }
    }

    pub fn predict(&self, pair: &EncodedPair) -> Result<Label> {
        Ok(predict(&self.logits(pair)?))
    }

    /// Encoder and head parameters in one checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let all: Vec<Parameter> = self
            .encoder
            .params()
            .iter()
            .chain(self.head.params())
            .cloned()
            .collect();
        checkpoint::save(&all, path)
    }

    pub fn load(path: &Path, cfg: EncoderConfig) -> Result<Self> {
        let (head, enc): (Vec<Parameter>, Vec<Parameter>) = checkpoint::load(path)?
            .into_iter()
            .partition(|p| is_head_param(&p.name));
        Ok(FinetuneModel {
            encoder: ToyEncoder::from_params(cfg, enc)?,
            head: SpanHead::from_checkpoint(&head)?,
        })
    }
}

/// Encoder parameters from a checkpoint that may also hold a span head.
pub fn load_encoder(path: &Path, cfg: EncoderConfig) -> Result<ToyEncoder> {
    let enc: Vec<Parameter> = checkpoint::load(path)?
        .into_iter()
        .filter(|p| !is_head_param(&p.name))
        .collect();
    ToyEncoder::from_params(cfg, enc)
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub model: FinetuneModel,
    /// Mean training loss of each epoch.
    pub train_losses: Vec<f64>,
    /// Dev accuracy after each epoch; empty without a dev set.
    pub dev_accuracy: Vec<f64>,
}

fn accuracy_of(model: &FinetuneModel, pairs: &[EncodedPair], gold: &[Label]) -> Result<f64> {
    let pred: Vec<Label> = pairs
        .iter()
        .map(|p| model.predict(p))
        .collect::<Result<_>>()?;
    evaluate(&pred, gold)
}

fn gold_labels(pairs: &[WicPair]) -> Result<Vec<Label>> {
    pairs
        .iter()
        .map(|p| {
            p.gold
                .ok_or_else(|| Error::Validation(format!("pair {} has no gold label", p.id)))
        })
        .collect()
}

/// Trains encoder and head from `seed`; the final epoch's parameters are
/// kept.
pub fn finetune(
    train: &[WicPair],
    dev: Option<&[WicPair]>,
    vocab: &Vocabulary,
    mut encoder_cfg: EncoderConfig,
    regime: &FinetuneRegime,
    seed: u64,
) -> Result<FinetuneOutcome> {
    regime.validate()?;
    if train.is_empty() {
        return Err(Error::Config("fine-tuning needs training pairs".into()));
    }
    if encoder_cfg.vocab_size == 0 {
        encoder_cfg.vocab_size = vocab.len();
    }
    let gold = gold_labels(train)?;
    let encoded: Vec<EncodedPair> = train
        .iter()
        .map(|p| encode_with(vocab, p, regime.joint))
        .collect::<Result<_>>()?;
    let dev_set = match dev {
        Some(d) if !d.is_empty() => Some((
            d.iter()
                .map(|p| encode_with(vocab, p, regime.joint))
                .collect::<Result<Vec<_>>>()?,
            gold_labels(d)?,
        )),
        _ => None,
    };

    let mut model = FinetuneModel::new(encoder_cfg, regime.head_init_std, seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut enc_state = OptimizerState::new();
    let mut head_state = OptimizerState::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_losses = Vec::with_capacity(regime.epochs);
    let mut dev_accuracy = Vec::new();

    for epoch in 0..regime.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(regime.batch_size) {
            let (loss, enc_grads, head_grads) = {
                let mut g = Graph::new();
                let ev = bind(&mut g, model.encoder.params());
                let hv = model.head.bind(&mut g, true);
                let mut sum: Option<Var> = None;
                for &i in batch {
                    let p = &encoded[i];
                    let z = model.forward(&mut g, &ev, &hv, p, Some(&mut dropout_rng))?;
                    let z = g.reshape(z, &[1, 2])?;
                    let l = g.cross_entropy(z, &[gold[i].index()])?;
                    sum = Some(match sum {
                        Some(s) => g.add(s, l)?,
                        None => l,
                    });
                }
                let loss = g.scale(sum.expect("chunks are non-empty"), 1.0 / batch.len() as f64);
                let mut grads = g.backward(loss)?;
                let mut take = |vars: &[Var], params: &[Parameter]| -> Vec<Tensor> {
                    vars.iter()
                        .zip(params)
                        .map(|(&v, p)| {
                            grads
                                .take(v)
                                .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
                        })
                        .collect()
                };
                let eg = take(&ev, model.encoder.params());
                let hg = take(&hv, model.head.params());
                (g.value(loss).item(), eg, hg)
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("fine-tuning loss became {loss}")));
            }
            total += loss * batch.len() as f64;
            for (p, gr) in model.encoder.params_mut().iter_mut().zip(enc_grads) {
                p.grad = gr;
            }
            for (p, gr) in model.head.params_mut().iter_mut().zip(head_grads) {
                p.grad = gr;
            }
            step(
                model.encoder.params_mut(),
                &regime.optimizer,
                &mut enc_state,
            )?;
            step(model.head.params_mut(), &regime.optimizer, &mut head_state)?;
        }
        let mean = total / train.len() as f64;
        train_losses.push(mean);
        match &dev_set {
            Some((pairs, gold)) => {
                let acc = accuracy_of(&model, pairs, gold)?;
                dev_accuracy.push(acc);
                info!(
                    "epoch {}: train loss {mean:.6}, dev accuracy {acc:.4}",
                    epoch + 1
                );
            }
            None => info!("epoch {}: train loss {mean:.6}", epoch + 1),
        }
    }
    model
        .encoder
        .params_mut()
        .iter_mut()
        .for_each(Parameter::zero_grad);
    model
        .head
        .params_mut()
        .iter_mut()
        .for_each(Parameter::zero_grad);
    Ok(FinetuneOutcome {
        model,
        train_losses,
        dev_accuracy,
    })
}

/// Predictions of a fine-tuned model for `pairs`, encoded jointly or
/// separately as during training.
pub fn predict_pairs(
    model: &FinetuneModel,
    vocab: &Vocabulary,
    pairs: &[WicPair],
    joint: bool,
    system: &str,
) -> Result<Vec<Prediction>> {
    pairs
        .iter()
        .map(|p| {
            Ok(Prediction {
                system: system.to_string(),
                pair_id: p.id.clone(),
                lang_pair: p.lang_pair.to_string(),
                gold: p.gold,
                predicted: model.predict(&encode_with(vocab, p, joint)?)?,
            })
        })
        .collect()
}
