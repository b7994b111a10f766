use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HiddenStates;
use crate::error::{Error, Result};
use crate::numgrad::{Graph, Parameter, Tensor, Var};
use crate::subword::SpecialIds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    /// Standard deviation of the normal initializer for weights and
    /// embeddings.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            heads: 2,
            hidden: 32,
            ffn: 64,
            max_len: 128,
            vocab_size: 0,
            dropout: 0.1,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    /// Dimensions of the base multilingual models: 12 layers, 12 heads,
    /// hidden size 768.
    pub fn base(vocab_size: usize) -> Self {
        EncoderConfig {
            layers: 12,
            heads: 12,
            hidden: 768,
            ffn: 3072,
            max_len: 512,
            vocab_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 || self.hidden == 0 || !self.hidden.is_multiple_of(self.heads) {
            return fail(format!(
                "hidden size {} must be a positive multiple of {} heads",
                self.hidden, self.heads
            ));
        }
        if self.ffn == 0 || self.max_len == 0 || self.vocab_size == 0 {
            return fail("ffn, max_len and vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.init_std <= 0.0 {
            return fail(format!("init_std {} must be positive", self.init_std));
        }
        Ok(())
    }
}

const LAYER_NORM_EPS: f64 = 1e-12;
const PER_LAYER: usize = 16;

// offsets within one layer's parameter block
const WQ: usize = 0;
const BQ: usize = 1;
const WK: usize = 2;
const BK: usize = 3;
const WV: usize = 4;
const BV: usize = 5;
const WO: usize = 6;
const BO: usize = 7;
const LN1_G: usize = 8;
const LN1_B: usize = 9;
const W1: usize = 10;
const B1: usize = 11;
const W2: usize = 12;
const B2: usize = 13;
const LN2_G: usize = 14;
const LN2_B: usize = 15;

/// Sequence layout of `[CLS] s1 [SEP] s2 [SEP]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointLayout {
    /// Add to a sentence-1 token index (without specials) to get its
    /// position in the joint sequence.
    pub first_shift: usize,
    pub second_shift: usize,
    pub total: usize,
}

/// Builds `[CLS] ids1 [SEP] ids2 [SEP]`.
pub fn joint_ids(
    ids1: &[usize],
    ids2: &[usize],
    specials: SpecialIds,
) -> Result<(Vec<usize>, JointLayout)> {
    if ids1.is_empty() || ids2.is_empty() {
        return Err(Error::Validation(
            "joint encoding needs two non-empty sentences".into(),
        ));
    }
    let mut ids = Vec::with_capacity(ids1.len() + ids2.len() + 3);
    ids.push(specials.cls);
    ids.extend_from_slice(ids1);
    ids.push(specials.sep);
    ids.extend_from_slice(ids2);
    ids.push(specials.sep);
    let layout = JointLayout {
        first_shift: 1,
        second_shift: ids1.len() + 2,
        total: ids.len(),
    };
    Ok((ids, layout))
}

pub struct EncoderOutput {
    pub hidden: Var,
    /// Attention probabilities, one `T×T` matrix per layer and head.
    pub attention: Vec<Var>,
    /// Feed-forward inputs to the ReLU, one `T×ffn` matrix per layer.
    pub ffn_pre_activations: Vec<Var>,
}

/// A small post-norm transformer encoder.
#[derive(Clone, Debug)]
pub struct ToyEncoder {
    cfg: EncoderConfig,
    params: Vec<Parameter>,
}

impl ToyEncoder {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        Self::with_rng(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(cfg: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut randn = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(rng)).collect()).unwrap()
        };
        let (h, f) = (cfg.hidden, cfg.ffn);
        let mut params = vec![
            Parameter::new("embeddings.token", randn(&[cfg.vocab_size, h])),
            Parameter::new("embeddings.position", randn(&[cfg.max_len, h])),
        ];
        for l in 0..cfg.layers {
            let p = |n: &str| format!("layer{l}.{n}");
            params.extend([
                Parameter::new(p("attn.q.weight"), randn(&[h, h])),
                Parameter::new(p("attn.q.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("attn.k.weight"), randn(&[h, h])),
                Parameter::new(p("attn.k.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("attn.v.weight"), randn(&[h, h])),
                Parameter::new(p("attn.v.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("attn.out.weight"), randn(&[h, h])),
                Parameter::new(p("attn.out.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("attn.norm.gain"), Tensor::full(&[h], 1.0)),
                Parameter::new(p("attn.norm.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("ffn.in.weight"), randn(&[h, f])),
                Parameter::new(p("ffn.in.bias"), Tensor::zeros(&[f])),
                Parameter::new(p("ffn.out.weight"), randn(&[f, h])),
                Parameter::new(p("ffn.out.bias"), Tensor::zeros(&[h])),
                Parameter::new(p("ffn.norm.gain"), Tensor::full(&[h], 1.0)),
                Parameter::new(p("ffn.norm.bias"), Tensor::zeros(&[h])),
            ]);
        }
        Ok(ToyEncoder { cfg, params })
    }

    /// Rebuilds an encoder from saved parameters, checking their shapes.
    pub fn from_params(cfg: EncoderConfig, params: Vec<Parameter>) -> Result<Self> {
        let fresh = Self::new(cfg.clone(), 0)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} encoder parameters, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (a, b) in fresh.params.iter().zip(&params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Format(format!(
                    "encoder parameter {} {:?} does not match {} {:?}",
                    b.name,
                    b.value.shape(),
                    a.name,
                    a.value.shape()
                )));
            }
        }
        Ok(ToyEncoder { cfg, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn hidden_size(&self) -> usize {
        self.cfg.hidden
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Validation("cannot encode an empty sequence".into()));
        }
        if ids.len() > self.cfg.max_len {
            return Err(Error::Length {
                len: ids.len(),
                max: self.cfg.max_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(Error::Vocabulary {
                id,
                size: self.cfg.vocab_size,
            });
        }
        Ok(())
    }

    /// Records the forward pass on `g`. `vars` are the parameters bound in
    /// [`ToyEncoder::params`] order. Dropout is applied only when an RNG is
    /// given.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        vars: &[Var],
        ids: &[usize],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncoderOutput> {
        self.check_ids(ids)?;
        if vars.len() != self.params.len() {
            return Err(Error::Config(format!(
                "{} parameter vars bound for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let t = ids.len();
        let (h, heads) = (self.cfg.hidden, self.cfg.heads);
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let positions: Vec<usize> = (0..t).collect();

        let tok = g.gather_rows(vars[0], ids)?;
        let pos = g.gather_rows(vars[1], &positions)?;
        let mut x = g.add(tok, pos)?;
        x = self.dropout(g, x, dropout_rng.as_deref_mut())?;

        let mut attention = Vec::with_capacity(self.cfg.layers * heads);
        let mut ffn_pre_activations = Vec::with_capacity(self.cfg.layers);
        for l in 0..self.cfg.layers {
            let v = &vars[2 + l * PER_LAYER..2 + (l + 1) * PER_LAYER];
            let q = linear(g, x, v[WQ], v[BQ])?;
            let k = linear(g, x, v[WK], v[BK])?;
            let val = linear(g, x, v[WV], v[BV])?;
            let mut head_out = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (s, e) = (hd * dh, (hd + 1) * dh);
                let qh = g.slice_cols(q, s, e)?;
                let kh = g.slice_cols(k, s, e)?;
                let vh = g.slice_cols(val, s, e)?;
                let scores = g.matmul_nt(qh, kh)?;
                let scores = g.scale(scores, scale);
                let probs = g.softmax(scores)?;
                attention.push(probs);
                head_out.push(g.matmul(probs, vh)?);
            }
            let merged = if heads == 1 {
                head_out[0]
            } else {
                g.concat_cols(&head_out)?
            };
            let attn = linear(g, merged, v[WO], v[BO])?;
            let attn = self.dropout(g, attn, dropout_rng.as_deref_mut())?;
            let res = g.add(x, attn)?;
            x = g.layer_norm(res, v[LN1_G], v[LN1_B], LAYER_NORM_EPS)?;

            let inner = linear(g, x, v[W1], v[B1])?;
            ffn_pre_activations.push(inner);
            let inner = g.relu(inner);
            let ffn = linear(g, inner, v[W2], v[B2])?;
            let ffn = self.dropout(g, ffn, dropout_rng.as_deref_mut())?;
            let res = g.add(x, ffn)?;
            x = g.layer_norm(res, v[LN2_G], v[LN2_B], LAYER_NORM_EPS)?;
        }
        Ok(EncoderOutput {
            hidden: x,
            attention,
            ffn_pre_activations,
        })
    }

    fn dropout(&self, g: &mut Graph<'_>, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.cfg.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = g
                    .value(x)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep });
                let m = g.constant(mask);
                g.mul(x, m)
            }
            _ => Ok(x),
        }
    }

    /// Last-layer hidden states with frozen parameters and no dropout.
    pub fn encode(&self, ids: &[usize]) -> Result<HiddenStates> {
        let mut g = Graph::new();
        let vars = crate::numgrad::bind_frozen(&mut g, &self.params);
        let out = self.forward(&mut g, &vars, ids, None)?;
        HiddenStates::new(g.value(out.hidden).clone())
    }

    /// Encodes `[CLS] ids1 [SEP] ids2 [SEP]` as one sequence.
    pub fn encode_joint(
        &self,
        ids1: &[usize],
        ids2: &[usize],
        specials: SpecialIds,
    ) -> Result<(HiddenStates, JointLayout)> {
        let (ids, layout) = joint_ids(ids1, ids2, specials)?;
        Ok((self.encode(&ids)?, layout))
    }

    /// Attention probabilities of every layer and head for `ids`.
    pub fn attention_maps(&self, ids: &[usize]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let vars = crate::numgrad::bind_frozen(&mut g, &self.params);
        let out = self.forward(&mut g, &vars, ids, None)?;
        Ok(out.attention.iter().map(|&a| g.value(a).clone()).collect())
    }
}

fn linear(g: &mut Graph<'_>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(layers: usize) -> EncoderConfig {
        EncoderConfig {
            layers,
            heads: 2,
            hidden: 8,
            ffn: 16,
            max_len: 12,
            vocab_size: 20,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn output_shape() {
        let enc = ToyEncoder::new(cfg(2), 1).unwrap();
        for t in [1, 5, 12] {
            let ids: Vec<usize> = (0..t).map(|i| i % 20).collect();
            let h = enc.encode(&ids).unwrap();
            assert_eq!(h.matrix().shape(), &[t, 8]);
        }
    }

    #[test]
    fn zero_layers_is_embedding_plus_position() {
        let enc = ToyEncoder::new(cfg(0), 3).unwrap();
        let ids = [4, 0, 19];
        let h = enc.encode(&ids).unwrap();
        let tok = &enc.params()[0].value;
        let pos = &enc.params()[1].value;
        for (t, &id) in ids.iter().enumerate() {
            let expected: Vec<f64> = tok
                .row(id)
                .iter()
                .zip(pos.row(t))
                .map(|(a, b)| a + b)
                .collect();
            assert_eq!(h.matrix().row(t), expected.as_slice());
        }
    }

    #[test]
    fn positions_matter() {
        let enc = ToyEncoder::new(cfg(2), 5).unwrap();
        let a = enc.encode(&[3, 7, 9]).unwrap();
        let b = enc.encode(&[7, 3, 9]).unwrap();
        // the token 3 sits at a different position, so its row must differ
        assert_ne!(a.matrix().row(0), b.matrix().row(1));
        assert_ne!(a.matrix().row(2), b.matrix().row(2));
    }

    #[test]
    fn length_and_vocab_errors() {
        let enc = ToyEncoder::new(cfg(1), 0).unwrap();
        assert!(matches!(
            enc.encode(&[1; 13]),
            Err(Error::Length { len: 13, max: 12 })
        ));
        assert!(matches!(
            enc.encode(&[1, 20]),
            Err(Error::Vocabulary { id: 20, size: 20 })
        ));
    }

    #[test]
    fn joint_layout_arithmetic() {
        let sp = SpecialIds {
            cls: 0,
            sep: 1,
            unk: 2,
            pad: 3,
        };
        let (ids, layout) = joint_ids(&[5, 6, 7], &[8, 9, 10, 11], sp).unwrap();
        assert_eq!(ids.len(), 10);
        assert_eq!(layout.total, 10);
        assert_eq!(layout.second_shift, 5);
        assert_eq!(ids[layout.second_shift], 8);
        assert_eq!(ids[layout.first_shift], 5);
        assert!(joint_ids(&[5], &[], sp).is_err());
    }

    #[test]
    fn joint_overflow_is_length_error() {
        let enc = ToyEncoder::new(cfg(1), 0).unwrap();
        let sp = SpecialIds {
            cls: 0,
            sep: 1,
            unk: 2,
            pad: 3,
        };
        assert!(matches!(
            enc.encode_joint(&[4; 5], &[5; 5], sp),
            Err(Error::Length { len: 13, .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(1);
        c.hidden = 9;
        assert!(ToyEncoder::new(c, 0).is_err());
        let mut c = cfg(1);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.vocab_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn base_dimensions() {
        let c = EncoderConfig::base(119_447);
        assert_eq!((c.layers, c.heads, c.hidden), (12, 12, 768));
        c.validate().unwrap();
    }

    #[test]
    fn deterministic_given_seed() {
        let a = ToyEncoder::new(cfg(2), 11).unwrap();
        let b = ToyEncoder::new(cfg(2), 11).unwrap();
        assert_eq!(a.encode(&[1, 2, 3]).unwrap(), b.encode(&[1, 2, 3]).unwrap());
    }

    #[test]
    fn dropout_only_with_rng() {
        let enc = ToyEncoder::new(
            EncoderConfig {
                dropout: 0.5,
                ..cfg(1)
            },
            2,
        )
        .unwrap();
        let ids = [1, 2, 3, 4];
        let mut g = Graph::new();
        let vars = crate::numgrad::bind(&mut g, enc.params());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dropped = enc.forward(&mut g, &vars, &ids, Some(&mut rng)).unwrap();
        let dropped = g.value(dropped.hidden).clone();
        assert_ne!(&dropped, enc.encode(&ids).unwrap().matrix());
    }
}
