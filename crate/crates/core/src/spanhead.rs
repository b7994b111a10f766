//! Span classification head.
//!
//! Every token in a target span gets an unnormalized score
//! `a·h_t + b`; the scores are softmax-normalized over that span only, and
//! the span embedding is the resulting weighted sum of hidden rows. The two
//! span embeddings are concatenated and mapped to two logits (F, T) by a
//! linear layer. Rows outside both spans never enter the computation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint;
use crate::corpus::Label;
use crate::encoder::HiddenStates;
use crate::error::{dim_err, Error, Result};
use crate::numgrad::{bind, bind_frozen, Graph, Parameter, Tensor, Var};

const ATTN_VECTOR: usize = 0;
const ATTN_BIAS: usize = 1;
const W_OUT: usize = 2;
const B_OUT: usize = 3;

/// Parameters: attention vector `[H]`, attention bias `[1]`, output weight
/// `[2×2H]` and output bias `[2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanHead {
    hidden: usize,
    params: Vec<Parameter>,
}

/// Recorded span embedding and the attention weights that produced it.
#[derive(Clone, Copy, Debug)]
pub struct SpanEmbedding {
    pub embedding: Var,
    pub weights: Var,
}

impl SpanHead {
    pub fn new(hidden: usize, init_std: f64, rng: &mut impl Rng) -> Result<Self> {
        let normal = Normal::new(0.0, init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut randn = |n: usize| (0..n).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
        Self::from_parts(
            Tensor::vector(randn(hidden))?,
            0.0,
            Tensor::matrix(2, 2 * hidden, randn(4 * hidden))?,
            Tensor::zeros(&[2]),
        )
    }

    pub fn seeded(hidden: usize, init_std: f64, seed: u64) -> Result<Self> {
        Self::new(hidden, init_std, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_parts(
        attn_vector: Tensor,
        attn_bias: f64,
        w_out: Tensor,
        b_out: Tensor,
    ) -> Result<Self> {
        let hidden = attn_vector.len();
        if attn_vector.shape() != [hidden]
            || w_out.shape() != [2, 2 * hidden]
            || b_out.shape() != [2]
        {
            return Err(dim_err!(
                "span head shapes {:?} {:?} {:?} inconsistent",
                attn_vector.shape(),
                w_out.shape(),
                b_out.shape()
            ));
        }
        for t in [&attn_vector, &w_out, &b_out] {
            t.check_finite("span head parameter")?;
        }
        Ok(SpanHead {
            hidden,
            params: vec![
                Parameter::new("span.attn.vector", attn_vector),
                Parameter::new("span.attn.bias", Tensor::scalar(attn_bias)),
                Parameter::new("classifier.weight", w_out),
                Parameter::new("classifier.bias", b_out),
            ],
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn bind<'a>(&'a self, g: &mut Graph<'a>, trainable: bool) -> Vec<Var> {
        if trainable {
            bind(g, &self.params)
        } else {
            bind_frozen(g, &self.params)
        }
    }

    fn check_span(&self, g: &Graph<'_>, h: Var, span: &[usize]) -> Result<()> {
        if span.is_empty() {
            return Err(Error::Span("empty target span".into()));
        }
        let t = g.shape(h)[0];
        if let Some(&i) = span.iter().find(|&&i| i >= t) {
            return Err(dim_err!("span index {i} out of range for {t} tokens"));
        }
        if g.shape(h).get(1) != Some(&self.hidden) {
            return Err(dim_err!(
                "hidden states {:?} do not match head width {}",
                g.shape(h),
                self.hidden
            ));
        }
        Ok(())
    }

    /// Attention-weighted embedding of the rows of `h` indexed by `span`.
    pub fn span_embed(
        &self,
        g: &mut Graph<'_>,
        vars: &[Var],
        h: Var,
        span: &[usize],
    ) -> Result<SpanEmbedding> {
        self.check_span(g, h, span)?;
        let k = span.len();
        let rows = g.gather_rows(h, span)?;
        let a = g.reshape(vars[ATTN_VECTOR], &[self.hidden, 1])?;
        let scores = g.matmul(rows, a)?;
        let scores = g.reshape(scores, &[k])?;
        let scores = g.add_scalar(scores, vars[ATTN_BIAS])?;
        let weights = g.softmax(scores)?;
        let w_row = g.reshape(weights, &[1, k])?;
        let emb = g.matmul(w_row, rows)?;
        let embedding = g.reshape(emb, &[self.hidden])?;
        Ok(SpanEmbedding { embedding, weights })
    }

    /// Two logits (F, T) from the concatenated span embeddings.
    pub fn forward_pair(
        &self,
        g: &mut Graph<'_>,
        vars: &[Var],
        h: Var,
        span1: &[usize],
        span2: &[usize],
    ) -> Result<Var> {
        self.forward_split(g, vars, h, span1, h, span2)
    }

    /// Like [`SpanHead::forward_pair`] with the two spans drawn from
    /// separately encoded sentences.
    pub fn forward_split(
        &self,
        g: &mut Graph<'_>,
        vars: &[Var],
        h1: Var,
        span1: &[usize],
        h2: Var,
        span2: &[usize],
    ) -> Result<Var> {
        let e1 = self.span_embed(g, vars, h1, span1)?;
        let e2 = self.span_embed(g, vars, h2, span2)?;
        let joined = g.concat(&[e1.embedding, e2.embedding])?;
        let col = g.reshape(joined, &[2 * self.hidden, 1])?;
        let logits = g.matmul(vars[W_OUT], col)?;
        let logits = g.reshape(logits, &[2])?;
        g.add(logits, vars[B_OUT])
    }

    /// Logits for fixed hidden states.
    pub fn logits(&self, h: &HiddenStates, span1: &[usize], span2: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let hv = g.input(h.matrix());
        let out = self.forward_pair(&mut g, &vars, hv, span1, span2)?;
        Ok(g.value(out).clone())
    }

    /// Attention weights over one span for fixed hidden states.
    pub fn span_weights(&self, h: &HiddenStates, span: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let hv = g.input(h.matrix());
        let e = self.span_embed(&mut g, &vars, hv, span)?;
        Ok(g.value(e.weights).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn from_checkpoint(params: &[Parameter]) -> Result<Self> {
        let a = params
            .iter()
            .find(|p| p.name == "span.attn.vector")
            .ok_or_else(|| Error::Format("checkpoint lacks span.attn.vector".into()))?;
        let h = a.value.len();
        Self::from_parts(
            checkpoint::take(params, "span.attn.vector", &[h])?,
            checkpoint::take(params, "span.attn.bias", &[1])?.item(),
            checkpoint::take(params, "classifier.weight", &[2, 2 * h])?,
            checkpoint::take(params, "classifier.bias", &[2])?,
        )
    }
}

/// Argmax over (F, T) logits; an exact tie is `F`.
pub fn predict(logits: &Tensor) -> Label {
    let d = logits.data();
    if d.len() == 2 && d[1] > d[0] {
        Label::True
    } else {
        Label::False
    }
}
