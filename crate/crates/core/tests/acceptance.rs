//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero when any criterion fails.
//!
//! Optional real-data checks read these variables:
//!
//! * `WIC_DATA_DIR`: root of the released multilingual WiC data;
//! * `WIC_MBERT_STORE` and `WIC_MBERT_VOCAB`: a hidden-state store of the
//!   en-en training and dev pairs and the vocabulary it was exported with.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use wic::classifiers::{accuracy, train_lr, train_mlp, MlpModel, TrainRegime};
use wic::corpus::CharSpan;
use wic::corpus::{
    load_conllu, load_mixed, load_pairs, load_records, write_pairs, DatasetSplit, Label, LangPair,
    Side, SplitName, WicPair, DEV_HALF,
};
use wic::encoder::{EncoderConfig, HiddenStates, PrecomputedStore, ToyEncoder, NULL_PAIR_ID};
use wic::features::{DependentCombine, FeatureExtractor, StateSource};
use wic::harness::synthetic::{synthetic_annotation, synthetic_pairs, synthetic_vocab};
use wic::harness::{
    emit_report, encode_pair, finetune, run_with_data, write_outputs, EncoderSource,
    ExperimentConfig, ExperimentData, FinetuneRegime, ResultGrid, SplitFiles, Strategy,
};
use wic::numgrad::{grad_check, Graph, OptimizerConfig, Tensor, Var};
use wic::spanhead::SpanHead;
use wic::subword::{
    align_span, pool, pre_split, tokenize, PoolingMode, TokenizedSentence, Vocabulary,
};

type Check = std::result::Result<String, String>;

fn fail<T>(msg: impl Into<String>) -> std::result::Result<T, String> {
    Err(msg.into())
}

fn ok_or<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

enum Outcome {
    Pass,
    Fail,
    Skip,
}

fn report(name: &str, outcome: Outcome, detail: &str) -> bool {
    let tag = match outcome {
        Outcome::Pass => "PASS",
        Outcome::Fail => "FAIL",
        Outcome::Skip => "SKIP",
    };
    println!("{tag} {name}: {detail}");
    !matches!(outcome, Outcome::Fail)
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    match f() {
        Ok(detail) => report(name, Outcome::Pass, &detail),
        Err(detail) => report(name, Outcome::Fail, &detail),
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let d = Normal::new(0.0, std).unwrap();
    Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(rng)).collect()).unwrap()
}

/// Values at least `gap` away from zero, so a ReLU kink never sits inside
/// the finite-difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    normal(rng, shape, 1.0).map(|v| {
        if v.abs() < gap {
            v.signum() * gap + v
        } else {
            v
        }
    })
}

// ---------------------------------------------------------------------------
// Gradient suite

const EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 100;

/// Reduces any output to a scalar through fixed random weights, so every
/// output coordinate carries a distinct gradient.
fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> wic::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = normal(&mut rng, g.shape(out), 1.0);
    let r = g.constant(r);
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

type OpCase = (
    &'static str,
    Vec<Tensor>,
    Box<dyn Fn(&mut Graph<'_>, &[Var]) -> wic::Result<Var>>,
);

fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let p = move |s: u64| s.wrapping_mul(31).wrapping_add(seed);
    vec![
        (
            "matmul",
            vec![normal(r, &[3, 4], 1.0), normal(r, &[4, 2], 1.0)],
            Box::new(move |g, v| {
                let o = g.matmul(v[0], v[1])?;
                project(g, o, p(1))
            }),
        ),
        (
            "matmul_nt",
            vec![normal(r, &[3, 4], 1.0), normal(r, &[2, 4], 1.0)],
            Box::new(move |g, v| {
                let o = g.matmul_nt(v[0], v[1])?;
                project(g, o, p(2))
            }),
        ),
        (
            "add",
            vec![normal(r, &[3, 4], 1.0), normal(r, &[3, 4], 1.0)],
            Box::new(move |g, v| {
                let o = g.add(v[0], v[1])?;
                project(g, o, p(3))
            }),
        ),
        (
            "add_row",
            vec![normal(r, &[3, 4], 1.0), normal(r, &[4], 1.0)],
            Box::new(move |g, v| {
                let o = g.add_row(v[0], v[1])?;
                project(g, o, p(4))
            }),
        ),
        (
            "add_scalar",
            vec![normal(r, &[5], 1.0), normal(r, &[1], 1.0)],
            Box::new(move |g, v| {
                let o = g.add_scalar(v[0], v[1])?;
                project(g, o, p(5))
            }),
        ),
        (
            "mul",
            vec![normal(r, &[2, 3], 1.0), normal(r, &[2, 3], 1.0)],
            Box::new(move |g, v| {
                let o = g.mul(v[0], v[1])?;
                project(g, o, p(6))
            }),
        ),
        (
            "scale",
            vec![normal(r, &[4], 1.0)],
            Box::new(move |g, v| {
                let o = g.scale(v[0], -1.7);
                project(g, o, p(7))
            }),
        ),
        (
            "relu",
            vec![away_from_zero(r, &[3, 3], 1e-3)],
            Box::new(move |g, v| {
                let o = g.relu(v[0]);
                project(g, o, p(8))
            }),
        ),
        (
            "softmax(vector)",
            vec![normal(r, &[5], 1.0)],
            Box::new(move |g, v| {
                let o = g.softmax(v[0])?;
                project(g, o, p(9))
            }),
        ),
        (
            "softmax(rows)",
            vec![normal(r, &[3, 4], 1.0)],
            Box::new(move |g, v| {
                let o = g.softmax(v[0])?;
                project(g, o, p(10))
            }),
        ),
        (
            "gather_rows",
            vec![normal(r, &[4, 3], 1.0)],
            Box::new(move |g, v| {
                let o = g.gather_rows(v[0], &[2, 0, 2])?;
                project(g, o, p(11))
            }),
        ),
        (
            "slice_cols",
            vec![normal(r, &[3, 5], 1.0)],
            Box::new(move |g, v| {
                let o = g.slice_cols(v[0], 1, 4)?;
                project(g, o, p(12))
            }),
        ),
        (
            "concat_cols",
            vec![normal(r, &[3, 2], 1.0), normal(r, &[3, 3], 1.0)],
            Box::new(move |g, v| {
                let o = g.concat_cols(&[v[0], v[1]])?;
                project(g, o, p(13))
            }),
        ),
        (
            "concat",
            vec![normal(r, &[3], 1.0), normal(r, &[2], 1.0)],
            Box::new(move |g, v| {
                let o = g.concat(&[v[0], v[1]])?;
                project(g, o, p(14))
            }),
        ),
        (
            "reshape",
            vec![normal(r, &[2, 3], 1.0)],
            Box::new(move |g, v| {
                let o = g.reshape(v[0], &[3, 2])?;
                project(g, o, p(15))
            }),
        ),
        (
            "sum",
            vec![normal(r, &[2, 3], 1.0)],
            Box::new(move |g, v| {
                let m = g.mul(v[0], v[0])?;
                Ok(g.sum(m))
            }),
        ),
        (
            "layer_norm",
            vec![
                normal(r, &[3, 5], 1.0),
                normal(r, &[5], 1.0),
                normal(r, &[5], 1.0),
            ],
            Box::new(move |g, v| {
                let o = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                project(g, o, p(16))
            }),
        ),
        (
            "cross_entropy",
            vec![normal(r, &[3, 4], 1.0)],
            Box::new(move |g, v| g.cross_entropy(v[0], &[1, 3, 0])),
        ),
        (
            "bce_with_logits",
            vec![normal(r, &[4], 2.0)],
            Box::new(move |g, v| g.bce_with_logits(v[0], &[1.0, 0.0, 0.3, 1.0])),
        ),
    ]
}

/// Inputs to a ReLU must sit at least this far from zero for a seed to be
/// checked: a central difference with step `EPS` straddling the kink
/// measures the average of two one-sided slopes, not the derivative.
const KINK_MARGIN: f64 = 1e-3;

fn clear_of_kinks(pre: &Tensor) -> bool {
    pre.data().iter().all(|v| v.abs() >= KINK_MARGIN)
}

/// Two-layer MLP classifier: x[B×D] and all four parameters are checked.
/// `None` when a hidden pre-activation lies within the kink margin.
#[allow(clippy::type_complexity)]
fn mlp_case(
    seed: u64,
) -> Option<(
    Vec<Tensor>,
    impl Fn(&mut Graph<'_>, &[Var]) -> wic::Result<Var>,
)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let (d, h) = (5, 4);
    let w1 = normal(&mut rng, &[h, d], 0.7);
    let b1 = normal(&mut rng, &[h], 0.7);
    let w2 = normal(&mut rng, &[2, h], 0.7);
    let b2 = normal(&mut rng, &[2], 0.7);
    let x = normal(&mut rng, &[3, d], 1.0);
    // pre-activations x·W1ᵀ + b1, computed by hand
    let pre: Vec<f64> = (0..3)
        .flat_map(|r| (0..h).map(move |j| (r, j)))
        .map(|(r, j)| b1.data()[j] + (0..d).map(|k| x.row(r)[k] * w1.row(j)[k]).sum::<f64>())
        .collect();
    if !clear_of_kinks(&Tensor::vector(pre).unwrap()) {
        return None;
    }
    let model = MlpModel::from_parts(w1.clone(), b1.clone(), w2.clone(), b2.clone()).unwrap();
    let f = move |g: &mut Graph<'_>, v: &[Var]| {
        let z = model.logits_var(g, &v[1..], v[0])?;
        g.cross_entropy(z, &[1, 0, 1])
    };
    Some((vec![x, w1, b1, w2, b2], f))
}

/// Span head over free hidden states: H[T×h] and the head parameters.
fn span_head_case(
    seed: u64,
) -> (
    Vec<Tensor>,
    impl Fn(&mut Graph<'_>, &[Var]) -> wic::Result<Var>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
    let hidden = 4;
    let head = SpanHead::seeded(hidden, 0.5, seed).unwrap();
    let mut params: Vec<Tensor> = vec![normal(&mut rng, &[7, hidden], 1.0)];
    params.extend(head.params().iter().map(|p| p.value.clone()));
    let f = move |g: &mut Graph<'_>, v: &[Var]| {
        let z = head.forward_pair(g, &v[1..], v[0], &[1, 2, 3], &[5])?;
        g.cross_entropy(z, &[1])
    };
    (params, f)
}

/// Two-layer toy encoder with the span head on top; every encoder and head
/// parameter is checked. `None` when a feed-forward pre-activation lies
/// within the kink margin.
#[allow(clippy::type_complexity)]
fn encoder_case(
    seed: u64,
) -> Option<(
    Vec<Tensor>,
    impl Fn(&mut Graph<'_>, &[Var]) -> wic::Result<Var>,
)> {
    let cfg = EncoderConfig {
        layers: 2,
        heads: 2,
        hidden: 8,
        ffn: 12,
        max_len: 8,
        vocab_size: 11,
        dropout: 0.0,
        init_std: 0.4,
    };
    let enc = ToyEncoder::new(cfg, seed).unwrap();
    let ids = [1usize, 5, 7, 2, 9, 10];
    {
        let mut g = Graph::new();
        let vars: Vec<Var> = enc.params().iter().map(|p| g.input(&p.value)).collect();
        let out = enc.forward(&mut g, &vars, &ids, None).unwrap();
        if !out
            .ffn_pre_activations
            .iter()
            .all(|&v| clear_of_kinks(g.value(v)))
        {
            return None;
        }
    }
    let head = SpanHead::seeded(8, 0.4, seed.wrapping_add(1)).unwrap();
    let n_enc = enc.params().len();
    let mut params: Vec<Tensor> = enc.params().iter().map(|p| p.value.clone()).collect();
    params.extend(head.params().iter().map(|p| p.value.clone()));
    let f = move |g: &mut Graph<'_>, v: &[Var]| {
        let out = enc.forward(g, &v[..n_enc], &ids, None)?;
        let z = head.forward_pair(g, &v[n_enc..], out.hidden, &[1, 2], &[4])?;
        g.cross_entropy(z, &[0])
    };
    Some((params, f))
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut checked = 0usize;
    let mut note = |name: &str, seed: u64, r: wic::numgrad::GradCheckReport| {
        checked += r.coordinates;
        if r.max_rel_error > worst.0 {
            worst = (r.max_rel_error, format!("{name} seed {seed}"));
        }
    };
    let (mut seeds, mut skipped) = (0u64, Vec::new());
    let mut seed = 0u64;
    while seeds < GRAD_SEEDS {
        let (Some((mp, mf)), Some((ep, ef))) = (mlp_case(seed), encoder_case(seed)) else {
            skipped.push(seed);
            seed += 1;
            continue;
        };
        for (name, params, f) in op_cases(seed) {
            note(name, seed, ok_or(grad_check(f, &params, EPS))?);
        }
        note("mlp", seed, ok_or(grad_check(mf, &mp, EPS))?);
        let (p, f) = span_head_case(seed);
        note("span head", seed, ok_or(grad_check(f, &p, EPS))?);
        note("toy encoder", seed, ok_or(grad_check(ef, &ep, EPS))?);
        seeds += 1;
        seed += 1;
    }
    let took = start.elapsed();
    let detail = format!(
        "{seeds} seeds ({} skipped for a ReLU input within {KINK_MARGIN:e} of zero: {skipped:?}), {checked} coordinates, eps {EPS:e}, max rel err {:.2e} ({}), {:.1}s",
        skipped.len(),
        worst.0,
        worst.1,
        took.as_secs_f64()
    );
    if worst.0 >= GRAD_TOL {
        return fail(detail);
    }
    if took > Duration::from_secs(60) {
        return fail(format!("too slow: {detail}"));
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn span_head_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50u64 {
        let (t, h) = (rng.random_range(4..12), rng.random_range(2..9));
        let head = SpanHead::seeded(h, 0.5, trial).unwrap();
        let hs = normal(&mut rng, &[t, h], 1.0);
        let a = rng.random_range(0..t - 1);
        let b = rng.random_range(a + 1..=t.min(a + 4));
        let span1: Vec<usize> = (a..b).collect();
        let span2 = vec![rng.random_range(0..t)];

        let states = ok_or(HiddenStates::new(hs.clone()))?;
        let w = ok_or(head.span_weights(&states, &span1))?;
        if (w.sum() - 1.0).abs() > 1e-12 {
            return fail(format!("trial {trial}: span weights sum to {}", w.sum()));
        }

        let before = ok_or(head.logits(&states, &span1, &span2))?;
        let mut perturbed = hs.clone();
        for r in (0..t).filter(|r| !span1.contains(r) && !span2.contains(r)) {
            for c in 0..h {
                perturbed.data_mut()[r * h + c] += 10.0 * rng.random::<f64>() - 5.0;
            }
        }
        let after = ok_or(head.logits(&ok_or(HiddenStates::new(perturbed))?, &span1, &span2))?;
        let same = before
            .data()
            .iter()
            .zip(after.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return fail(format!(
                "trial {trial}: logits moved when non-span rows changed"
            ));
        }

        let mut g = Graph::new();
        let vars = head.bind(&mut g, false);
        let hv = g.input(&hs);
        let e = ok_or(head.span_embed(&mut g, &vars, hv, &span2))?;
        if g.value(e.embedding).data() != hs.row(span2[0]) {
            return fail(format!(
                "trial {trial}: singleton span is not the raw hidden row"
            ));
        }
    }
    Ok("50 random heads: weights sum to 1, non-span rows inert, singleton = raw row".into())
}

fn pooling_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 1..=8 {
        for _ in 0..25 {
            let h = rng.random_range(1..16);
            let rows = normal(&mut rng, &[k, h], 3.0);
            let avg = ok_or(pool(&rows, PoolingMode::Average))?;
            // independent oracle: column sums by hand
            for c in 0..h {
                let s: f64 = (0..k).map(|r| rows.row(r)[c]).sum();
                worst = worst.max((avg.data()[c] - s / k as f64).abs());
            }
            let sum = ok_or(pool(&rows, PoolingMode::Sum))?;
            worst = worst.max(avg.max_abs_diff(&sum.map(|v| v / k as f64)));
        }
    }
    if worst > 1e-12 {
        return fail(format!("max deviation {worst:e}"));
    }
    Ok(format!("k = 1..8, max deviation {worst:.1e}"))
}

fn feature_dimensions() -> Check {
    const H: usize = 768;
    let vocab = synthetic_vocab();
    let pair = ok_or(synthetic_pairs(1, SplitName::Test, &LangPair::en_en(), 3))?.remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = PrecomputedStore::new(H);
    for side in [Side::First, Side::Second] {
        let n = tokenize(&vocab, pair.sentence(side))
            .with_specials(&vocab)
            .len();
        ok_or(store.insert(&pair.id, side, normal(&mut rng, &[n, H], 1.0)))?;
    }
    let n = tokenize(&vocab, "null").with_specials(&vocab).len();
    ok_or(store.insert(NULL_PAIR_ID, Side::First, normal(&mut rng, &[n, H], 1.0)))?;

    let dir = ok_or(tempfile::tempdir())?;
    let path = dir.path().join("store.tsv");
    ok_or(store.save(&path))?;
    let store = ok_or(PrecomputedStore::load(&path))?;
    if store.hidden_size() != H {
        return fail(format!("store reloads with H={}", store.hidden_size()));
    }
    let ex = FeatureExtractor::new(
        StateSource::Store(&store),
        &vocab,
        PoolingMode::Average,
        DependentCombine::Sum,
    );
    let t = ok_or(ex.target_concat(&pair))?.dim();
    let a1 = synthetic_annotation(&pair, Side::First);
    let a2 = synthetic_annotation(&pair, Side::Second);
    let s = ok_or(ex.syntax(&pair, &a1, &a2))?.dim();
    if (t, s) != (2 * H, 6 * H) || (t, s) != (1536, 4608) {
        return fail(format!("target-concat D={t}, syntax D={s}"));
    }
    Ok(format!("H={H}: target-concat D={t}, syntax D={s}"))
}

// ---------------------------------------------------------------------------
// Classifier capacity

/// Two Gaussian clusters in 6 dimensions; points on the wrong side of the
/// generating hyperplane (or too close to it) are dropped, so the data is
/// linearly separable with margin by construction.
fn separable_data() -> (Vec<Tensor>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w_true = [1.0, -0.5, 0.8, 0.0, 0.3, -1.2];
    let norm = w_true.iter().map(|w: &f64| w * w).sum::<f64>().sqrt();
    let noise = Normal::new(0.0, 0.6).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    while x.len() < 256 {
        let label = if x.len() % 2 == 0 {
            Label::True
        } else {
            Label::False
        };
        let sign = if label == Label::True { 1.0 } else { -1.0 };
        let v: Vec<f64> = w_true
            .iter()
            .map(|w| sign * 1.5 * w / norm + noise.sample(&mut rng))
            .collect();
        let margin = sign * v.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() / norm;
        if margin > 0.5 {
            x.push(Tensor::vector(v).unwrap());
            y.push(label);
        }
    }
    (x, y)
}

/// XOR of the signs of two coordinates near (±1, ±1), with uniform noise
/// of at most 0.1 per coordinate.
fn xor_data() -> (Vec<Tensor>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..256 {
        let (a, b) = ((i & 1) as f64, ((i >> 1) & 1) as f64);
        let p = 2.0 * a - 1.0 + rng.random_range(-0.1..0.1);
        let q = 2.0 * b - 1.0 + rng.random_range(-0.1..0.1);
        x.push(Tensor::vector(vec![p, q]).unwrap());
        y.push(if a != b { Label::True } else { Label::False });
    }
    (x, y)
}

/// Seed of the MLP regime in the XOR check; see the decisions notes on
/// initialisation sensitivity.
const XOR_SEED: u64 = 8;

fn classifier_capacity() -> Check {
    let start = Instant::now();
    let (x, y) = separable_data();
    let regime = TrainRegime::lr_default();
    let lr = ok_or(train_lr(&x, &y, &regime))?;
    let pred: Vec<Label> = x
        .iter()
        .map(|e| lr.model.predict(e))
        .collect::<wic::Result<_>>()
        .map_err(|e| e.to_string())?;
    let lr_acc = accuracy(&pred, &y).unwrap();

    let (x, y) = xor_data();
    let regime = TrainRegime {
        seed: XOR_SEED,
        ..TrainRegime::mlp_default()
    };
    let mlp = ok_or(train_mlp(&x, &y, &regime))?;
    let pred: Vec<Label> = x
        .iter()
        .map(|e| mlp.model.predict(e))
        .collect::<wic::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mlp_acc = accuracy(&pred, &y).unwrap();
    let detail = format!(
        "LR {:.1}% on separable data (150 epochs, SGD 0.0025, batch 32); MLP {:.1}% on XOR ({} epochs, Adam 0.001, seed {XOR_SEED}); {:.1}s",
        100.0 * lr_acc,
        100.0 * mlp_acc,
        mlp.epoch_losses.len(),
        start.elapsed().as_secs_f64()
    );
    if lr_acc < 1.0 || mlp_acc < 1.0 {
        return fail(detail);
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn finetune_regime() -> FinetuneRegime {
    FinetuneRegime {
        epochs: 40,
        batch_size: 32,
        optimizer: OptimizerConfig::adamw(1e-3),
        head_init_std: 0.02,
        joint: true,
    }
}

fn end_to_end_finetune() -> Check {
    let start = Instant::now();
    let vocab = synthetic_vocab();
    let corpus = ok_or(synthetic_pairs(
        200,
        SplitName::Train,
        &LangPair::en_en(),
        42,
    ))?;
    let (train, held_out) = corpus.split_at(160);
    let regime = finetune_regime();
    let out = ok_or(finetune(
        train,
        None,
        &vocab,
        EncoderConfig::default(),
        &regime,
        42,
    ))?;
    let acc = |pairs: &[WicPair]| -> std::result::Result<f64, String> {
        let mut pred = Vec::new();
        for p in pairs {
            pred.push(ok_or(out.model.predict(&ok_or(encode_pair(&vocab, p))?))?);
        }
        let gold: Vec<Label> = pairs.iter().map(|p| p.gold.unwrap()).collect();
        Ok(accuracy(&pred, &gold).unwrap())
    };
    let (tr, ho) = (acc(train)?, acc(held_out)?);
    let took = start.elapsed();
    let detail = format!(
        "200 pairs (160 train / 40 held out), 2-layer encoder, {} epochs: train {:.1}%, held-out {:.1}%, {:.1}s",
        regime.epochs,
        100.0 * tr,
        100.0 * ho,
        took.as_secs_f64()
    );
    if tr < 0.95 || ho < 0.90 || regime.epochs > 50 || took > Duration::from_secs(120) {
        return fail(detail);
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn synthetic_data(with_arabic: bool) -> ExperimentData {
    let train = synthetic_pairs(64, SplitName::Train, &LangPair::en_en(), 1).unwrap();
    let mut annotations = std::collections::BTreeMap::new();
    let mut test = Vec::new();
    let mut lps = vec!["en-en", "fr-fr", "en-fr"];
    if with_arabic {
        lps.push("ar-ar");
    }
    for (i, lp) in lps.into_iter().enumerate() {
        let lp: LangPair = lp.parse().unwrap();
        let pairs = synthetic_pairs(12, SplitName::Test, &lp, 100 + i as u64).unwrap();
        test.push(DatasetSplit::new(SplitName::Test, lp, pairs).unwrap());
    }
    for p in train.iter().chain(test.iter().flat_map(|s| s.pairs.iter())) {
        for side in [Side::First, Side::Second] {
            annotations.insert(p.sentence_key(side), synthetic_annotation(p, side));
        }
    }
    ExperimentData {
        train: DatasetSplit::new(SplitName::Train, LangPair::en_en(), train).unwrap(),
        dev: None,
        test,
        annotations,
    }
}

fn toy_config(strategy: Strategy, dir: &Path) -> ExperimentConfig {
    let split = |n: &str| SplitFiles {
        data: dir.join(format!("{n}.data.json")),
        gold: None,
        conllu: Some(dir.join(format!("{n}.conllu"))),
    };
    ExperimentConfig {
        system: None,
        strategy,
        encoder: EncoderSource::Toy {
            config: EncoderConfig {
                layers: 1,
                hidden: 16,
                ffn: 32,
                ..EncoderConfig::default()
            },
            checkpoint: None,
        },
        vocab: dir.join("vocab.txt"),
        pooling: PoolingMode::Average,
        dependent_combine: DependentCombine::Sum,
        joint_features: false,
        regime: None,
        finetune: FinetuneRegime {
            epochs: 2,
            ..finetune_regime()
        },
        train: split("train"),
        dev: None,
        test: vec![split("test")],
        dev_subset: None,
        seed: 17,
        output_dir: dir.join("out"),
    }
}

fn determinism() -> Check {
    let vocab = synthetic_vocab();
    let data = synthetic_data(true);
    let mut checked = Vec::new();
    for strategy in [
        Strategy::Finetune,
        Strategy::FeatureLr,
        Strategy::FeatureSyntaxMlp,
    ] {
        let dir = ok_or(tempfile::tempdir())?;
        let cfg = toy_config(strategy, dir.path());
        let mut files = Vec::new();
        for run in 0..2 {
            let out_dir = dir.path().join(format!("run{run}"));
            let outcome = ok_or(run_with_data(&cfg, &data, &vocab))?;
            ok_or(write_outputs(&out_dir, &outcome))?;
            files.push((
                ok_or(fs::read(out_dir.join("results.csv")))?,
                ok_or(fs::read(out_dir.join("predictions.tsv")))?,
            ));
        }
        if files[0] != files[1] {
            return fail(format!(
                "{strategy:?}: results differ between identical runs"
            ));
        }
        checked.push(format!("{strategy:?}"));
    }
    Ok(format!(
        "byte-identical results.csv and predictions.tsv for {}",
        checked.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// Data round-trip

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Whole-word vocabulary over the fixture; words of six or more characters
/// are split into a three-character head and a `##` tail so targets span
/// several sub-tokens.
fn fixture_vocab(pairs: &[WicPair]) -> Vocabulary {
    let mut pieces = Vec::new();
    for p in pairs {
        for text in [&p.sentence1, &p.sentence2] {
            let chars: Vec<char> = text.chars().collect();
            for w in pre_split(text) {
                let word: String = chars[w.start..w.end].iter().collect();
                if word.chars().count() >= 6 {
                    let head: String = word.chars().take(3).collect();
                    let tail: String = word.chars().skip(3).collect();
                    pieces.push(head);
                    pieces.push(format!("##{tail}"));
                } else {
                    pieces.push(word);
                }
            }
        }
    }
    pieces.sort();
    pieces.dedup();
    Vocabulary::with_default_specials(pieces).unwrap()
}

/// The aligned tokens are consecutive and their character ranges tile the
/// target span with nothing left over.
fn covers_exactly(
    tok: &TokenizedSentence,
    idx: &[usize],
    span: CharSpan,
) -> std::result::Result<(), String> {
    if idx.is_empty() {
        return fail("no tokens aligned");
    }
    let mut pos = span.start;
    for w in idx.windows(2) {
        if w[1] != w[0] + 1 {
            return fail(format!("non-consecutive tokens {idx:?}"));
        }
    }
    for &i in idx {
        let o = tok.offsets[i].ok_or("special token aligned")?;
        if o.start != pos {
            return fail(format!("gap or overlap at char {pos}: token covers {o:?}"));
        }
        pos = o.end;
    }
    if pos != span.end {
        return fail(format!("tokens end at {pos}, span ends at {}", span.end));
    }
    Ok(())
}

fn find_files(root: &Path, name: &str, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(root) else {
        return;
    };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            find_files(&p, name, out);
        } else if p.file_name().is_some_and(|n| n == name) {
            out.push(p);
        }
    }
}

fn released_counts(root: &Path) -> std::result::Result<String, String> {
    let locate = |name: &str| -> std::result::Result<PathBuf, String> {
        let mut hits = Vec::new();
        find_files(root, name, &mut hits);
        hits.sort();
        hits.into_iter()
            .next()
            .ok_or_else(|| format!("{name} not found under {}", root.display()))
    };
    let train = ok_or(load_pairs(&locate("training.en-en.data")?, None))?;
    let dev = ok_or(ok_or(load_pairs(&locate("dev.en-en.data")?, None))?.with_subset(DEV_HALF))?;
    let test = ok_or(load_pairs(&locate("test.en-en.data")?, None))?;
    let counts = (
        train.active().len(),
        dev.active().len(),
        test.active().len(),
    );
    if counts != (8000, 500, 1000) {
        return fail(format!(
            "en-en counts {counts:?}, expected (8000, 500, 1000)"
        ));
    }
    Ok("en-en 8000/500/1000".into())
}

fn data_round_trip() -> Check {
    let data = fixture("wic8.data.json");
    let gold = fixture("wic8.gold.json");
    let records = ok_or(load_records(&data, Some(&gold)))?;
    if records.len() != 8 {
        return fail(format!("{} pairs in the fixture", records.len()));
    }
    let pairs: Vec<WicPair> = records.iter().map(|(_, p)| p.clone()).collect();
    let first_two: Vec<Option<Label>> = pairs[..2].iter().map(|p| p.gold).collect();
    if first_two != [Some(Label::False), Some(Label::True)] {
        return fail(format!("first two gold labels {first_two:?}"));
    }

    let vocab = fixture_vocab(&pairs);
    let mut multi_piece = 0;
    for p in &pairs {
        for side in [Side::First, Side::Second] {
            let tok = tokenize(&vocab, p.sentence(side));
            let idx = ok_or(align_span(&tok, p.span(side)))?;
            covers_exactly(&tok, &idx, p.span(side))
                .map_err(|e| format!("{} side {side:?}: {e}", p.id))?;
            if idx.len() > 1 {
                multi_piece += 1;
            }
        }
    }

    let parses = ok_or(load_conllu(&fixture("wic8.conllu")))?;
    let grouped = ok_or(load_mixed(&data, Some(&gold)))?;

    let dir = ok_or(tempfile::tempdir())?;
    let (d2, g2) = (
        dir.path().join("rt.data.json"),
        dir.path().join("rt.gold.json"),
    );
    ok_or(write_pairs(&pairs, &d2, Some(&g2)))?;
    let again: Vec<WicPair> = ok_or(load_records(&d2, Some(&g2)))?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    if again != pairs {
        return fail("pairs changed across write and reload");
    }
    let mut detail = format!(
        "8 pairs in {} language-pair groups, gold F then T, {multi_piece} multi-piece target spans aligned, {} parses, write/load equal",
        grouped.len(),
        parses.len()
    );
    match std::env::var_os("WIC_DATA_DIR") {
        Some(root) => detail.push_str(&format!("; {}", released_counts(Path::new(&root))?)),
        None => detail.push_str("; released split counts not checked (WIC_DATA_DIR unset)"),
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn report_format() -> Check {
    let mut grid = ResultGrid::new();
    ok_or(grid.insert("mbert+LR", "en-en", 0.845))?;
    ok_or(grid.insert("mbert+LR", "ar-ar", 0.5))?;
    ok_or(grid.insert("mbert+Syntax+LR", "en-en", 0.9))?;
    grid.add_system("mbert+Syntax+LR");
    let rep = emit_report(&grid);
    let line = |sys: &str| {
        rep.text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(sys))
            .unwrap_or("")
            .to_string()
    };
    let header: Vec<String> = rep
        .text
        .lines()
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(String::from)
        .collect();
    let col = |sys: &str, lp: &str| -> Option<String> {
        let i = header.iter().position(|h| h == lp)?;
        line(sys).split_whitespace().nth(i).map(String::from)
    };
    let checks = [
        (col("mbert+LR", "en-en"), "84.5%"),
        (col("mbert+LR", "ar-ar"), "50.0%"),
        (col("mbert+Syntax+LR", "ar-ar"), "--"),
    ];
    for (got, want) in &checks {
        if got.as_deref() != Some(*want) {
            return fail(format!("expected {want}, got {got:?} in\n{}", rep.text));
        }
    }

    // The same convention through a real syntax run with Arabic test pairs.
    let vocab = synthetic_vocab();
    let data = synthetic_data(true);
    let dir = ok_or(tempfile::tempdir())?;
    let mut cfg = toy_config(Strategy::FeatureSyntaxLr, dir.path());
    cfg.regime = Some(TrainRegime {
        max_iters: 5,
        ..TrainRegime::lr_default()
    });
    let out = ok_or(run_with_data(&cfg, &data, &vocab))?;
    let text = emit_report(&ok_or(out.grid())?).text;
    let header: Vec<&str> = text
        .lines()
        .next()
        .unwrap_or("")
        .split_whitespace()
        .collect();
    let row: Vec<&str> = text
        .lines()
        .nth(1)
        .unwrap_or("")
        .split_whitespace()
        .collect();
    let ar = header
        .iter()
        .position(|h| *h == "ar-ar")
        .and_then(|i| row.get(i));
    if ar != Some(&"--") {
        return fail(format!("syntax run renders ar-ar as {ar:?}:\n{text}"));
    }
    Ok("0.845 renders as 84.5%, absent ar syntax cells as --".into())
}

// ---------------------------------------------------------------------------

fn mbert_store() -> Option<Check> {
    let store = std::env::var_os("WIC_MBERT_STORE")?;
    let vocab = std::env::var_os("WIC_MBERT_VOCAB")?;
    let root = std::env::var_os("WIC_DATA_DIR")?;
    Some((|| {
        let locate = |name: &str| {
            let mut hits = Vec::new();
            find_files(Path::new(&root), name, &mut hits);
            hits.sort();
            hits.into_iter()
                .next()
                .ok_or_else(|| format!("{name} not found"))
        };
        let (train_data, dev_data) = (locate("training.en-en.data")?, locate("dev.en-en.data")?);
        let gold = |p: &Path| p.with_extension("gold");
        let train = ok_or(load_pairs(&train_data, Some(&gold(&train_data))))?;
        let dev =
            ok_or(ok_or(load_pairs(&dev_data, Some(&gold(&dev_data))))?.with_subset(DEV_HALF))?;
        let dev = ok_or(DatasetSplit::new(
            SplitName::Test,
            LangPair::en_en(),
            dev.active().to_vec(),
        ))?;
        let vocab = ok_or(Vocabulary::load(Path::new(&vocab)))?;
        let dir = ok_or(tempfile::tempdir())?;
        let mut cfg = toy_config(Strategy::FeatureLr, dir.path());
        cfg.encoder = EncoderSource::Store {
            path: PathBuf::from(&store),
        };
        cfg.system = Some("mBERT+LR".into());
        let data = ExperimentData {
            train,
            dev: None,
            test: vec![dev],
            annotations: Default::default(),
        };
        let out = ok_or(run_with_data(&cfg, &data, &vocab))?;
        let acc = out.results().first().map(|r| r.accuracy).unwrap_or(0.0);
        let detail = format!("mBERT+LR on the en-en dev subset: {:.1}%", 100.0 * acc);
        if (0.45..=0.65).contains(&acc) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })())
}

fn main() {
    let mut ok = true;
    ok &= run("gradient suite", gradient_suite);
    ok &= run("span-head invariants", span_head_invariants);
    ok &= run("pooling law", pooling_law);
    ok &= run("feature dimensions", feature_dimensions);
    ok &= run("classifier capacity", classifier_capacity);
    ok &= run("end-to-end fine-tuning", end_to_end_finetune);
    ok &= run("determinism", determinism);
    ok &= run("data round-trip", data_round_trip);
    ok &= run("report format", report_format);
    ok &= match mbert_store() {
        Some(r) => match r {
            Ok(d) => report("mBERT store accuracy", Outcome::Pass, &d),
            Err(d) => report("mBERT store accuracy", Outcome::Fail, &d),
        },
        None => report(
            "mBERT store accuracy",
            Outcome::Skip,
            "set WIC_MBERT_STORE, WIC_MBERT_VOCAB and WIC_DATA_DIR to run",
        ),
    };
    if !ok {
        std::process::exit(1);
    }
}
