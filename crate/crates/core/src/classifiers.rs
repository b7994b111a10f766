//! Logistic regression and a two-layer MLP over frozen feature vectors.
//!
//! The MLP computes `softmax(W2 · relu(W1 · e + b1) + b2)` with `W1` square
//! in the feature dimension unless a hidden width is set explicitly.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::corpus::Label;
use crate::error::{dim_err, Error, Result};
use crate::numgrad::{
    bind, sigmoid, step, Graph, OptimizerConfig, OptimizerState, Parameter, Tensor, Var,
};

/// Binary logistic regression, `P(T) = sigmoid(w · e + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrModel {
    params: Vec<Parameter>,
}

const LR_W: usize = 0;
const LR_B: usize = 1;

impl LrModel {
    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_parts(Tensor::zeros(&[dim]), 0.0)
    }

    pub fn from_parts(w: Tensor, b: f64) -> Result<Self> {
        if w.shape().len() != 1 {
            return Err(dim_err!("LR weights must be a vector, got {:?}", w.shape()));
        }
        w.check_finite("LR weights")?;
        if !b.is_finite() {
            return Err(Error::Numeric("LR bias is not finite".into()));
        }
        Ok(LrModel {
            params: vec![
                Parameter::new("lr.weight", w),
                Parameter::new("lr.bias", Tensor::vector(vec![b])?),
            ],
        })
    }

    pub fn dim(&self) -> usize {
        self.params[LR_W].value.len()
    }

    pub fn weights(&self) -> &Tensor {
        &self.params[LR_W].value
    }

    pub fn bias(&self) -> f64 {
        self.params[LR_B].value.data()[0]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn logit(&self, e: &Tensor) -> Result<f64> {
        if e.len() != self.dim() {
            return Err(dim_err!(
                "feature has {} values, model expects {}",
                e.len(),
                self.dim()
            ));
        }
        let w = self.weights().data();
        Ok(w.iter().zip(e.data()).map(|(a, b)| a * b).sum::<f64>() + self.bias())
    }

    /// Probability of [`Label::True`].
    pub fn prob(&self, e: &Tensor) -> Result<f64> {
        Ok(sigmoid(self.logit(e)?))
    }

    /// `T` when the probability exceeds one half; exactly one half is `F`.
    pub fn predict(&self, e: &Tensor) -> Result<Label> {
        Ok(if self.logit(e)? > 0.0 {
            Label::True
        } else {
            Label::False
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = checkpoint::load(path)?;
        let w = params
            .iter()
            .find(|p| p.name == "lr.weight")
            .ok_or_else(|| Error::Format("checkpoint lacks `lr.weight`".into()))?;
        let d = w.value.len();
        let w = checkpoint::take(&params, "lr.weight", &[d])?;
        let b = checkpoint::take(&params, "lr.bias", &[1])?;
        Self::from_parts(w, b.data()[0])
    }
}

/// Two-layer perceptron with a two-way softmax output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    params: Vec<Parameter>,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

impl MlpModel {
    /// Weights drawn from `N(0, 2 / (fan_in + fan_out))`, biases zero.
    pub fn init(dim: usize, hidden: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::Config("MLP dimensions must be positive".into()));
        }
        let mut draw = |rows: usize, cols: usize| -> Result<Tensor> {
            let std = (2.0 / (rows + cols) as f64).sqrt();
            let n = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
            Tensor::matrix(
                rows,
                cols,
                (0..rows * cols).map(|_| n.sample(rng)).collect(),
            )
        };
        let w1 = draw(hidden, dim)?;
        let w2 = draw(2, hidden)?;
        Self::from_parts(w1, Tensor::zeros(&[hidden]), w2, Tensor::zeros(&[2]))
    }

    pub fn from_parts(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let h = match w1.shape() {
            [h, _] => *h,
            s => return Err(dim_err!("W1 must be a matrix, got {s:?}")),
        };
        if b1.shape() != [h] || w2.shape() != [2, h] || b2.shape() != [2] {
            return Err(dim_err!(
                "MLP shapes W1 {:?}, b1 {:?}, W2 {:?}, b2 {:?} are inconsistent",
                w1.shape(),
                b1.shape(),
                w2.shape(),
                b2.shape()
            ));
        }
        let params = vec![
            Parameter::new("mlp.w1", w1),
            Parameter::new("mlp.b1", b1),
            Parameter::new("mlp.w2", w2),
            Parameter::new("mlp.b2", b2),
        ];
        for p in &params {
            p.value.check_finite(&p.name)?;
        }
        Ok(MlpModel { params })
    }

    pub fn dim(&self) -> usize {
        self.params[W1].value.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.params[W1].value.shape()[0]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    /// Logits for a `B×D` batch, `B×2`; `vars` are this model's parameters
    /// bound to `g` in order.
    pub fn logits_var(&self, g: &mut Graph<'_>, vars: &[Var], x: Var) -> Result<Var> {
        mlp_logits(g, vars, x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = checkpoint::load(path)?;
        let shape = params
            .iter()
            .find(|p| p.name == "mlp.w1")
            .map(|p| p.value.shape().to_vec())
            .ok_or_else(|| Error::Format("checkpoint lacks `mlp.w1`".into()))?;
        let [h, d] = shape[..] else {
            return Err(Error::Format("`mlp.w1` must be a matrix".into()));
        };
        Self::from_parts(
            checkpoint::take(&params, "mlp.w1", &[h, d])?,
            checkpoint::take(&params, "mlp.b1", &[h])?,
            checkpoint::take(&params, "mlp.w2", &[2, h])?,
            checkpoint::take(&params, "mlp.b2", &[2])?,
        )
    }

    /// `(P(F), P(T))` for one feature vector.
    pub fn probs(&self, e: &Tensor) -> Result<Tensor> {
        mlp_forward(self, e)
    }

    /// Argmax of the output; ties go to `F`.
    pub fn predict(&self, e: &Tensor) -> Result<Label> {
        let p = self.probs(e)?;
        Ok(Label::from_index(p.argmax()))
    }
}

fn mlp_logits(g: &mut Graph<'_>, vars: &[Var], x: Var) -> Result<Var> {
    let h = g.matmul_nt(x, vars[W1])?;
    let h = g.add_row(h, vars[B1])?;
    let h = g.relu(h);
    let z = g.matmul_nt(h, vars[W2])?;
    g.add_row(z, vars[B2])
}

/// `softmax(W2 · relu(W1 · e + b1) + b2)`.
pub fn mlp_forward(m: &MlpModel, e: &Tensor) -> Result<Tensor> {
    if e.len() != m.dim() {
        return Err(dim_err!(
            "feature has {} values, MLP expects {}",
            e.len(),
            m.dim()
        ));
    }
    let p = &m.params;
    let x = e.reshape(&[1, m.dim()])?;
    let h = x.matmul_nt(&p[W1].value)?;
    let mut h = h.reshape(&[m.hidden()])?;
    h.add_scaled(&p[B1].value, 1.0);
    let h = h.relu().reshape(&[1, m.hidden()])?;
    let mut z = h.matmul_nt(&p[W2].value)?.reshape(&[2])?;
    z.add_scaled(&p[B2].value, 1.0);
    z.softmax()
}

/// What one unit of `max_iters` counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterationUnit {
    /// Full passes over the shuffled training set.
    #[default]
    Epochs,
    /// Mini-batch updates.
    Steps,
}

/// Stop once the epoch loss has improved by less than `min_improvement`
/// over the last `window` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub window: usize,
    pub min_improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRegime {
    pub max_iters: usize,
    pub unit: IterationUnit,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// MLP hidden width; the feature dimension when unset.
    pub hidden: Option<usize>,
}

impl Default for TrainRegime {
    fn default() -> Self {
        Self::mlp_default()
    }
}

impl TrainRegime {
    /// 150 epochs of plain SGD, batch 32, learning rate 0.0025.
    pub fn lr_default() -> Self {
        TrainRegime {
            max_iters: 150,
            unit: IterationUnit::Epochs,
            batch_size: 32,
            optimizer: OptimizerConfig::sgd(0.0025),
            seed: 0,
            early_stop: None,
            hidden: None,
        }
    }

    /// Up to 200 epochs of Adam (0.9, 0.999), batch 32, learning rate 0.001.
    pub fn mlp_default() -> Self {
        TrainRegime {
            max_iters: 200,
            unit: IterationUnit::Epochs,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(0.001),
            seed: 0,
            early_stop: Some(EarlyStop {
                window: 10,
                min_improvement: 1e-6,
            }),
            hidden: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.batch_size == 0 || self.hidden == Some(0) {
            return Err(Error::Config(
                "iterations, batch size and hidden width must be positive".into(),
            ));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || es.min_improvement.is_nan() || es.min_improvement < 0.0 {
                return Err(Error::Config(
                    "early-stop window must be positive and min_improvement non-negative".into(),
                ));
            }
        }
        self.optimizer.validate()
    }
}

/// A trained model with its per-epoch mean training loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Fitted<M> {
    pub model: M,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub stopped_early: bool,
}

fn check_training_data(features: &[Tensor], labels: &[Label]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(dim_err!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        ));
    }
    let dim = features.first().map(|f| f.len()).unwrap_or(0);
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(dim_err!(
            "feature vectors of length {dim} and {} mixed",
            f.len()
        ));
    }
    for f in features {
        f.check_finite("feature vector")?;
    }
    let trues = labels.iter().filter(|&&l| l == Label::True).count();
    if trues == 0 || trues == labels.len() {
        return Err(Error::DegenerateData(format!(
            "training needs both labels; got {trues} T out of {}",
            labels.len()
        )));
    }
    Ok(dim)
}

fn batch_matrix(features: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    Tensor::from_rows(&idx.iter().map(|&i| features[i].data()).collect::<Vec<_>>())
}

/// Shared mini-batch loop: deterministic per-epoch shuffles drawn from `rng`.
fn run_epochs<F>(
    params: &mut [Parameter],
    n: usize,
    regime: &TrainRegime,
    rng: &mut ChaCha8Rng,
    mut batch_loss: F,
) -> Result<(Vec<f64>, usize, bool)>
where
    F: FnMut(&[Parameter], &[usize]) -> Result<(f64, Vec<Tensor>)>,
{
    let mut state = OptimizerState::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::new();
    let mut steps = 0;
    loop {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(regime.batch_size) {
            let (loss, grads) = batch_loss(params, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss became {loss}")));
            }
            total += loss * batch.len() as f64;
            for (p, g) in params.iter_mut().zip(grads) {
                p.grad = g;
            }
            step(params, &regime.optimizer, &mut state)?;
            steps += 1;
            if regime.unit == IterationUnit::Steps && steps >= regime.max_iters {
                break;
            }
        }
        losses.push(total / n as f64);
        let done = match regime.unit {
            IterationUnit::Epochs => losses.len() >= regime.max_iters,
            IterationUnit::Steps => steps >= regime.max_iters,
        };
        if done {
            return Ok((losses, steps, false));
        }
        if let Some(es) = regime.early_stop {
            let e = losses.len();
            if e > es.window && losses[e - 1 - es.window] - losses[e - 1] < es.min_improvement {
                return Ok((losses, steps, true));
            }
        }
    }
}

fn gradients_of(
    g: &Graph<'_>,
    loss: Var,
    vars: &[Var],
    params: &[Parameter],
) -> Result<Vec<Tensor>> {
    let mut grads = g.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
        })
        .collect())
}

/// Logistic regression trained with binary cross-entropy from zero weights.
pub fn train_lr(
    features: &[Tensor],
    labels: &[Label],
    regime: &TrainRegime,
) -> Result<Fitted<LrModel>> {
    regime.validate()?;
    let dim = check_training_data(features, labels)?;
    let targets: Vec<f64> = labels.iter().map(|l| l.index() as f64).collect();
    let mut model = LrModel::zeros(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(regime.seed);
    let (losses, steps, stopped) = run_epochs(
        &mut model.params,
        features.len(),
        regime,
        &mut rng,
        |params, batch| {
            let mut g = Graph::new();
            let vars = bind(&mut g, params);
            let x = g.constant(batch_matrix(features, batch)?);
            let w = g.reshape(vars[LR_W], &[dim, 1])?;
            let z = g.matmul(x, w)?;
            let z = g.add_row(z, vars[LR_B])?;
            let y: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let loss = g.bce_with_logits(z, &y)?;
            Ok((g.value(loss).item(), gradients_of(&g, loss, &vars, params)?))
        },
    )?;
    model.params.iter_mut().for_each(Parameter::zero_grad);
    Ok(Fitted {
        model,
        epoch_losses: losses,
        steps,
        stopped_early: stopped,
    })
}

/// MLP trained with softmax cross-entropy.
pub fn train_mlp(
    features: &[Tensor],
    labels: &[Label],
    regime: &TrainRegime,
) -> Result<Fitted<MlpModel>> {
    regime.validate()?;
    let dim = check_training_data(features, labels)?;
    let gold: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(regime.seed);
    let mut model = MlpModel::init(dim, regime.hidden.unwrap_or(dim), &mut rng)?;
    let (losses, steps, stopped) = run_epochs(
        &mut model.params,
        features.len(),
        regime,
        &mut rng,
        |params, batch| {
            let mut g = Graph::new();
            let vars = bind(&mut g, params);
            let x = g.constant(batch_matrix(features, batch)?);
            let z = mlp_logits(&mut g, &vars, x)?;
            let y: Vec<usize> = batch.iter().map(|&i| gold[i]).collect();
            let loss = g.cross_entropy(z, &y)?;
            Ok((g.value(loss).item(), gradients_of(&g, loss, &vars, params)?))
        },
    )?;
    model.params.iter_mut().for_each(Parameter::zero_grad);
    Ok(Fitted {
        model,
        epoch_losses: losses,
        steps,
        stopped_early: stopped,
    })
}

/// Fraction of correct predictions; `None` for an empty set.
pub fn accuracy(pred: &[Label], gold: &[Label]) -> Option<f64> {
    if pred.is_empty() || pred.len() != gold.len() {
        return None;
    }
    let ok = pred.iter().zip(gold).filter(|(a, b)| a == b).count();
    Some(ok as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::{grad_check, OptimizerKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn zero_mlp_is_uniform() {
        let m = MlpModel::from_parts(
            Tensor::zeros(&[3, 3]),
            Tensor::zeros(&[3]),
            Tensor::zeros(&[2, 3]),
            Tensor::zeros(&[2]),
        )
        .unwrap();
        assert_eq!(
            mlp_forward(&m, &v(&[1.0, -2.0, 3.0])).unwrap().data(),
            &[0.5, 0.5]
        );
        assert_eq!(m.predict(&v(&[1.0, 2.0, 3.0])).unwrap(), Label::False);
    }

    #[test]
    fn identity_mlp_bias_only_output() {
        let m = MlpModel::from_parts(
            Tensor::identity(3),
            Tensor::zeros(&[3]),
            Tensor::zeros(&[2, 3]),
            v(&[0.0, 1.0]),
        )
        .unwrap();
        let p = mlp_forward(&m, &v(&[0.5, 1.0, 2.0])).unwrap();
        let e = std::f64::consts::E;
        assert!((p.data()[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p.data()[1] - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_graph_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpModel::init(5, 7, &mut rng).unwrap();
        let e = Tensor::vector((0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut g = Graph::new();
        let vars = crate::numgrad::bind_frozen(&mut g, m.params());
        let x = g.constant(e.reshape(&[1, 5]).unwrap());
        let z = m.logits_var(&mut g, &vars, x).unwrap();
        let p = g.value(z).softmax().unwrap();
        assert!(
            p.reshape(&[2])
                .unwrap()
                .max_abs_diff(&mlp_forward(&m, &e).unwrap())
                < 1e-14
        );
    }

    #[test]
    fn output_width_two_at_full_sizes() {
        for d in [1536, 4608] {
            let m = MlpModel::from_parts(
                Tensor::zeros(&[1, d]),
                Tensor::zeros(&[1]),
                Tensor::zeros(&[2, 1]),
                Tensor::zeros(&[2]),
            )
            .unwrap();
            assert_eq!(mlp_forward(&m, &Tensor::zeros(&[d])).unwrap().shape(), &[2]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = LrModel::zeros(3).unwrap();
        assert!(matches!(m.prob(&v(&[1.0])), Err(Error::Dimension(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = MlpModel::init(3, 3, &mut rng).unwrap();
        assert!(matches!(
            mlp_forward(&mlp, &v(&[1.0, 2.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_lr_predicts_half() {
        let m = LrModel::zeros(4).unwrap();
        assert_eq!(m.prob(&v(&[1.0, 2.0, -3.0, 0.5])).unwrap(), 0.5);
        assert_eq!(m.predict(&v(&[1.0, 2.0, -3.0, 0.5])).unwrap(), Label::False);
    }

    #[test]
    fn lr_separates_two_points() {
        let x = vec![v(&[-1.0]), v(&[1.0])];
        let y = vec![Label::False, Label::True];
        let fit = train_lr(&x, &y, &TrainRegime::lr_default()).unwrap();
        assert_eq!(fit.epoch_losses.len(), 150);
        for (e, l) in x.iter().zip(&y) {
            assert_eq!(fit.model.predict(e).unwrap(), *l);
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = vec![v(&[1.0]), v(&[2.0])];
        let y = vec![Label::True, Label::True];
        assert!(matches!(
            train_lr(&x, &y, &TrainRegime::lr_default()),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            train_mlp(&x, &y, &TrainRegime::mlp_default()),
            Err(Error::DegenerateData(_))
        ));
    }

    fn random_set(n: usize, d: usize, seed: u64) -> (Vec<Tensor>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n)
            .map(|_| Tensor::vector((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let y = (0..n).map(|i| Label::from_index(i % 2)).collect();
        (x, y)
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = random_set(40, 4, 9);
        let a = train_lr(&x, &y, &TrainRegime::lr_default()).unwrap();
        let b = train_lr(&x, &y, &TrainRegime::lr_default()).unwrap();
        assert_eq!(a, b);
        let mut r = TrainRegime::mlp_default();
        r.max_iters = 5;
        let a = train_mlp(&x, &y, &r).unwrap();
        let b = train_mlp(&x, &y, &r).unwrap();
        assert_eq!(a, b);
        r.seed = 1;
        assert_ne!(train_mlp(&x, &y, &r).unwrap().model, a.model);
    }

    #[test]
    fn step_unit_counts_updates() {
        let (x, y) = random_set(40, 2, 1);
        let mut r = TrainRegime::lr_default();
        r.unit = IterationUnit::Steps;
        r.max_iters = 5;
        let fit = train_lr(&x, &y, &r).unwrap();
        assert_eq!(fit.steps, 5);
        assert_eq!(fit.epoch_losses.len(), 3);
    }

    #[test]
    fn mlp_overfits_random_labels() {
        let (x, y) = random_set(32, 16, 2);
        let fit = train_mlp(&x, &y, &TrainRegime::mlp_default()).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(e, l)| fit.model.predict(e).unwrap() == **l)
            .count();
        assert!(correct >= 31, "{correct}/32");
    }

    #[test]
    fn early_stop_on_flat_loss() {
        // identical points with opposite labels: loss plateaus at ln 2
        let x = vec![v(&[0.0]); 4];
        let y = vec![Label::False, Label::True, Label::False, Label::True];
        let mut r = TrainRegime::lr_default();
        r.early_stop = Some(EarlyStop {
            window: 10,
            min_improvement: 1e-6,
        });
        let fit = train_lr(&x, &y, &r).unwrap();
        assert!(fit.stopped_early);
        assert_eq!(fit.epoch_losses.len(), 11);
    }

    #[test]
    fn mlp_loss_gradient_matches_differences() {
        let (x, y) = random_set(6, 3, 5);
        let xm = batch_matrix(&x, &(0..6).collect::<Vec<_>>()).unwrap();
        let gold: Vec<usize> = y.iter().map(|l| l.index()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = MlpModel::init(3, 3, &mut rng).unwrap();
        let init: Vec<Tensor> = m.params().iter().map(|p| p.value.clone()).collect();
        let report = grad_check(
            |g, vars| {
                let xv = g.constant(xm.clone());
                let z = mlp_logits(g, vars, xv)?;
                g.cross_entropy(z, &gold)
            },
            &init,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn checkpoints_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = random_set(20, 3, 3);
        let lr = train_lr(&x, &y, &TrainRegime::lr_default()).unwrap().model;
        lr.save(&dir.path().join("lr.txt")).unwrap();
        assert_eq!(LrModel::load(&dir.path().join("lr.txt")).unwrap(), lr);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = MlpModel::init(3, 5, &mut rng).unwrap();
        mlp.save(&dir.path().join("mlp.txt")).unwrap();
        assert_eq!(MlpModel::load(&dir.path().join("mlp.txt")).unwrap(), mlp);
    }

    #[test]
    fn regime_defaults() {
        let lr = TrainRegime::lr_default();
        assert_eq!(
            (lr.max_iters, lr.batch_size, lr.optimizer.learning_rate),
            (150, 32, 0.0025)
        );
        assert_eq!(lr.optimizer.kind, OptimizerKind::Sgd);
        let mlp = TrainRegime::mlp_default();
        assert_eq!((mlp.max_iters, mlp.optimizer.learning_rate), (200, 0.001));
        assert_eq!((mlp.optimizer.beta1, mlp.optimizer.beta2), (0.9, 0.999));
        assert_eq!(mlp.optimizer.kind, OptimizerKind::Adam);
    }

    proptest! {
        #[test]
        fn mlp_probs_sum_to_one(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = MlpModel::init(4, 6, &mut rng).unwrap();
            let e = Tensor::vector((0..4).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap();
            let p = mlp_forward(&m, &e).unwrap();
            prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn lr_label_invariant_to_positive_scaling(
            w in proptest::collection::vec(-5.0f64..5.0, 3),
            b in -5.0f64..5.0,
            e in proptest::collection::vec(-5.0f64..5.0, 3),
            c in 0.001f64..1000.0,
        ) {
            let m = LrModel::from_parts(v(&w), b).unwrap();
            let scaled = LrModel::from_parts(v(&w).map(|x| x * c), b * c).unwrap();
            prop_assert_eq!(m.predict(&v(&e)).unwrap(), scaled.predict(&v(&e)).unwrap());
        }
    }
}
