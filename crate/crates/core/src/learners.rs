//! Classifiers and clustering used by the benchmark tasks.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_rows, Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Row-wise softmax of `logits / temperature`.
pub fn softmax(logits: ArrayView2<f64>, temperature: f64) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| ((v - max) / temperature).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Row-wise argmax; ties go to the smallest column.
pub fn argmax_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of positions where `pred` equals `truth`. Empty input gives 0.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

fn select_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidParameter(format!("label {bad} outside [0, {n_classes})")));
    }
    Ok(())
}

fn check_every_class_present(labels: &[usize], n_classes: usize) -> Result<()> {
    let mut seen = vec![false; n_classes];
    for &l in labels {
        seen[l] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(c) => Err(Error::Contract(format!("class {c} has no training example"))),
        None => Ok(()),
    }
}

/// Mean cross-entropy of `probs` restricted to `rows`, and its gradient with
/// respect to the logits (nonzero only on `rows`).
fn cross_entropy(probs: &Array2<f64>, labels: &[usize], rows: &[usize]) -> (f64, Array2<f64>) {
    let n = rows.len() as f64;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut loss = 0.0;
    for &r in rows {
        let y = labels[r];
        loss -= probs[[r, y]].max(f64::MIN_POSITIVE).ln();
        let mut g = grad.row_mut(r);
        g.assign(&probs.row(r));
        g[y] -= 1.0;
        g /= n;
    }
    (loss / n, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain full-batch gradient descent.
    Sgd,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
}

/// Adam or plain descent state for one parameter tensor.
#[derive(Debug, Clone)]
struct Stepper {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Stepper {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, lr: f64, len: usize) -> Self {
        Stepper {
            kind,
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: impl Iterator<Item = &'a f64>) {
        self.t += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 0.0,
            learning_rate: 0.001,
            epochs: 100,
            optimizer: Optimizer::Adam,
        }
    }
}

impl LogisticConfig {
    /// Multinomial logistic regression with inverse regularization strength 1
    /// on `n_train` examples, 200 full-batch iterations.
    pub fn few_shot(n_train: usize) -> Self {
        LogisticConfig {
            l2: 0.5 / n_train.max(1) as f64,
            learning_rate: 0.05,
            epochs: 200,
            optimizer: Optimizer::Adam,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidParameter(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Absent when the learner has no validation rows.
    pub best_validation_accuracy: Option<f64>,
    pub test_accuracy_at_best: Option<f64>,
    pub train_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegressionModel {
    /// F×C
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub config: LogisticConfig,
}

impl LogisticRegressionModel {
    pub fn zeros(n_features: usize, n_classes: usize, config: LogisticConfig) -> Self {
        LogisticRegressionModel {
            weights: Array2::zeros((n_features, n_classes)),
            bias: Array1::zeros(n_classes),
            config,
        }
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.weights.nrows(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weights) + &self.bias)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax(self.logits(x)?.view(), 1.0))
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.logits(x)?.view()))
    }

    /// Objective `mean CE + l2·‖W‖²` and its gradients `(∂W, ∂b)`.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>, Array1<f64>)> {
        check_rows("labels", x.nrows(), labels.len())?;
        check_labels(labels, self.bias.len())?;
        let probs = self.predict_proba(x)?;
        let rows: Vec<usize> = (0..labels.len()).collect();
        let (ce, g) = cross_entropy(&probs, labels, &rows);
        let l2 = self.config.l2;
        let loss = ce + l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let gw = x.t().dot(&g) + &(&self.weights * (2.0 * l2));
        let gb = g.sum_axis(Axis(0));
        Ok((loss, gw, gb))
    }
}

/// Full-batch training from zero initialization. `seed` is recorded in the
/// report; the procedure itself draws no randomness.
pub fn train_logistic(
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    config: &LogisticConfig,
    seed: u64,
) -> Result<(LogisticRegressionModel, TrainReport)> {
    config.validate()?;
    check_rows("labels", features.nrows(), labels.len())?;
    check_labels(labels, n_classes)?;
    check_every_class_present(labels, n_classes)?;
    let mut model = LogisticRegressionModel::zeros(features.ncols(), n_classes, *config);
    let mut w_step = Stepper::new(config.optimizer, config.learning_rate, model.weights.len());
    let mut b_step = Stepper::new(config.optimizer, config.learning_rate, n_classes);
    for _ in 0..config.epochs {
        let (_, gw, gb) = model.loss_and_gradients(features, labels)?;
        w_step.step(model.weights.iter_mut(), gw.iter());
        b_step.step(model.bias.iter_mut(), gb.iter());
    }
    let train_accuracy = accuracy(&model.predict(features)?, labels);
    let report = TrainReport {
        best_validation_accuracy: None,
        test_accuracy_at_best: None,
        train_accuracy,
        best_epoch: config.epochs,
        epochs_run: config.epochs,
        seed,
    };
    Ok((model, report))
}

/// Where the diffusion operator enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Features replaced by `S·X`.
    Pre,
    /// Logits replaced by `S·logits`.
    Post,
    Both,
    None,
}

impl Placement {
    pub fn pre(self) -> bool {
        matches!(self, Placement::Pre | Placement::Both)
    }

    pub fn post(self) -> bool {
        matches!(self, Placement::Post | Placement::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Placement::Pre => "pre",
            Placement::Post => "post",
            Placement::Both => "both",
            Placement::None => "none",
        }
    }
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(Placement::Pre),
            "post" => Ok(Placement::Post),
            "both" => Ok(Placement::Both),
            "none" => Ok(Placement::None),
            other => Err(Error::Parse(format!("unknown placement `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneHiddenConfig {
    pub hidden_size: usize,
    pub input_dropout: f64,
    pub edge_dropout: f64,
    pub l2_hidden: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for OneHiddenConfig {
    fn default() -> Self {
        OneHiddenConfig {
            hidden_size: 64,
            input_dropout: 0.0,
            edge_dropout: 0.0,
            l2_hidden: 0.005,
            learning_rate: 0.01,
            max_epochs: 10_000,
            patience: 100,
        }
    }
}

impl OneHiddenConfig {
    fn validate(&self) -> Result<()> {
        for (name, p) in [("input_dropout", self.input_dropout), ("edge_dropout", self.edge_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if self.hidden_size == 0 {
            return Err(Error::InvalidParameter("hidden size must be positive".into()));
        }
        if !(self.l2_hidden >= 0.0) {
            return Err(Error::InvalidParameter(format!("l2_hidden must be nonnegative, got {}", self.l2_hidden)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Disjoint train/valid/test vertex index lists.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSplit {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut role = vec![false; n];
        for &i in self.train.iter().chain(&self.valid).chain(&self.test) {
            if i >= n {
                return Err(Error::InvalidParameter(format!("split index {i} out of range for {n} vertices")));
            }
            if role[i] {
                return Err(Error::Contract(format!("vertex {i} appears in more than one split role")));
            }
            role[i] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHiddenLayerModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub config: OneHiddenConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

struct ForwardPass {
    z1: Array2<f64>,
    h: Array2<f64>,
    logits: Array2<f64>,
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

impl OneHiddenLayerModel {
    pub fn init(n_features: usize, n_classes: usize, config: OneHiddenConfig, rng: &mut Rng) -> Self {
        let w1 = glorot(rng, n_features, config.hidden_size);
        let w2 = glorot(rng, config.hidden_size, n_classes);
        OneHiddenLayerModel {
            w1,
            b1: Array1::zeros(config.hidden_size),
            w2,
            b2: Array1::zeros(n_classes),
            config,
        }
    }

    fn forward(&self, x: ArrayView2<f64>, s_pre: Option<ArrayView2<f64>>, s_post: Option<ArrayView2<f64>>) -> ForwardPass {
        let x_w1 = x.dot(&self.w1);
        let mut z1 = match s_pre {
            Some(s) => s.dot(&x_w1),
            None => x_w1.clone(),
        };
        z1 += &self.b1;
        let h = z1.mapv(|v| v.max(0.0));
        let z2 = h.dot(&self.w2) + &self.b2;
        let logits = match s_post {
            Some(s) => s.dot(&z2),
            None => z2,
        };
        ForwardPass { z1, h, logits }
    }

    fn backward(
        &self,
        x: ArrayView2<f64>,
        s_pre: Option<ArrayView2<f64>>,
        s_post: Option<ArrayView2<f64>>,
        fwd: &ForwardPass,
        labels: &[usize],
        rows: &[usize],
    ) -> (f64, HiddenGradients) {
        let probs = softmax(fwd.logits.view(), 1.0);
        let (ce, g_logits) = cross_entropy(&probs, labels, rows);
        let l2 = self.config.l2_hidden;
        let loss = ce + l2 * self.w1.iter().map(|w| w * w).sum::<f64>();
        let g_z2 = match s_post {
            Some(s) => s.t().dot(&g_logits),
            None => g_logits,
        };
        let g_w2 = fwd.h.t().dot(&g_z2);
        let g_b2 = g_z2.sum_axis(Axis(0));
        let mut g_z1 = g_z2.dot(&self.w2.t());
        g_z1.zip_mut_with(&fwd.z1, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let g_b1 = g_z1.sum_axis(Axis(0));
        let g_xw1 = match s_pre {
            Some(s) => s.t().dot(&g_z1),
            None => g_z1,
        };
        let g_w1 = x.t().dot(&g_xw1) + &(&self.w1 * (2.0 * l2));
        (
            loss,
            HiddenGradients {
                w1: g_w1,
                b1: g_b1,
                w2: g_w2,
                b2: g_b2,
            },
        )
    }

    /// Inference logits; dropout is never applied here.
    pub fn logits(&self, x: ArrayView2<f64>, diffusion: Option<ArrayView2<f64>>, placement: Placement) -> Result<Array2<f64>> {
        let (pre, post) = resolve_diffusion(x.nrows(), diffusion, placement)?;
        Ok(self.forward(x, pre, post).logits)
    }

    pub fn predict(&self, x: ArrayView2<f64>, diffusion: Option<ArrayView2<f64>>, placement: Placement) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.logits(x, diffusion, placement)?.view()))
    }

    /// Dropout-free objective `mean CE over rows + l2_hidden·‖W₁‖²` and its gradients.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        rows: &[usize],
        diffusion: Option<ArrayView2<f64>>,
        placement: Placement,
    ) -> Result<(f64, HiddenGradients)> {
        check_rows("labels", x.nrows(), labels.len())?;
        check_labels(labels, self.b2.len())?;
        let (pre, post) = resolve_diffusion(x.nrows(), diffusion, placement)?;
        let fwd = self.forward(x, pre, post);
        Ok(self.backward(x, pre, post, &fwd, labels, rows))
    }
}

fn resolve_diffusion(
    n: usize,
    diffusion: Option<ArrayView2<f64>>,
    placement: Placement,
) -> Result<(Option<ArrayView2<f64>>, Option<ArrayView2<f64>>)> {
    if placement == Placement::None {
        return Ok((None, None));
    }
    let s = diffusion.ok_or_else(|| Error::Contract(format!("placement {} requires a diffusion operator", placement.name())))?;
    if s.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!("diffusion operator must be {n}x{n}, got {:?}", s.dim())));
    }
    Ok((placement.pre().then_some(s), placement.post().then_some(s)))
}

/// Operator whose nonzero entries are independently zeroed with probability
/// `p` at each step, survivors scaled by `1/(1-p)`.
struct EdgeDropout {
    entries: Vec<(usize, usize, f64)>,
    buffer: Array2<f64>,
    p: f64,
}

impl EdgeDropout {
    fn new(s: ArrayView2<f64>, p: f64) -> Self {
        let entries = s
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        EdgeDropout {
            entries,
            buffer: s.to_owned(),
            p,
        }
    }

    fn sample(&mut self, rng: &mut Rng) -> ArrayView2<'_, f64> {
        if self.p > 0.0 {
            let scale = 1.0 / (1.0 - self.p);
            for &(i, j, v) in &self.entries {
                self.buffer[[i, j]] = if rng.random::<f64>() < self.p { 0.0 } else { v * scale };
            }
        }
        self.buffer.view()
    }
}

fn input_dropout(x: ArrayView2<f64>, p: f64, rng: &mut Rng) -> Array2<f64> {
    if p == 0.0 {
        return x.to_owned();
    }
    let scale = 1.0 / (1.0 - p);
    x.mapv(|v| if rng.random::<f64>() < p { 0.0 } else { v * scale })
}

/// Trains with Adam on the train rows, keeping the parameters of the epoch
/// with the best validation accuracy; stops after `patience` epochs without
/// improvement.
#[allow(clippy::too_many_arguments)]
pub fn train_one_hidden(
    features: ArrayView2<f64>,
    labels: &[usize],
    n_classes: usize,
    split: &NodeSplit,
    diffusion: Option<ArrayView2<f64>>,
    placement: Placement,
    config: &OneHiddenConfig,
    seed: u64,
) -> Result<(OneHiddenLayerModel, TrainReport)> {
    config.validate()?;
    let n = features.nrows();
    check_rows("labels", n, labels.len())?;
    check_labels(labels, n_classes)?;
    split.validate(n)?;
    if split.train.is_empty() {
        return Err(Error::Contract("train split is empty".into()));
    }
    let (pre, post) = resolve_diffusion(n, diffusion, placement)?;

    let mut rng = rng_from_seed(seed);
    let mut model = OneHiddenLayerModel::init(features.ncols(), n_classes, *config, &mut rng);
    let mut pre_drop = pre.map(|s| EdgeDropout::new(s, config.edge_dropout));
    let mut post_drop = post.map(|s| EdgeDropout::new(s, config.edge_dropout));
    let lr = config.learning_rate;
    let mut steps = [
        Stepper::new(Optimizer::Adam, lr, model.w1.len()),
        Stepper::new(Optimizer::Adam, lr, model.b1.len()),
        Stepper::new(Optimizer::Adam, lr, model.w2.len()),
        Stepper::new(Optimizer::Adam, lr, model.b2.len()),
    ];

    let eval = |model: &OneHiddenLayerModel, rows: &[usize]| -> Option<f64> {
        if rows.is_empty() {
            return None;
        }
        let logits = model.forward(features, pre, post).logits;
        let pred = argmax_rows(select_rows(logits.view(), rows).view());
        let truth: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        Some(accuracy(&pred, &truth))
    };

    let mut best = (model.clone(), f64::NEG_INFINITY, 0usize);
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        let x_in = input_dropout(features, config.input_dropout, &mut rng);
        let s_pre = pre_drop.as_mut().map(|d| d.sample(&mut rng));
        let s_post = post_drop.as_mut().map(|d| d.sample(&mut rng));
        let fwd = model.forward(x_in.view(), s_pre, s_post);
        let (_, g) = model.backward(x_in.view(), s_pre, s_post, &fwd, labels, &split.train);
        steps[0].step(model.w1.iter_mut(), g.w1.iter());
        steps[1].step(model.b1.iter_mut(), g.b1.iter());
        steps[2].step(model.w2.iter_mut(), g.w2.iter());
        steps[3].step(model.b2.iter_mut(), g.b2.iter());
        epochs_run = epoch;

        let Some(valid_acc) = eval(&model, &split.valid) else {
            best = (model.clone(), f64::NAN, epoch);
            continue;
        };
        if valid_acc > best.1 {
            best = (model.clone(), valid_acc, epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }

    let (best_model, best_valid, best_epoch) = best;
    let train_pred = best_model.predict(features, diffusion, placement)?;
    let train_acc = {
        let p: Vec<usize> = split.train.iter().map(|&r| train_pred[r]).collect();
        let t: Vec<usize> = split.train.iter().map(|&r| labels[r]).collect();
        accuracy(&p, &t)
    };
    let report = TrainReport {
        best_validation_accuracy: (!split.valid.is_empty()).then_some(best_valid),
        test_accuracy_at_best: eval(&best_model, &split.test),
        train_accuracy: train_acc,
        best_epoch,
        epochs_run,
        seed,
    };
    Ok((best_model, report))
}

/// Cosine similarity between rows of `a` and rows of `b`; zero rows have
/// similarity 0 to everything.
pub fn cosine_similarity(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature widths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let norms = |m: ArrayView2<f64>| -> Array1<f64> {
        m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
    };
    let (na, nb) = (norms(a), norms(b));
    let mut sim = a.dot(&b.t());
    for ((i, j), v) in sim.indexed_iter_mut() {
        let d = na[i] * nb[j];
        *v = if d > 0.0 { *v / d } else { 0.0 };
    }
    Ok(sim)
}

fn n_classes_of(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

/// Majority vote over the `k` nearest support rows by cosine distance.
/// Distance ties go to the lower support index, vote ties to the smaller class.
pub fn knn_classify(
    support: ArrayView2<f64>,
    support_labels: &[usize],
    query: ArrayView2<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    if support.nrows() == 0 {
        return Err(Error::InvalidParameter("empty support set".into()));
    }
    check_rows("support labels", support.nrows(), support_labels.len())?;
    if k == 0 || k > support.nrows() {
        return Err(Error::InvalidParameter(format!(
            "k must lie in [1, {}], got {k}",
            support.nrows()
        )));
    }
    let sim = cosine_similarity(query, support)?;
    let c = n_classes_of(support_labels);
    Ok(sim
        .rows()
        .into_iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&i, &j| row[j].total_cmp(&row[i]).then(i.cmp(&j)));
            let mut votes = vec![0usize; c];
            for &i in &order[..k] {
                votes[support_labels[i]] += 1;
            }
            let mut best = 0;
            for (cls, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = cls;
                }
            }
            best
        })
        .collect())
}

/// Per-class mean rows.
pub fn class_centroids(features: ArrayView2<f64>, labels: &[usize]) -> Result<Array2<f64>> {
    check_rows("labels", features.nrows(), labels.len())?;
    let c = n_classes_of(labels);
    let mut sums = Array2::zeros((c, features.ncols()));
    let mut counts = vec![0usize; c];
    for (row, &l) in features.rows().into_iter().zip(labels) {
        sums.row_mut(l).scaled_add(1.0, &row);
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Contract(format!("class {empty} has no support example")));
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        row /= n as f64;
    }
    Ok(sums)
}

/// Nearest class centroid by cosine distance; ties go to the smaller class.
pub fn ncm_classify(support: ArrayView2<f64>, support_labels: &[usize], query: ArrayView2<f64>) -> Result<Vec<usize>> {
    if support.nrows() == 0 {
        return Err(Error::InvalidParameter("empty support set".into()));
    }
    let centroids = class_centroids(support, support_labels)?;
    let sim = cosine_similarity(query, centroids.view())?;
    Ok(argmax_rows(sim.view()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared distances of each point to the mean of its cluster.
pub fn inertia(points: ArrayView2<f64>, assignment: &[usize]) -> f64 {
    let c = n_classes_of(assignment);
    let mut centroids = Array2::zeros((c, points.ncols()));
    let mut counts = vec![0usize; c];
    for (row, &a) in points.rows().into_iter().zip(assignment) {
        centroids.row_mut(a).scaled_add(1.0, &row);
        counts[a] += 1;
    }
    for (mut row, &n) in centroids.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    points
        .rows()
        .into_iter()
        .zip(assignment)
        .map(|(row, &a)| sq_dist(row, centroids.row(a)))
        .sum()
}

fn kmeans_pp(points: ArrayView2<f64>, c: usize, rng: &mut Rng) -> Vec<usize> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive entry")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

/// Lloyd iterations from k-means++ seeding.
pub fn kmeans(points: ArrayView2<f64>, c: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.nrows();
    if c == 0 || c > n {
        return Err(Error::InvalidParameter(format!("cluster count must lie in [1, {n}], got {c}")));
    }
    let mut rng = rng_from_seed(seed);
    let seeds = kmeans_pp(points, c, &mut rng);
    let mut centroids = points.select(Axis(0), &seeds);
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 1..=max_iter.max(1) {
        iterations = it;
        let mut changed = false;
        for (i, row) in points.rows().into_iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, cen) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(row, cen);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; c];
        let mut sums = Array2::zeros(centroids.raw_dim());
        for (row, &a) in points.rows().into_iter().zip(&assignment) {
            sums.row_mut(a).scaled_add(1.0, &row);
            counts[a] += 1;
        }
        for j in 0..c {
            if counts[j] == 0 {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(points.row(b), centroids.row(assignment[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("c <= n leaves a cluster with two points");
                sums.row_mut(assignment[far]).scaled_add(-1.0, &points.row(far));
                counts[assignment[far]] -= 1;
                assignment[far] = j;
                sums.row_mut(j).assign(&points.row(far));
                counts[j] = 1;
                changed = true;
            }
        }
        for (mut row, &cnt) in sums.rows_mut().into_iter().zip(&counts) {
            row /= cnt as f64;
        }
        centroids = sums;
        if !changed {
            break;
        }
    }
    let inertia = points
        .rows()
        .into_iter()
        .zip(&assignment)
        .map(|(row, &a)| sq_dist(row, centroids.row(a)))
        .sum();
    Ok(KMeansResult {
        assignment,
        centroids,
        inertia,
        iterations,
    })
}

/// Best of `n_init` k-means runs by inertia, run `i` seeded with
/// `derive_seed(seed, i)`.
pub fn kmeans_restarts(points: ArrayView2<f64>, c: usize, seed: u64, max_iter: usize, n_init: usize) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for i in 0..n_init.max(1) {
        let run = kmeans(points, c, crate::rng::derive_seed(seed, i as u64), max_iter)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Expected mutual information of two random partitions with the given
/// cluster sizes, under the hypergeometric model.
pub fn expected_mutual_information(a_sizes: &[usize], b_sizes: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let lg = |x: usize| ln_gamma(x as f64 + 1.0);
    let lg_n = lg(n);
    let mut emi = 0.0;
    for &a in a_sizes {
        for &b in b_sizes {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lg(a) + lg(b) + lg(n - a) + lg(n - b) - lg_n;
            for nij in lo..=hi {
                let term = nij as f64 / nf * (nf * nij as f64 / (a as f64 * b as f64)).ln();
                let log_p = fixed - lg(nij) - lg(a - nij) - lg(b - nij) - lg(n + nij - a - b);
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// AMI with arithmetic-mean normalization.
pub fn adjusted_mutual_information(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.is_empty() {
        return Err(Error::InvalidParameter("empty labelings".into()));
    }
    check_rows("labels", labels_a.len(), labels_b.len())?;
    let n = labels_a.len();
    let (a, ka) = relabel(labels_a);
    let (b, kb) = relabel(labels_b);
    if ka == kb && (ka == 1 || ka == n) && a.iter().zip(&b).all(|(x, y)| x == y) {
        return Ok(1.0);
    }
    if ka == 1 && kb == 1 {
        return Ok(1.0);
    }
    let mut table = vec![vec![0usize; kb]; ka];
    let mut a_sizes = vec![0usize; ka];
    let mut b_sizes = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(&b) {
        table[x][y] += 1;
        a_sizes[x] += 1;
        b_sizes[y] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / nf * (nf * nij / (a_sizes[i] as f64 * b_sizes[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_information(&a_sizes, &b_sizes, n);
    let mean_h = 0.5 * (entropy(&a_sizes, nf) + entropy(&b_sizes, nf));
    let mut denom = mean_h - emi;
    if denom < 0.0 {
        denom = denom.min(-f64::EPSILON);
    } else {
        denom = denom.max(f64::EPSILON);
    }
    Ok((mi - emi) / denom)
}
