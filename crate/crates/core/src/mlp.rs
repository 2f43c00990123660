//! Small fully connected binary classifier with ReLU hidden layers, inverted
//! dropout, a sigmoid output and binary cross-entropy loss, trained by
//! mini-batch momentum gradient descent with early stopping on validation AUC.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics;

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    #[default]
    GlorotUniform,
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub init: WeightInit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            validation_fraction: 0.2,
            hidden_dims: vec![64, 32],
            dropout_rate: 0.2,
            init: WeightInit::GlorotUniform,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Forward pass flavour.
pub enum Pass<'a> {
    Inference,
    /// Dropout masks are drawn from the given generator.
    Training(&'a mut dyn RngCore),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    dropout_rate: f64,
    seed: u64,
    history: Vec<EpochRecord>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Mlp) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Flattened in parameter order (see [`Mlp::param`]).
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

struct Trace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    /// Dropout multipliers (0 or 1/keep) of hidden layers.
    masks: Vec<Vec<f64>>,
    prob: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Builds `input -> hidden... -> 1` with the given initialisation.
    pub fn new(
        input: usize,
        hidden: &[usize],
        dropout_rate: f64,
        init: WeightInit,
        seed: u64,
    ) -> Result<Self> {
        if input == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let weights = match init {
                    WeightInit::Zeros => vec![0.0; inputs * outputs],
                    WeightInit::GlorotUniform => {
                        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                        (0..inputs * outputs)
                            .map(|_| rng.random_range(-limit..=limit))
                            .collect()
                    }
                };
                Layer {
                    inputs,
                    outputs,
                    weights,
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            layers,
            dropout_rate,
            seed,
            history: Vec::new(),
        })
    }

    /// Builds a model from explicit per-layer parameters.
    pub fn from_parameters(
        layer_dims: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) || layer_dims.last() != Some(&1) {
            return Err(Error::Config(format!(
                "layer_dims {layer_dims:?} must be positive and end in 1"
            )));
        }
        let n = layer_dims.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::Config(format!(
                "expected {n} weight and bias arrays, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        let mut layers = Vec::with_capacity(n);
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (inputs, outputs) = (layer_dims[l], layer_dims[l + 1]);
            if w.len() != inputs * outputs || b.len() != outputs {
                return Err(Error::DimensionMismatch {
                    context: format!("parameters of layer {l}"),
                    expected: inputs * outputs + outputs,
                    found: w.len() + b.len(),
                });
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of layer {l}")));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: w,
                biases: b,
            });
        }
        Ok(Self {
            layers,
            dropout_rate,
            seed,
            history: Vec::new(),
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if i < layer.weights.len() {
                return (l, true, i);
            }
            i -= layer.weights.len();
            if i < layer.biases.len() {
                return (l, false, i);
            }
            i -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter `i` in order: layer 0 weights (row-major), layer 0 biases,
    /// layer 1 weights, ...
    pub fn param(&self, i: usize) -> f64 {
        match self.locate(i) {
            (l, true, j) => self.layers[l].weights[j],
            (l, false, j) => self.layers[l].biases[j],
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        match self.locate(i) {
            (l, true, j) => self.layers[l].weights[j] = value,
            (l, false, j) => self.layers[l].biases[j] = value,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "classifier input".into(),
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier input".into()));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64], mut rng: Option<&mut dyn RngCore>) -> Trace {
        let keep = 1.0 - self.dropout_rate;
        let hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(hidden);
        let mut masks = Vec::with_capacity(hidden);
        let mut a = x.to_vec();
        for layer in &self.layers[..hidden] {
            let z = layer.affine(&a);
            let mask: Vec<f64> = match rng.as_deref_mut() {
                Some(r) if self.dropout_rate > 0.0 => (0..z.len())
                    .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
                _ => vec![1.0; z.len()],
            };
            let next = z.iter().zip(&mask).map(|(&v, m)| v.max(0.0) * m).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
            masks.push(mask);
        }
        let out = self.layers[hidden].affine(&a)[0];
        inputs.push(a);
        Trace {
            inputs,
            pre,
            masks,
            prob: sigmoid(out),
        }
    }

    /// Membership probability for `x`.
    pub fn forward(&self, x: &[f64], pass: Pass<'_>) -> Result<f64> {
        self.check_input(x)?;
        Ok(match pass {
            Pass::Inference => self.trace(x, None).prob,
            Pass::Training(rng) => self.trace(x, Some(rng)).prob,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x, Pass::Inference)
    }

    /// Mean BCE over `batch` and its exact gradient, without dropout.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Gradients)> {
        for (x, y) in batch {
            self.check_input(x)?;
            if *y != 0.0 && *y != 1.0 {
                return Err(Error::Config(format!("label {y} is not 0 or 1")));
            }
        }
        let refs: Vec<(&[f64], f64)> = batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        self.batch_loss_and_grad(&refs, None)
    }

    fn batch_loss_and_grad(
        &self,
        batch: &[(&[f64], f64)],
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Insufficient("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for &(x, y) in batch {
            let t = match rng {
                Some(ref mut r) => self.trace(x, Some(&mut **r)),
                None => self.trace(x, None),
            };
            let p = t.prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            // d loss / d logit; zero where the clamp is active
            let clamped = t.prob < BCE_EPS || t.prob > 1.0 - BCE_EPS;
            let mut delta = vec![if clamped { 0.0 } else { (t.prob - y) * scale }];
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &t.inputs[l];
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut grads.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                    grads.biases[l][o] += d;
                }
                if l == 0 {
                    break;
                }
                let mut back = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += w * d;
                    }
                }
                let (z, mask) = (&t.pre[l - 1], &t.masks[l - 1]);
                for ((b, zv), m) in back.iter_mut().zip(z).zip(mask) {
                    *b *= if *zv > 0.0 { *m } else { 0.0 };
                }
                delta = back;
            }
        }
        Ok((loss * scale, grads))
    }

    fn apply(&mut self, velocity: &mut Gradients, grads: &Gradients, lr: f64, momentum: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for ((w, v), g) in layer
                .weights
                .iter_mut()
                .zip(&mut velocity.weights[l])
                .zip(&grads.weights[l])
            {
                *v = momentum * *v - lr * g;
                *w += *v;
            }
            for ((b, v), g) in layer
                .biases
                .iter_mut()
                .zip(&mut velocity.biases[l])
                .zip(&grads.biases[l])
            {
                *v = momentum * *v - lr * g;
                *b += *v;
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_dims: self.layer_dims(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
            dropout_rate: self.dropout_rate,
            seed: self.seed,
            history: self.history.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let mut m = Self::from_parameters(&c.layer_dims, c.weights, c.biases, c.dropout_rate, c.seed)?;
        m.history = c.history;
        Ok(m)
    }
}

/// Serialized model: per-layer flattened parameters plus training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub dropout_rate: f64,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
}

/// Seeded stratified split: each class is shuffled independently and the
/// first `round(n_c * fraction)` indices (at least 1, at most `n_c - 1`) go
/// to the held-out side. Both index lists are returned sorted.
pub fn stratified_holdout(labels: &[bool], fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut kept = Vec::new();
    let mut held = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n = idx.len();
        let take = if n >= 2 {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        held.extend_from_slice(&idx[..take]);
        kept.extend_from_slice(&idx[take..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    (kept, held)
}

fn mean_loss(model: &Mlp, xs: &[Vec<f64>], ys: &[f64], idx: &[usize]) -> Result<f64> {
    let batch: Vec<(&[f64], f64)> = idx.iter().map(|&i| (xs[i].as_slice(), ys[i])).collect();
    Ok(model.batch_loss_and_grad(&batch, None)?.0)
}

/// Trains on `(features, labels)` and returns the snapshot with the best
/// validation AUC. Fully determined by the data and `cfg.seed`.
pub fn train(features: &[Vec<f64>], labels: &[bool], cfg: &TrainConfig) -> Result<Mlp> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "features vs labels".into(),
            expected: features.len(),
            found: labels.len(),
        });
    }
    let members = labels.iter().filter(|&&m| m).count();
    let nonmembers = labels.len() - members;
    if members == 0 {
        return Err(Error::SingleClass("non-members"));
    }
    if nonmembers == 0 {
        return Err(Error::SingleClass("members"));
    }
    if members < 2 || nonmembers < 2 {
        return Err(Error::Insufficient(
            "training needs at least 2 samples of each class".into(),
        ));
    }
    let dim = features[0].len();
    for (i, x) in features.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: format!("feature vector {i}"),
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature vector {i}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Mlp::new(dim, &cfg.hidden_dims, cfg.dropout_rate, cfg.init, cfg.seed)?;
    if cfg.max_epochs == 0 {
        return Ok(model);
    }
    let ys: Vec<f64> = labels.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let (mut train_idx, val_idx) = stratified_holdout(labels, cfg.validation_fraction, &mut rng);

    let mut velocity = Gradients::zeros_like(&model);
    let mut best: Option<(f64, f64, Mlp)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> =
                chunk.iter().map(|&i| (features[i].as_slice(), ys[i])).collect();
            let (loss, grads) = model.batch_loss_and_grad(&batch, Some(&mut rng))?;
            loss_sum += loss * chunk.len() as f64;
            model.apply(&mut velocity, &grads, cfg.learning_rate, cfg.momentum);
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_scores = val_idx
            .iter()
            .map(|&i| Ok((model.predict(&features[i])?, labels[i])))
            .collect::<Result<Vec<_>>>()?;
        let val_auc = metrics::auc(&val_scores)?;
        let val_loss = mean_loss(&model, features, &ys, &val_idx)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
            val_loss,
        });
        // AUC ties (common once validation is perfectly ranked) go to the
        // lower validation loss
        let improved = best
            .as_ref()
            .is_none_or(|(a, l, _)| val_auc > *a || (val_auc == *a && val_loss < *l));
        if improved {
            best = Some((val_auc, val_loss, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, _, mut chosen) = best.expect("at least one epoch ran");
    chosen.history = history;
    Ok(chosen)
}

/// Mean inference loss over the given rows; exposed for diagnostics.
pub fn dataset_loss(model: &Mlp, features: &[Vec<f64>], labels: &[bool]) -> Result<f64> {
    let ys: Vec<f64> = labels.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let idx: Vec<usize> = (0..features.len()).collect();
    mean_loss(model, features, &ys, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, offset: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let member = i % 2 == 0;
            let c = if member { offset } else { -offset };
            let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
            xs.push(vec![c + 0.3 * draw(), c + 0.3 * draw()]);
            ys.push(member);
        }
        (xs, ys)
    }

    #[test]
    fn zero_weights_give_one_half() {
        let m = Mlp::new(3, &[4, 2], 0.2, WeightInit::Zeros, 0).unwrap();
        assert_eq!(m.predict(&[1.0, -2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn unit_chain_at_zero() {
        let m = Mlp::from_parameters(
            &[1, 1, 1, 1],
            vec![vec![1.0], vec![1.0], vec![1.0]],
            vec![vec![0.0], vec![0.0], vec![0.0]],
            0.0,
            0,
        )
        .unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = Mlp::new(2, &[3], 0.0, WeightInit::GlorotUniform, 1).unwrap();
        assert!(m.predict(&[1.0]).is_err());
        assert!(m.predict(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn loss_examples() {
        let m = Mlp::new(2, &[3], 0.0, WeightInit::Zeros, 0).unwrap();
        let (loss, _) = m.loss_and_grad(&[(vec![0.3, 0.1], 1.0)]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(m.loss_and_grad(&[]).is_err());

        let confident = Mlp::from_parameters(&[1, 1], vec![vec![0.0]], vec![vec![80.0]], 0.0, 0).unwrap();
        let (loss, g) = confident.loss_and_grad(&[(vec![0.0], 1.0)]).unwrap();
        assert!(loss < 1e-11);
        assert_eq!(g.biases[0][0], 0.0);
    }

    #[test]
    fn inference_is_pure() {
        let m = Mlp::new(4, &[8, 4], 0.5, WeightInit::GlorotUniform, 3).unwrap();
        let before = m.clone();
        let a = m.predict(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = m.predict(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(a, b);
        assert_eq!(m, before);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let _ = m.forward(&[0.1, 0.2, 0.3, 0.4], Pass::Training(&mut rng)).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn separable_blobs_reach_perfect_holdout_auc() {
        let (xs, ys) = blobs(240, 1.0, 7);
        let (train_x, test_x) = xs.split_at(200);
        let (train_y, test_y) = ys.split_at(200);
        let cfg = TrainConfig {
            max_epochs: 50,
            ..Default::default()
        };
        let model = train(train_x, train_y, &cfg).unwrap();
        assert!(model.history().len() <= 50);
        let scores: Vec<(f64, bool)> = test_x
            .iter()
            .zip(test_y)
            .map(|(x, &y)| (model.predict(x).unwrap(), y))
            .collect();
        assert_eq!(metrics::auc(&scores).unwrap(), 1.0);
    }

    #[test]
    fn loss_decreases_over_first_epoch() {
        let (xs, ys) = blobs(200, 1.0, 11);
        let cfg = TrainConfig {
            seed: 5,
            ..Default::default()
        };
        let init = Mlp::new(2, &cfg.hidden_dims, cfg.dropout_rate, cfg.init, cfg.seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (train_idx, _) = stratified_holdout(&ys, cfg.validation_fraction, &mut rng);
        let tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
        let ty: Vec<bool> = train_idx.iter().map(|&i| ys[i]).collect();
        let before = dataset_loss(&init, &tx, &ty).unwrap();
        let one = train(
            &xs,
            &ys,
            &TrainConfig {
                max_epochs: 1,
                ..cfg
            },
        )
        .unwrap();
        let after = dataset_loss(&one, &tx, &ty).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn permuted_labels_stay_near_chance() {
        let mut total = 0.0;
        for seed in 0..5u64 {
            let (xs, mut ys) = blobs(300, 1.0, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ys.shuffle(&mut rng);
            let (train_x, test_x) = xs.split_at(200);
            let (train_y, test_y) = ys.split_at(200);
            let model = train(
                train_x,
                train_y,
                &TrainConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let scores: Vec<(f64, bool)> = test_x
                .iter()
                .zip(test_y)
                .map(|(x, &y)| (model.predict(x).unwrap(), y))
                .collect();
            total += metrics::auc(&scores).unwrap();
        }
        let mean = total / 5.0;
        assert!((0.4..=0.6).contains(&mean), "mean AUC {mean}");
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = blobs(120, 0.5, 3);
        let cfg = TrainConfig {
            seed: 42,
            max_epochs: 20,
            ..Default::default()
        };
        let a = train(&xs, &ys, &cfg).unwrap();
        let b = train(&xs, &ys, &cfg).unwrap();
        assert_eq!(a.to_checkpoint(), b.to_checkpoint());
    }

    #[test]
    fn training_rejects_single_class() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            train(&xs, &[true, true, true], &TrainConfig::default()),
            Err(Error::SingleClass(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (xs, ys) = blobs(80, 1.0, 9);
        let model = train(&xs, &ys, &TrainConfig { max_epochs: 5, ..Default::default() }).unwrap();
        let json = serde_json::to_string(&model.to_checkpoint()).unwrap();
        let back = Mlp::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
