//! Adam training with CTC, validation-based model selection and greedy
//! evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ctc::{greedy_decode, target_classes};
use super::model::{InputNorm, TdsModel};
use crate::error::{Error, Result};
use crate::io::LabelSequence;
use crate::matrix::Matrix;
use crate::metrics::{error_rate, ErrorReport};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Fit per-dimension input standardization on the training frames.
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            patience: 20,
            normalize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam moments".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::InvalidArgument("clip_norm must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Features paired with a target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub id: String,
    pub features: Matrix<T>,
    pub target: LabelSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Scales `grad` to at most `max_norm` in L2; returns the norm before.
pub fn clip_gradient<T: Real>(grad: &mut [T], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = T::of(max_norm / norm);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean CTC loss over the epoch's feasible training utterances.
    pub train_loss: f64,
    /// Aggregate validation error rate (edits / target length).
    pub val_error: f64,
    pub val_mean_of_rates: f64,
    /// Training utterances skipped as CTC-infeasible.
    pub skipped: usize,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_error,val_mean_of_rates,skipped\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{}\n",
            m.epoch, m.train_loss, m.val_error, m.val_mean_of_rates, m.skipped
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest validation error.
    pub best: TdsModel<T>,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch and loss at which training produced a non-finite value.
    pub diverged: Option<(usize, f64)>,
}

pub fn decode<T: Real>(model: &TdsModel<T>, features: &Matrix<T>, kind: crate::io::VocabKind) -> Result<LabelSequence> {
    greedy_decode(&model.forward(features)?, kind)
}

/// Greedy decodes for every example, in order.
pub fn decode_all<T: Real>(model: &TdsModel<T>, examples: &[Example<T>]) -> Result<Vec<LabelSequence>> {
    examples
        .par_iter()
        .map(|e| decode(model, &e.features, e.target.kind()))
        .collect()
}

pub fn evaluate<T: Real>(model: &TdsModel<T>, examples: &[Example<T>]) -> Result<ErrorReport> {
    let predictions = decode_all(model, examples)?;
    let targets: Vec<LabelSequence> = examples.iter().map(|e| e.target.clone()).collect();
    error_rate(&targets, &predictions)
}

fn check_examples<T: Real>(model: &TdsModel<T>, examples: &[Example<T>]) -> Result<()> {
    let vocab = model.config.classes - 1;
    for e in examples {
        if e.target.vocab_size() != vocab {
            return Err(Error::InvalidArgument(format!(
                "{}: target vocabulary {} does not match model vocabulary {vocab}",
                e.id,
                e.target.vocab_size()
            )));
        }
    }
    Ok(())
}

/// Mean loss and summed gradient of one batch. Utterances run in parallel;
/// their gradients are summed in batch order so the result does not depend
/// on scheduling.
fn batch_step<T: Real>(model: &TdsModel<T>, batch: &[&Example<T>]) -> Result<(Vec<T>, f64, usize, usize)> {
    let results = batch
        .par_iter()
        .map(|e| model.loss_and_grad(&e.features, &target_classes(&e.target)))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![T::zero(); model.params.len()];
    let (mut loss, mut used, mut skipped) = (0.0, 0, 0);
    for (out, g) in &results {
        if !out.feasible {
            skipped += 1;
            continue;
        }
        used += 1;
        loss += out.loss.as_f64();
        for (a, &b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    if used > 0 {
        let inv = T::one() / T::of_usize(used);
        grad.iter_mut().for_each(|g| *g *= inv);
    }
    Ok((grad, loss, used, skipped))
}

/// Trains `model` and returns the best checkpoint by validation error.
/// Training stops at `max_epochs`, after `patience` epochs without
/// improvement, or on a non-finite loss or gradient.
pub fn train<T: Real>(
    mut model: TdsModel<T>,
    train_set: &[Example<T>],
    val_set: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training needs non-empty train and val splits".into()));
    }
    check_examples(&model, train_set)?;
    check_examples(&model, val_set)?;
    if cfg.normalize_inputs {
        model.norm = InputNorm::fit(model.config.d_in(), train_set.iter().map(|e| &e.features));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut diverged = None;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut used, mut skipped) = (0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (mut grad, loss, n, s) = batch_step(&model, &batch)?;
            skipped += s;
            if n == 0 {
                continue;
            }
            let norm = clip_gradient(&mut grad, cfg.clip_norm);
            if !loss.is_finite() || !norm.is_finite() {
                log::error!("epoch {epoch}: non-finite loss {loss} or gradient norm {norm}");
                diverged = Some((epoch, loss / n as f64));
                break 'epochs;
            }
            loss_sum += loss;
            used += n;
            adam.update(&mut model.params, &grad, cfg);
        }
        if skipped > 0 {
            log::warn!("epoch {epoch}: {skipped} utterance(s) too short for their targets were skipped");
        }
        if used == 0 {
            return Err(Error::InvalidArgument("no training utterance is CTC-feasible".into()));
        }
        let report = evaluate(&model, val_set)?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / used as f64,
            val_error: report.aggregate,
            val_mean_of_rates: report.mean_of_rates,
            skipped,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val error {:.4}",
            m.train_loss,
            m.val_error
        );
        if m.val_error < best.2 {
            best = (model.clone(), epoch, m.val_error);
        }
        metrics.push(m);
        if epoch - best.1 >= cfg.patience.max(1) {
            log::info!("no validation improvement for {} epochs; stopping", epoch - best.1);
            break;
        }
    }

    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        metrics,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_with_zero_lr_is_identity() {
        let cfg = TrainConfig { lr: 0.0, ..Default::default() };
        let mut p = vec![0.3f32, -1.5, 0.0, -0.0];
        let before = p.clone();
        let mut adam = Adam::new(4);
        for _ in 0..10 {
            adam.update(&mut p, &[1.0, -2.0, 0.5, 3.0], &cfg);
        }
        assert_eq!(
            p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0f64, 4.0];
        assert_eq!(clip_gradient(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1f64];
        clip_gradient(&mut small, 1.0);
        assert_eq!(small, vec![0.1]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
