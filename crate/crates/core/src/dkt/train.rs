use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{logit_gradient, Lambdas, LossBatch, LossTerms};
use super::network::{backward, forward, forward_trace, Dropout};
use super::params::DktParams;
use crate::data::StudentSequence;
use crate::error::{Error, Result};
use crate::eval::metrics::auc;
use crate::state::KnowledgeStateSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adaptive moment estimation (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

/// Knowledge-tracing training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Probability of dropping a hidden unit on the way to the read-out.
    pub dropout_rate: f64,
    pub clip_norm: f64,
    pub lambda_r: f64,
    pub lambda_w1: f64,
    pub lambda_w2: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation AUC improvement before stopping.
    pub patience: usize,
    pub init_std: f64,
    pub optimizer: Optimizer,
    /// Share of students held out for early stopping.
    pub validation_fraction: f64,
    /// Training sequences are cut into segments of at most this many steps.
    pub max_segment_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            dropout_rate: 0.5,
            clip_norm: 3.0,
            lambda_r: Lambdas::DKT_PLUS.r,
            lambda_w1: Lambdas::DKT_PLUS.w1,
            lambda_w2: Lambdas::DKT_PLUS.w2,
            hidden: 200,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            init_std: 0.05,
            optimizer: Optimizer::Sgd,
            validation_fraction: 0.1,
            max_segment_len: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults with all regularizers switched off.
    pub fn dkt() -> Self {
        Self {
            lambda_r: 0.0,
            lambda_w1: 0.0,
            lambda_w2: 0.0,
            ..Self::default()
        }
    }

    pub fn lambdas(&self) -> Lambdas {
        Lambdas {
            r: self.lambda_r,
            w1: self.lambda_w1,
            w2: self.lambda_w2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        let l = self.lambdas();
        if !(l.r >= 0.0 && l.w1 >= 0.0 && l.w2 >= 0.0) {
            return fail("regularization weights must be non-negative");
        }
        if self.hidden == 0 || self.batch_size == 0 || self.max_segment_len < 2 {
            return fail("hidden and batch_size must be positive, max_segment_len at least 2");
        }
        if !(self.init_std > 0.0) {
            return fail("init_std must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch. Epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: LossTerms,
    pub val_auc: f64,
    /// Largest post-clipping global gradient norm seen in this epoch.
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// `(before, after)` clipping, one per update.
    pub grad_norms: Vec<(f64, f64)>,
    pub best_epoch: usize,
}

impl TrainingLog {
    /// Writes `epoch,L,r,w1,w2_squared,val_auc` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["epoch", "L", "r", "w1", "w2_squared", "val_auc"])?;
        for e in &self.epochs {
            csv.write_record([
                e.epoch.to_string(),
                e.terms.prediction.to_string(),
                e.terms.reconstruction.to_string(),
                e.terms.w1.to_string(),
                e.terms.w2_squared.to_string(),
                e.val_auc.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// A trained knowledge-tracing model.
#[derive(Debug, Clone, PartialEq)]
pub struct DktModel {
    pub params: DktParams,
    pub config: TrainConfig,
}

impl DktModel {
    pub fn n_skills(&self) -> usize {
        self.params.n_skills()
    }

    /// Full-history knowledge states with dropout off.
    pub fn predict(&self, sequence: &StudentSequence) -> Result<KnowledgeStateSequence> {
        forward(&self.params, sequence, Dropout::Off)
    }
}

/// Gradient of the batch loss `L'` and the loss terms at `params`.
///
/// `dropout_seed` switches dropout on; each sequence gets a mask stream
/// derived from the seed and its batch position, so the result does not
/// depend on thread scheduling.
pub fn batch_gradient(
    params: &DktParams,
    batch: &[&StudentSequence],
    lambdas: Lambdas,
    dropout: Option<(f64, u64)>,
) -> Result<(DktParams, LossTerms)> {
    let n_terms: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
    if n_terms == 0 {
        return Err(Error::UndefinedLoss);
    }
    let n_terms = n_terms as f64;
    let per_sequence: Vec<Result<(DktParams, KnowledgeStateSequence)>> = batch
        .par_iter()
        .enumerate()
        .map(|(k, seq)| {
            let mode = match dropout {
                Some((rate, seed)) if rate > 0.0 => Dropout::On {
                    rate,
                    seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64),
                },
                _ => Dropout::Off,
            };
            let trace = forward_trace(params, seq, mode)?;
            let d_logits = logit_gradient(trace.outputs(), seq, params.n_skills(), n_terms, lambdas);
            let mut g = DktParams::zeros(params.n_skills(), params.hidden());
            backward(params, &trace, &d_logits, &mut g);
            Ok((g, trace.into_states()))
        })
        .collect();
    let mut grads = DktParams::zeros(params.n_skills(), params.hidden());
    let mut states = Vec::with_capacity(batch.len());
    for item in per_sequence {
        let (g, y) = item?;
        grads.add_assign(&g);
        states.push(y);
    }
    let items: Vec<_> = states.iter().zip(batch.iter().copied()).collect();
    let terms = LossBatch::new(&items)?.terms(lambdas)?;
    Ok((grads, terms))
}

/// Loss terms over `sequences` with dropout off.
pub fn evaluate_terms(
    params: &DktParams,
    sequences: &[StudentSequence],
    lambdas: Lambdas,
) -> Result<LossTerms> {
    let states: Vec<KnowledgeStateSequence> = sequences
        .par_iter()
        .map(|s| forward(params, s, Dropout::Off))
        .collect::<Result<_>>()?;
    let items: Vec<_> = states.iter().zip(sequences).collect();
    LossBatch::new(&items)?.terms(lambdas)
}

/// Next-step predictions `y_t[q_{t+1}]` paired with the observed answers.
pub fn next_step_predictions(
    params: &DktParams,
    sequences: &[StudentSequence],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let per: Vec<Result<(Vec<f64>, Vec<bool>)>> = sequences
        .par_iter()
        .map(|s| {
            let y = forward(params, s, Dropout::Off)?;
            let obs = s.interactions();
            Ok((1..obs.len())
                .map(|t| (y.get(t - 1, obs[t].skill_id), obs[t].correct))
                .unzip())
        })
        .collect();
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for p in per {
        let (s, l) = p?;
        scores.extend(s);
        labels.extend(l);
    }
    Ok((scores, labels))
}

/// Next-step AUC over `sequences`.
pub fn next_step_auc(params: &DktParams, sequences: &[StudentSequence]) -> Result<f64> {
    let (scores, labels) = next_step_predictions(params, sequences)?;
    auc(&scores, &labels)
}

struct AdamState {
    m: DktParams,
    v: DktParams,
    step: i32,
}

fn apply_update(
    params: &mut DktParams,
    grads: &DktParams,
    config: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let lr = config.learning_rate;
    match adam {
        None => {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                *p -= lr * g;
            }
        }
        Some(state) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            state.step += 1;
            let c1 = 1.0 - B1.powi(state.step);
            let c2 = 1.0 - B2.powi(state.step);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads.iter())
                .zip(state.m.iter_mut())
                .zip(state.v.iter_mut())
            {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}

/// Splits students into (train, validation) by a seeded shuffle.
pub fn split_validation(
    sequences: &[StudentSequence],
    fraction: f64,
    seed: u64,
) -> (Vec<StudentSequence>, Vec<StudentSequence>) {
    let n = sequences.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5A11D));
    let n_val = if fraction > 0.0 && n >= 2 {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let mut val: Vec<usize> = idx[..n_val].to_vec();
    let mut train: Vec<usize> = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (
        train.into_iter().map(|i| sequences[i].clone()).collect(),
        val.into_iter().map(|i| sequences[i].clone()).collect(),
    )
}

/// Trains a knowledge-tracing model on `sequences` over `n_skills` skills.
///
/// Mini-batch gradient descent on `L'` with global-norm clipping; dropout
/// on the read-out during training only; early stopping on validation
/// next-step AUC. Returns the parameters of the best validation epoch.
pub fn train(
    sequences: &[StudentSequence],
    n_skills: usize,
    config: &TrainConfig,
) -> Result<(DktModel, TrainingLog)> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    if let Some(bad) = sequences.iter().find(|s| s.max_skill() > n_skills) {
        return Err(Error::Shape(format!(
            "student `{}` uses a skill id beyond {n_skills}",
            bad.student_id()
        )));
    }
    let (train_set, val_set) = split_validation(sequences, config.validation_fraction, config.seed);
    let segments: Vec<StudentSequence> = train_set
        .iter()
        .flat_map(|s| s.segments(config.max_segment_len))
        .filter(|s| s.len() >= 2)
        .collect();
    if segments.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    let monitor: &[StudentSequence] = if val_set.is_empty() { &train_set } else { &val_set };
    let lambdas = config.lambdas();

    let mut params = DktParams::init(n_skills, config.hidden, config.init_std, config.seed)?;
    let mut adam = (config.optimizer == Optimizer::Adam).then(|| AdamState {
        m: DktParams::zeros(n_skills, config.hidden),
        v: DktParams::zeros(n_skills, config.hidden),
        step: 0,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = TrainingLog::default();

    let record = |params: &DktParams, epoch: usize, max_grad_norm: f64| -> Result<EpochRecord> {
        let terms = evaluate_terms(params, &segments, lambdas)?;
        if !terms.total.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let val_auc = next_step_auc(params, monitor).unwrap_or(0.5);
        Ok(EpochRecord {
            epoch,
            terms,
            val_auc,
            max_grad_norm,
        })
    };

    log.epochs.push(record(&params, 0, 0.0)?);
    let mut best = (log.epochs[0].val_auc, params.clone(), 0usize);
    let mut order: Vec<usize> = (0..segments.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut max_norm: f64 = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&StudentSequence> = chunk.iter().map(|&i| &segments[i]).collect();
            let dropout = (config.dropout_rate > 0.0).then(|| (config.dropout_rate, rng.random()));
            let (mut grads, terms) = batch_gradient(&params, &batch, lambdas, dropout)?;
            if !terms.total.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let norm = grads.norm();
            if !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            let clipped = grads.norm();
            max_norm = max_norm.max(clipped);
            log.grad_norms.push((norm, clipped));
            apply_update(&mut params, &grads, config, &mut adam);
        }
        let rec = record(&params, epoch, max_norm)?;
        log.epochs.push(rec);
        if rec.val_auc > best.0 {
            best = (rec.val_auc, params.clone(), epoch);
        } else if epoch - best.2 >= config.patience {
            break;
        }
    }

    log.best_epoch = best.2;
    Ok((
        DktModel {
            params: best.1,
            config: config.clone(),
        },
        log,
    ))
}
