//! Next-step prediction loss and the reconstruction / waviness
//! regularizers, evaluated on a padded batch.
//!
//! For a student with `T` steps, terms exist for `t = 0..T-1` (0-based):
//!
//! * prediction: `CE(y_t[q_{t+1}], a_{t+1})`
//! * reconstruction: `CE(y_t[q_t], a_t)`
//! * waviness: `‖y_{t+1} − y_t‖₁` and `‖y_{t+1} − y_t‖₂²`
//!
//! Every term is averaged over `N = Σ (T_i − 1)`, the waviness terms over
//! `M · N`. Padded steps never enter a sum or a denominator.

use serde::{Deserialize, Serialize};

use crate::data::StudentSequence;
use crate::error::{Error, Result};
use crate::state::KnowledgeStateSequence;

const PROB_FLOOR: f64 = 1e-15;

/// Binary cross-entropy of a predicted probability.
pub fn cross_entropy(p: f64, correct: bool) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if correct {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Regularization weights `(λ_r, λ_w1, λ_w2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub r: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Lambdas {
    /// Plain DKT.
    pub const NONE: Lambdas = Lambdas {
        r: 0.0,
        w1: 0.0,
        w2: 0.0,
    };

    /// DKT+ weights used for the reported experiments.
    pub const DKT_PLUS: Lambdas = Lambdas {
        r: 0.1,
        w1: 0.3,
        w2: 3.0,
    };
}

/// The four loss components and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub prediction: f64,
    pub reconstruction: f64,
    pub w1: f64,
    pub w2_squared: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn combine(prediction: f64, reconstruction: f64, w1: f64, w2_squared: f64, lambdas: Lambdas) -> Self {
        Self {
            prediction,
            reconstruction,
            w1,
            w2_squared,
            total: prediction + lambdas.r * reconstruction + lambdas.w1 * w1 + lambdas.w2 * w2_squared,
        }
    }
}

/// Predictions and observations padded to the batch's longest sequence.
#[derive(Debug, Clone)]
pub struct LossBatch {
    n_skills: usize,
    max_len: usize,
    lengths: Vec<usize>,
    /// `B × T_max × M`
    outputs: Vec<f64>,
    /// `B × T_max`
    skills: Vec<usize>,
    correct: Vec<bool>,
}

impl LossBatch {
    pub fn new(items: &[(&KnowledgeStateSequence, &StudentSequence)]) -> Result<Self> {
        let n_skills = items.first().map_or(0, |(y, _)| y.n_skills());
        let max_len = items.iter().map(|(y, _)| y.n_steps()).max().unwrap_or(0);
        let b = items.len();
        let mut batch = Self {
            n_skills,
            max_len,
            lengths: Vec::with_capacity(b),
            outputs: vec![0.0; b * max_len * n_skills],
            skills: vec![0; b * max_len],
            correct: vec![false; b * max_len],
        };
        for (i, (y, seq)) in items.iter().enumerate() {
            if y.n_skills() != n_skills {
                return Err(Error::Shape("mixed skill counts in one batch".into()));
            }
            if y.n_steps() != seq.len() {
                return Err(Error::Shape(format!(
                    "{} predicted steps for a sequence of length {}",
                    y.n_steps(),
                    seq.len()
                )));
            }
            let base = i * max_len;
            batch.outputs[base * n_skills..(base + y.n_steps()) * n_skills]
                .copy_from_slice(y.values());
            for (t, it) in seq.interactions().iter().enumerate() {
                if it.skill_id >= n_skills {
                    return Err(Error::Shape(format!(
                        "skill {} outside {n_skills} predicted skills",
                        it.skill_id
                    )));
                }
                batch.skills[base + t] = it.skill_id;
                batch.correct[base + t] = it.correct;
            }
            batch.lengths.push(seq.len());
        }
        Ok(batch)
    }

    pub fn single(y: &KnowledgeStateSequence, seq: &StudentSequence) -> Result<Self> {
        Self::new(&[(y, seq)])
    }

    /// `Σ (T_i − 1)` over students with at least two steps.
    pub fn valid_terms(&self) -> usize {
        self.lengths.iter().map(|&t| t.saturating_sub(1)).sum()
    }

    fn denominator(&self) -> Result<f64> {
        match self.valid_terms() {
            0 => Err(Error::UndefinedLoss),
            n => Ok(n as f64),
        }
    }

    fn mask(&self, i: usize, t: usize) -> bool {
        t + 1 < self.lengths[i]
    }

    fn y(&self, i: usize, t: usize) -> &[f64] {
        let at = (i * self.max_len + t) * self.n_skills;
        &self.outputs[at..at + self.n_skills]
    }

    fn obs(&self, i: usize, t: usize) -> (usize, bool) {
        let at = i * self.max_len + t;
        (self.skills[at], self.correct[at])
    }

    fn valid_steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.lengths.len())
            .flat_map(move |i| (0..self.max_len).map(move |t| (i, t)))
            .filter(|&(i, t)| self.mask(i, t))
    }

    /// Next-step cross-entropy `L`.
    pub fn prediction_loss(&self) -> Result<f64> {
        let n = self.denominator()?;
        let sum: f64 = self
            .valid_steps()
            .map(|(i, t)| {
                let (q, a) = self.obs(i, t + 1);
                cross_entropy(self.y(i, t)[q], a)
            })
            .sum();
        Ok(sum / n)
    }

    /// Current-step reconstruction cross-entropy `r`.
    pub fn reconstruction_loss(&self) -> Result<f64> {
        let n = self.denominator()?;
        let sum: f64 = self
            .valid_steps()
            .map(|(i, t)| {
                let (q, a) = self.obs(i, t);
                cross_entropy(self.y(i, t)[q], a)
            })
            .sum();
        Ok(sum / n)
    }

    /// Waviness `(w1, w2²)`.
    pub fn waviness(&self) -> Result<(f64, f64)> {
        let n = self.denominator()? * self.n_skills as f64;
        let (mut l1, mut l2) = (0.0, 0.0);
        for (i, t) in self.valid_steps() {
            for (a, b) in self.y(i, t + 1).iter().zip(self.y(i, t)) {
                let d = a - b;
                l1 += d.abs();
                l2 += d * d;
            }
        }
        Ok((l1 / n, l2 / n))
    }

    pub fn terms(&self, lambdas: Lambdas) -> Result<LossTerms> {
        let (w1, w2) = self.waviness()?;
        Ok(LossTerms::combine(
            self.prediction_loss()?,
            self.reconstruction_loss()?,
            w1,
            w2,
            lambdas,
        ))
    }
}

/// `L` for a single student.
pub fn loss_prediction(y: &KnowledgeStateSequence, seq: &StudentSequence) -> Result<f64> {
    LossBatch::single(y, seq)?.prediction_loss()
}

/// `r` for a single student.
pub fn regularizer_r(y: &KnowledgeStateSequence, seq: &StudentSequence) -> Result<f64> {
    LossBatch::single(y, seq)?.reconstruction_loss()
}

/// `(w1, w2²)` over a batch of state sequences.
pub fn regularizer_w(states: &[KnowledgeStateSequence]) -> Result<(f64, f64)> {
    let m = states.first().map_or(0, KnowledgeStateSequence::n_skills);
    let (mut l1, mut l2, mut n) = (0.0, 0.0, 0usize);
    for y in states {
        if y.n_skills() != m {
            return Err(Error::Shape("mixed skill counts".into()));
        }
        for t in 0..y.n_steps().saturating_sub(1) {
            for (a, b) in y.row(t + 1).iter().zip(y.row(t)) {
                l1 += (a - b).abs();
                l2 += (a - b) * (a - b);
            }
        }
        n += y.n_steps().saturating_sub(1);
    }
    if n == 0 {
        return Err(Error::UndefinedLoss);
    }
    let denom = (m * n) as f64;
    Ok((l1 / denom, l2 / denom))
}

/// `L' = L + λ_r r + λ_w1 w1 + λ_w2 w2²` over a batch.
pub fn loss_total(
    states: &[KnowledgeStateSequence],
    sequences: &[StudentSequence],
    lambdas: Lambdas,
) -> Result<LossTerms> {
    if states.len() != sequences.len() {
        return Err(Error::Shape("one state sequence per student expected".into()));
    }
    let items: Vec<_> = states.iter().zip(sequences).collect();
    LossBatch::new(&items)?.terms(lambdas)
}

/// Gradient of `L'` with respect to the output logits of one student,
/// given that student's outputs. `n_terms` is the batch-wide `Σ (T_i − 1)`.
pub(crate) fn logit_gradient(
    outputs: &[f64],
    seq: &StudentSequence,
    n_skills: usize,
    n_terms: f64,
    lambdas: Lambdas,
) -> Vec<f64> {
    let m = n_skills;
    let steps = seq.len();
    let obs = seq.interactions();
    let mut dy = vec![0.0; steps * m];
    let mut dz = vec![0.0; steps * m];
    let wave = 1.0 / (m as f64 * n_terms);
    for t in 0..steps.saturating_sub(1) {
        let next = &obs[t + 1];
        let y_next = outputs[t * m + next.skill_id];
        dz[t * m + next.skill_id] += (y_next - f64::from(u8::from(next.correct))) / n_terms;
        if lambdas.r != 0.0 {
            let cur = &obs[t];
            let y_cur = outputs[t * m + cur.skill_id];
            dz[t * m + cur.skill_id] +=
                lambdas.r * (y_cur - f64::from(u8::from(cur.correct))) / n_terms;
        }
        if lambdas.w1 != 0.0 || lambdas.w2 != 0.0 {
            for j in 0..m {
                let d = outputs[(t + 1) * m + j] - outputs[t * m + j];
                let g = wave * (lambdas.w1 * sign(d) + lambdas.w2 * 2.0 * d);
                dy[(t + 1) * m + j] += g;
                dy[t * m + j] -= g;
            }
        }
    }
    for ((z, &d), &y) in dz.iter_mut().zip(&dy).zip(outputs) {
        *z += d * y * (1.0 - y);
    }
    dz
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
