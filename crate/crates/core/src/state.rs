use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step, per-skill mastery estimates for one student: a `T × M`
/// row-major matrix whose row `t` is the knowledge state after step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStateSequence {
    n_steps: usize,
    n_skills: usize,
    values: Vec<f64>,
}

impl KnowledgeStateSequence {
    pub fn new(n_steps: usize, n_skills: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_steps * n_skills {
            return Err(Error::Shape(format!(
                "{} values for a {n_steps}x{n_skills} state matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_steps,
            n_skills,
            values,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_skills = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_skills) {
            return Err(Error::Shape("ragged knowledge-state rows".into()));
        }
        let n_steps = rows.len();
        Self::new(n_steps, n_skills, rows.into_iter().flatten().collect())
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_skills(&self) -> usize {
        self.n_skills
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_skills..(t + 1) * self.n_skills]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_skills.max(1))
    }

    pub fn get(&self, t: usize, skill: usize) -> f64 {
        self.values[t * self.n_skills + skill]
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.n_steps.checked_sub(1).map(|t| self.row(t))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean over skills at each step.
    pub fn step_means(&self) -> Vec<f64> {
        self.rows()
            .take(self.n_steps)
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }
}
