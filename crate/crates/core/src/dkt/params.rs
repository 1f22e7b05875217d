use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Weights of a single-layer LSTM with a sigmoid read-out.
///
/// Gates are packed as `[input, forget, cell, output]` blocks of `hidden`
/// columns each. Matrices are row-major:
///
/// * `w_in`:  `2M × 4H`, row `k` is added to the gate pre-activation when
///   input bit `k` is set,
/// * `w_rec`: `H × 4H`, recurrent weights,
/// * `b_gates`: `4H`,
/// * `w_out`: `H × M`, read-out weights,
/// * `b_out`: `M`.
///
/// The same layout doubles as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct DktParams {
    n_skills: usize,
    hidden: usize,
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub b_gates: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Names of the weight arrays in checkpoint order.
pub const ARRAY_NAMES: [&str; 5] = ["w_in", "w_rec", "b_gates", "w_out", "b_out"];

impl DktParams {
    pub fn zeros(n_skills: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        Self {
            n_skills,
            hidden,
            w_in: vec![0.0; 2 * n_skills * g],
            w_rec: vec![0.0; hidden * g],
            b_gates: vec![0.0; g],
            w_out: vec![0.0; hidden * n_skills],
            b_out: vec![0.0; n_skills],
        }
    }

    /// Zero-mean Gaussian weights; biases zero except the forget gate at 1.
    pub fn init(n_skills: usize, hidden: usize, std: f64, seed: u64) -> Result<Self> {
        if n_skills == 0 || hidden == 0 {
            return Err(Error::Shape("n_skills and hidden must be positive".into()));
        }
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::Config(format!("init std {std}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(n_skills, hidden);
        for w in p
            .w_in
            .iter_mut()
            .chain(p.w_rec.iter_mut())
            .chain(p.w_out.iter_mut())
        {
            *w = normal.sample(&mut rng);
        }
        p.b_gates[hidden..2 * hidden].fill(1.0);
        Ok(p)
    }

    pub fn from_arrays(n_skills: usize, hidden: usize, arrays: [Vec<f64>; 5]) -> Result<Self> {
        let mut p = Self::zeros(n_skills, hidden);
        for ((name, slot), values) in ARRAY_NAMES.iter().zip(p.arrays_mut()).zip(arrays) {
            if slot.len() != values.len() {
                return Err(Error::Shape(format!(
                    "{name}: expected {} values, got {}",
                    slot.len(),
                    values.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        Ok(p)
    }

    pub fn n_skills(&self) -> usize {
        self.n_skills
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn arrays(&self) -> [&[f64]; 5] {
        [&self.w_in, &self.w_rec, &self.b_gates, &self.w_out, &self.b_out]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_in,
            &mut self.w_rec,
            &mut self.b_gates,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w_in
            .iter()
            .chain(&self.w_rec)
            .chain(&self.b_gates)
            .chain(&self.w_out)
            .chain(&self.b_out)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_in
            .iter_mut()
            .chain(self.w_rec.iter_mut())
            .chain(self.b_gates.iter_mut())
            .chain(self.w_out.iter_mut())
            .chain(self.b_out.iter_mut())
    }

    pub fn get(&self, mut index: usize) -> f64 {
        for a in self.arrays() {
            if index < a.len() {
                return a[index];
            }
            index -= a.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get_mut(&mut self, mut index: usize) -> &mut f64 {
        for a in self.arrays_mut() {
            if index < a.len() {
                return &mut a[index];
            }
            index -= a.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &DktParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn check_shape(&self, other: &DktParams) -> Result<()> {
        if self.n_skills != other.n_skills || self.hidden != other.hidden {
            return Err(Error::Shape(format!(
                "parameters are {}x{}, expected {}x{}",
                other.n_skills, other.hidden, self.n_skills, self.hidden
            )));
        }
        Ok(())
    }
}
