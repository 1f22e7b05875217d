//! LSTM recurrence, sigmoid read-out and backpropagation through time.
//!
//! Inputs are never materialized: an encoded interaction has at most two
//! set bits, so the input projection is the sum of one or two rows of
//! `w_in`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::DktParams;
use crate::data::{encoded_indices, StudentSequence};
use crate::error::{Error, Result};
use crate::state::KnowledgeStateSequence;

/// Dropout on the hidden-to-output connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dropout {
    Off,
    /// Drop probability and mask seed.
    On { rate: f64, seed: u64 },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    steps: usize,
    hidden: usize,
    n_skills: usize,
    inputs: Vec<[Option<usize>; 2]>,
    /// `T × 4H` post-activation gates `[i, f, g, o]`.
    gates: Vec<f64>,
    /// `T × H` cell states.
    cells: Vec<f64>,
    /// `T × H` tanh of cell states.
    cell_tanh: Vec<f64>,
    /// `T × H` hidden states.
    hiddens: Vec<f64>,
    /// `T × H` dropout multipliers (empty when dropout is off).
    masks: Vec<f64>,
    /// `T × M` output probabilities.
    outputs: Vec<f64>,
}

impl ForwardTrace {
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn into_states(self) -> KnowledgeStateSequence {
        KnowledgeStateSequence::new(self.steps, self.n_skills, self.outputs)
            .expect("trace shape is consistent")
    }
}

pub(crate) fn encode_sequence(
    params: &DktParams,
    sequence: &StudentSequence,
) -> Result<Vec<[Option<usize>; 2]>> {
    let m = params.n_skills();
    sequence
        .interactions()
        .iter()
        .map(|it| {
            encoded_indices(it.skill_id, it.correct, m).map_err(|_| {
                Error::Shape(format!(
                    "skill id {} does not fit a model over {m} skills",
                    it.skill_id
                ))
            })
        })
        .collect()
}

/// Runs the network over a whole sequence from a zero initial state.
pub fn forward_trace(
    params: &DktParams,
    sequence: &StudentSequence,
    dropout: Dropout,
) -> Result<ForwardTrace> {
    let inputs = encode_sequence(params, sequence)?;
    let (h, m) = (params.hidden(), params.n_skills());
    let g4 = 4 * h;
    let steps = inputs.len();

    let mut gates = vec![0.0; steps * g4];
    let mut cells = vec![0.0; steps * h];
    let mut cell_tanh = vec![0.0; steps * h];
    let mut hiddens = vec![0.0; steps * h];
    let mut outputs = vec![0.0; steps * m];
    let (mut masks, mut mask_rng, keep_scale, rate) = match dropout {
        Dropout::Off => (Vec::new(), None, 1.0, 0.0),
        Dropout::On { rate, seed } => (
            vec![0.0; steps * h],
            Some(ChaCha8Rng::seed_from_u64(seed)),
            1.0 / (1.0 - rate),
            rate,
        ),
    };

    let mut z = vec![0.0; g4];
    let mut dropped = vec![0.0; h];
    for t in 0..steps {
        z.copy_from_slice(&params.b_gates);
        for k in inputs[t].iter().flatten() {
            let row = &params.w_in[k * g4..(k + 1) * g4];
            z.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        if t > 0 {
            let prev = &hiddens[(t - 1) * h..t * h];
            for (k, &hk) in prev.iter().enumerate() {
                if hk != 0.0 {
                    let row = &params.w_rec[k * g4..(k + 1) * g4];
                    z.iter_mut().zip(row).for_each(|(a, b)| *a += hk * b);
                }
            }
        }
        let gate = &mut gates[t * g4..(t + 1) * g4];
        for u in 0..h {
            gate[u] = sigmoid(z[u]);
            gate[h + u] = sigmoid(z[h + u]);
            gate[2 * h + u] = z[2 * h + u].tanh();
            gate[3 * h + u] = sigmoid(z[3 * h + u]);
        }
        for u in 0..h {
            let c_prev = if t > 0 { cells[(t - 1) * h + u] } else { 0.0 };
            let c = gate[h + u] * c_prev + gate[u] * gate[2 * h + u];
            let tc = c.tanh();
            cells[t * h + u] = c;
            cell_tanh[t * h + u] = tc;
            hiddens[t * h + u] = gate[3 * h + u] * tc;
        }
        let h_t = &hiddens[t * h..(t + 1) * h];
        if let Some(rng) = mask_rng.as_mut() {
            let mask = &mut masks[t * h..(t + 1) * h];
            for u in 0..h {
                mask[u] = if rng.random_bool(rate) { 0.0 } else { keep_scale };
                dropped[u] = h_t[u] * mask[u];
            }
        } else {
            dropped.copy_from_slice(h_t);
        }
        let out = &mut outputs[t * m..(t + 1) * m];
        out.copy_from_slice(&params.b_out);
        for (k, &hk) in dropped.iter().enumerate() {
            if hk != 0.0 {
                let row = &params.w_out[k * m..(k + 1) * m];
                out.iter_mut().zip(row).for_each(|(a, b)| *a += hk * b);
            }
        }
        out.iter_mut().for_each(|v| *v = sigmoid(*v));
    }

    Ok(ForwardTrace {
        steps,
        hidden: h,
        n_skills: m,
        inputs,
        gates,
        cells,
        cell_tanh,
        hiddens,
        masks,
        outputs,
    })
}

/// Knowledge states `y_1..y_T` for a sequence.
pub fn forward(
    params: &DktParams,
    sequence: &StudentSequence,
    dropout: Dropout,
) -> Result<KnowledgeStateSequence> {
    Ok(forward_trace(params, sequence, dropout)?.into_states())
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the output logits is `d_logits` (`T × M`).
pub fn backward(params: &DktParams, trace: &ForwardTrace, d_logits: &[f64], grads: &mut DktParams) {
    let (h, m) = (trace.hidden, trace.n_skills);
    let g4 = 4 * h;
    assert_eq!(d_logits.len(), trace.steps * m);

    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    let mut dh = vec![0.0; h];

    for t in (0..trace.steps).rev() {
        let dl = &d_logits[t * m..(t + 1) * m];
        let h_t = &trace.hiddens[t * h..(t + 1) * h];
        let mask = (!trace.masks.is_empty()).then(|| &trace.masks[t * h..(t + 1) * h]);

        for (j, &d) in dl.iter().enumerate() {
            grads.b_out[j] += d;
        }
        for k in 0..h {
            let mk = mask.map_or(1.0, |mm| mm[k]);
            let hk = h_t[k] * mk;
            let row = &params.w_out[k * m..(k + 1) * m];
            let grow = &mut grads.w_out[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                grow[j] += hk * dl[j];
                acc += row[j] * dl[j];
            }
            dh[k] = acc * mk + dh_next[k];
        }

        let gate = &trace.gates[t * g4..(t + 1) * g4];
        for u in 0..h {
            let (i, f, g, o) = (gate[u], gate[h + u], gate[2 * h + u], gate[3 * h + u]);
            let tc = trace.cell_tanh[t * h + u];
            let c_prev = if t > 0 { trace.cells[(t - 1) * h + u] } else { 0.0 };
            let d_o = dh[u] * tc;
            let dc = dh[u] * o * (1.0 - tc * tc) + dc_next[u];
            dz[u] = dc * g * i * (1.0 - i);
            dz[h + u] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + u] = dc * i * (1.0 - g * g);
            dz[3 * h + u] = d_o * o * (1.0 - o);
            dc_next[u] = dc * f;
        }

        grads.b_gates.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        for k in trace.inputs[t].iter().flatten() {
            let row = &mut grads.w_in[k * g4..(k + 1) * g4];
            row.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }
        if t > 0 {
            let h_prev = &trace.hiddens[(t - 1) * h..t * h];
            for k in 0..h {
                let grow = &mut grads.w_rec[k * g4..(k + 1) * g4];
                let hk = h_prev[k];
                let row = &params.w_rec[k * g4..(k + 1) * g4];
                let mut acc = 0.0;
                for (q, &d) in dz.iter().enumerate() {
                    grow[q] += hk * d;
                    acc += row[q] * d;
                }
                dh_next[k] = acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(pairs: &[(usize, bool)]) -> StudentSequence {
        StudentSequence::from_pairs("s", pairs.iter().copied()).unwrap()
    }

    #[test]
    fn zero_params_give_one_half() {
        let p = DktParams::zeros(3, 4);
        let y = forward(&p, &seq(&[(0, true), (2, false), (1, true)]), Dropout::Off).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.5));
        assert_eq!(y.n_steps(), 3);
    }

    #[test]
    fn deterministic_without_dropout() {
        let p = DktParams::init(3, 5, 0.3, 9).unwrap();
        let s = seq(&[(0, true), (1, false), (1, true), (2, true)]);
        assert_eq!(
            forward(&p, &s, Dropout::Off).unwrap(),
            forward(&p, &s, Dropout::Off).unwrap()
        );
    }

    #[test]
    fn shape_error_for_unknown_skill() {
        let p = DktParams::zeros(2, 3);
        assert!(matches!(
            forward(&p, &seq(&[(2, true)]), Dropout::Off),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn one_unit_lstm_matches_hand_unrolled_recurrence() {
        // M = 1, H = 1. Input bits: [skill0, skill0-correct].
        let p = DktParams::from_arrays(
            1,
            1,
            [
                // w_in rows: bit 0 then bit 1, each [i, f, g, o]
                vec![0.5, -0.3, 0.8, 0.1, 0.2, 0.4, -0.6, 0.7],
                vec![0.3, 0.2, -0.5, 0.9],
                vec![0.1, 1.0, 0.0, -0.2],
                vec![1.5],
                vec![-0.25],
            ],
        )
        .unwrap();
        let s = seq(&[(0, true), (0, false)]);
        let y = forward(&p, &s, Dropout::Off).unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        // step 1: both bits set, h0 = c0 = 0
        let z1 = [0.5 + 0.2 + 0.1, -0.3 + 0.4 + 1.0, 0.8 - 0.6, 0.1 + 0.7 - 0.2];
        let c1 = sig(z1[0]) * z1[2].tanh();
        let h1 = sig(z1[3]) * c1.tanh();
        let y1 = sig(1.5 * h1 - 0.25);
        // step 2: only bit 0
        let z2 = [
            0.5 + 0.1 + 0.3 * h1,
            -0.3 + 1.0 + 0.2 * h1,
            0.8 - 0.5 * h1,
            0.1 - 0.2 + 0.9 * h1,
        ];
        let c2 = sig(z2[1]) * c1 + sig(z2[0]) * z2[2].tanh();
        let h2 = sig(z2[3]) * c2.tanh();
        let y2 = sig(1.5 * h2 - 0.25);

        assert!((y.get(0, 0) - y1).abs() < 1e-15);
        assert!((y.get(1, 0) - y2).abs() < 1e-15);
    }

    #[test]
    fn dropout_changes_outputs_but_is_seeded() {
        let p = DktParams::init(3, 8, 0.5, 1).unwrap();
        let s = seq(&[(0, true), (1, false), (2, true)]);
        let a = forward(&p, &s, Dropout::On { rate: 0.5, seed: 4 }).unwrap();
        let b = forward(&p, &s, Dropout::On { rate: 0.5, seed: 4 }).unwrap();
        let off = forward(&p, &s, Dropout::Off).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, off);
    }
}
