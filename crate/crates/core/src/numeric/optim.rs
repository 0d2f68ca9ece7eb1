//! Adagrad with a decaying squared-gradient accumulator:
//! `G ← decay·G + g²`, `θ ← θ − lr·g / sqrt(G + ε)`.

use super::matrix::DenseMatrix;
use super::params::{Gradients, ModelParams, ParamKind};
use crate::error::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.9999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    pub accum: Vec<f64>,
    pub decay: f64,
    pub epsilon: f64,
}

impl AdagradState {
    pub fn new(len: usize, decay: f64, epsilon: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!(
                "adagrad decay must lie in (0, 1], got {decay}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!(
                "adagrad epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            accum: vec![0.0; len],
            decay,
            epsilon,
        })
    }
}

#[inline]
fn step(param: &mut f64, grad: f64, accum: &mut f64, decay: f64, epsilon: f64, lr: f64) {
    *accum = decay * *accum + grad * grad;
    *param -= lr * grad / (*accum + epsilon).sqrt();
}

/// Dense update of every entry.
pub fn adagrad_update(
    param: &mut [f64],
    grad: &[f64],
    state: &mut AdagradState,
    lr: f64,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.accum.len() {
        return Err(Error::shape(
            "adagrad_update",
            param.len(),
            format!("grad {} / state {}", grad.len(), state.accum.len()),
        ));
    }
    let (decay, eps) = (state.decay, state.epsilon);
    for ((p, &g), a) in param.iter_mut().zip(grad).zip(state.accum.iter_mut()) {
        step(p, g, a, decay, eps, lr);
    }
    Ok(())
}

/// Row-sparse update: only the listed rows with a nonzero gradient move, and
/// only their accumulator rows decay.
pub fn adagrad_update_rows(
    param: &mut [f64],
    grad: &[f64],
    cols: usize,
    rows: &[u32],
    state: &mut AdagradState,
    lr: f64,
) -> Result<()> {
    if param.len() != grad.len()
        || param.len() != state.accum.len()
        || cols == 0
        || !param.len().is_multiple_of(cols)
    {
        return Err(Error::shape("adagrad_update_rows", param.len(), grad.len()));
    }
    let (decay, eps) = (state.decay, state.epsilon);
    for &r in rows {
        let span = r as usize * cols..(r as usize + 1) * cols;
        let g = &grad[span.clone()];
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        for ((p, &gi), a) in param[span.clone()]
            .iter_mut()
            .zip(g)
            .zip(&mut state.accum[span.clone()])
        {
            step(p, gi, a, decay, eps, lr);
        }
    }
    Ok(())
}

/// Standalone embedding table with its own optimizer state.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    weights: DenseMatrix,
    state: AdagradState,
}

impl EmbeddingTable {
    pub fn new(weights: DenseMatrix, decay: f64, epsilon: f64) -> Result<Self> {
        let state = AdagradState::new(weights.data().len(), decay, epsilon)?;
        Ok(Self { weights, state })
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn state(&self) -> &AdagradState {
        &self.state
    }

    pub fn lookup(&self, id: usize) -> Result<&[f64]> {
        if id >= self.vocab_size() {
            return Err(Error::OutOfVocab {
                table: "embedding".into(),
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(self.weights.row(id))
    }

    /// Applies per-row gradients. Row 0 (padding) is never updated.
    pub fn sparse_step(&mut self, grads: &[(usize, Vec<f64>)], lr: f64) -> Result<()> {
        let dim = self.dim();
        for (id, g) in grads {
            if *id >= self.vocab_size() {
                return Err(Error::OutOfVocab {
                    table: "embedding".into(),
                    id: *id,
                    vocab: self.vocab_size(),
                });
            }
            if g.len() != dim {
                return Err(Error::shape("EmbeddingTable::sparse_step", dim, g.len()));
            }
            if *id == 0 || g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let span = id * dim..(id + 1) * dim;
            let (decay, eps) = (self.state.decay, self.state.epsilon);
            for ((p, &gi), a) in self.weights.data_mut()[span.clone()]
                .iter_mut()
                .zip(g)
                .zip(&mut self.state.accum[span.clone()])
            {
                step(p, gi, a, decay, eps, lr);
            }
        }
        Ok(())
    }
}

/// Optimizer over a whole [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Adagrad {
    lr: f64,
    states: Vec<AdagradState>,
}

impl Adagrad {
    pub fn new(params: &ModelParams, lr: f64, decay: f64, epsilon: f64) -> Result<Self> {
        let states = params
            .arrays()
            .iter()
            .map(|a| AdagradState::new(a.value.data().len(), decay, epsilon))
            .collect::<Result<_>>()?;
        Ok(Self { lr, states })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads.get(id);
            let kind = params.array(id).kind;
            let value = params.get_mut(id);
            match kind {
                ParamKind::Dense => {
                    adagrad_update(value.data_mut(), &g.data, &mut self.states[i], self.lr)?
                }
                ParamKind::Embedding => {
                    let rows: Vec<u32> = g
                        .touched_rows()
                        .unwrap_or(&[])
                        .iter()
                        .copied()
                        .filter(|&r| r != 0)
                        .collect();
                    let cols = value.cols();
                    adagrad_update_rows(
                        value.data_mut(),
                        &g.data,
                        cols,
                        &rows,
                        &mut self.states[i],
                        self.lr,
                    )?;
                }
            }
        }
        Ok(())
    }
}
