//! Dense 2-D tensors with tape-based reverse-mode differentiation.

mod tape;
mod tensor;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: String, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("index {index} out of range {len} in {op}")]
    Index { op: String, index: usize, len: usize },
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss((usize, usize)),
}

pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Option<Tensor>,
}

/// Named trainable tensors and their accumulated gradients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Parameter { name: name.into(), value, grad: None });
        self.params.len() - 1
    }

    /// Glorot-uniform `rows × cols` weight.
    pub fn add_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id].grad.as_ref()
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        let p = &mut self.params[id];
        p.grad.get_or_insert_with(|| Tensor::zeros(p.value.rows, p.value.cols))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient descent with optional momentum, or Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    opt: Optimizer,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(opt: Optimizer, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        OptimizerState { opt, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        for (i, p) in store.params.iter_mut().enumerate() {
            let Some(g) = p.grad.take() else { continue };
            match self.opt {
                Optimizer::Sgd { lr, momentum } => {
                    for ((w, gv), m) in p.value.data.iter_mut().zip(&g.data).zip(self.m[i].iter_mut()) {
                        *m = momentum * *m + gv;
                        *w -= lr * *m;
                    }
                }
                Optimizer::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (k, (w, gv)) in p.value.data.iter_mut().zip(&g.data).enumerate() {
                        let m = &mut self.m[i][k];
                        let v = &mut self.v[i][k];
                        *m = beta1 * *m + (1.0 - beta1) * gv;
                        *v = beta2 * *v + (1.0 - beta2) * gv * gv;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}
