//! Small feed-forward networks whose outputs are per-event distributions.

mod idx;
mod manifest;
mod optim;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::semantics::OutputMatrix;

pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels, Dataset};
pub use manifest::{Binding, DataMap, Manifest, NetworkKind};
pub use optim::{Adam, Optimizer, Sgd};
pub use params::{load_params, save_params, ParamStore, Tensor};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called without a forward pass")]
    NoTape,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: at byte {offset}: {msg}")]
    Format { path: String, offset: u64, msg: String },
    #[error("parameters do not match the network: {0}")]
    Mismatch(String),
    #[error("invalid network: {0}")]
    Spec(String),
    #[error("manifest {path}: {msg}")]
    Manifest { path: String, msg: String },
    #[error("no data bound to term {0}")]
    UnknownTerm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative from the pre-activation `x` and output `y`.
    fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(x > 0.0)),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// How the last layer becomes probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// `events * outcomes` logits, softmax per event.
    #[default]
    Softmax,
    /// One logit `z` per event of two outcomes: `[sigmoid(z), 1 - sigmoid(z)]`.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct NetSpec {
    pub name: String,
    pub input: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub events: usize,
    pub outcomes: usize,
    #[serde(default)]
    pub output: OutputKind,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn yes() -> bool {
    true
}

impl NetSpec {
    pub fn new(name: &str, input: usize, hidden: &[usize], events: usize, outcomes: usize) -> NetSpec {
        NetSpec {
            name: name.to_string(),
            input,
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            events,
            outcomes,
            output: OutputKind::Softmax,
            bias: true,
        }
    }

    fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Spec(format!("{}: {m}", self.name)));
        if self.input == 0 || self.events == 0 {
            return bad("input size and event count must be positive");
        }
        if self.outcomes < 2 {
            return bad("at least two outcomes are needed");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be nonempty");
        }
        if self.output == OutputKind::Logistic && self.outcomes != 2 {
            return bad("a logistic output has exactly two outcomes");
        }
        Ok(())
    }

    fn logits(&self) -> usize {
        match self.output {
            OutputKind::Softmax => self.events * self.outcomes,
            OutputKind::Logistic => self.events,
        }
    }

    /// Sizes of all layers, input first.
    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input];
        s.extend(&self.hidden);
        s.push(self.logits());
        s
    }

    /// Names and shapes of the parameter tensors.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let sizes = self.sizes();
        let mut out = Vec::new();
        for (l, w) in sizes.windows(2).enumerate() {
            out.push((format!("layer{l}.weight"), vec![w[1], w[0]]));
            if self.bias {
                out.push((format!("layer{l}.bias"), vec![w[1]]));
            }
        }
        out
    }
}

/// Values kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input of every layer; the first is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
}

/// A multilayer perceptron with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: NetSpec,
    pub params: ParamStore,
}

impl Mlp {
    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Mlp, NetError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        for (name, shape) in spec.tensor_shapes() {
            let mut t = Tensor::zeros(&shape);
            if shape.len() == 2 {
                let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                t.data.iter_mut().for_each(|x| *x = rng.gen_range(-s..=s));
            }
            params.insert(&name, t);
        }
        Ok(Mlp { spec, params })
    }

    /// All parameters zero: every row is uniform.
    pub fn zeros(spec: NetSpec) -> Result<Mlp, NetError> {
        spec.validate()?;
        let mut params = ParamStore::default();
        for (name, shape) in spec.tensor_shapes() {
            params.insert(&name, Tensor::zeros(&shape));
        }
        Ok(Mlp { spec, params })
    }

    /// Builds a network around existing parameters, checking their shapes.
    pub fn with_params(spec: NetSpec, params: ParamStore) -> Result<Mlp, NetError> {
        spec.validate()?;
        params.check_shapes(&spec.tensor_shapes())?;
        Ok(Mlp { spec, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|(_, t)| t.data.len()).sum()
    }

    fn layer(&self, l: usize) -> (&Tensor, Option<&Tensor>) {
        let w = self.params.get(&format!("layer{l}.weight")).expect("weight tensor");
        let b = self.params.get(&format!("layer{l}.bias"));
        (w, b)
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let (rows, cols) = (w.shape[0], w.shape[1]);
        (0..rows)
            .map(|i| {
                let row = &w.data[i * cols..(i + 1) * cols];
                let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                dot + b.map_or(0.0, |b| b.data[i])
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(OutputMatrix, Tape), NetError> {
        if x.len() != self.spec.input {
            return Err(NetError::Shape { expected: self.spec.input, got: x.len() });
        }
        let layers = self.spec.hidden.len() + 1;
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::new();
        for l in 0..layers - 1 {
            let z = self.affine(l, &inputs[l]);
            let a = z.iter().map(|&v| self.spec.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(a);
        }
        let z = self.affine(layers - 1, &inputs[layers - 1]);
        let (e, n) = (self.spec.events, self.spec.outcomes);
        let probs: Vec<Vec<f64>> = match self.spec.output {
            OutputKind::Softmax => z.chunks(n).map(softmax).collect(),
            OutputKind::Logistic => z
                .iter()
                .map(|&v| {
                    let s = sigmoid(v);
                    vec![s, 1.0 - s]
                })
                .collect(),
        };
        debug_assert_eq!(probs.len(), e);
        if probs.iter().flatten().any(|p| !p.is_finite()) {
            return Err(NetError::NonFinite(format!("output of {}", self.spec.name)));
        }
        let out = OutputMatrix { network: self.spec.name.clone(), rows: probs.clone() };
        Ok((out, Tape { inputs, pre, probs }))
    }

    /// Gradient of `sum_ij upstream[i][j] * P[i][j]` with respect to every
    /// parameter, where `P` is the output of the taped forward pass.
    pub fn backward(&self, tape: &Tape, upstream: &[Vec<f64>]) -> Result<ParamStore, NetError> {
        let (e, n) = (self.spec.events, self.spec.outcomes);
        if upstream.len() != e || upstream.iter().any(|r| r.len() != n) {
            return Err(NetError::Shape { expected: e * n, got: upstream.iter().map(Vec::len).sum() });
        }
        let mut delta: Vec<f64> = match self.spec.output {
            OutputKind::Softmax => tape
                .probs
                .iter()
                .zip(upstream)
                .flat_map(|(p, g)| {
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    p.iter().zip(g).map(move |(pj, gj)| pj * (gj - dot))
                })
                .collect(),
            OutputKind::Logistic => tape
                .probs
                .iter()
                .zip(upstream)
                .map(|(p, g)| (g[0] - g[1]) * p[0] * p[1])
                .collect(),
        };
        let mut grads = ParamStore::default();
        let layers = self.spec.hidden.len() + 1;
        for l in (0..layers).rev() {
            let (w, b) = self.layer(l);
            let (rows, cols) = (w.shape[0], w.shape[1]);
            let x = &tape.inputs[l];
            let mut gw = Tensor::zeros(&w.shape);
            for i in 0..rows {
                for j in 0..cols {
                    gw.data[i * cols + j] = delta[i] * x[j];
                }
            }
            grads.insert(&format!("layer{l}.weight"), gw);
            if b.is_some() {
                grads.insert(&format!("layer{l}.bias"), Tensor { shape: vec![rows], data: delta.clone() });
            }
            if l > 0 {
                let mut back = vec![0.0; cols];
                for i in 0..rows {
                    for (j, bj) in back.iter_mut().enumerate() {
                        *bj += w.data[i * cols + j] * delta[i];
                    }
                }
                let z = &tape.pre[l - 1];
                let a = &tape.inputs[l];
                delta = back.iter().zip(z).zip(a).map(|((d, &zi), &ai)| d * self.spec.activation.grad(zi, ai)).collect();
            }
        }
        grads.sort_like(&self.params);
        if grads.iter().any(|(_, t)| t.data.iter().any(|v| !v.is_finite())) {
            return Err(NetError::NonFinite(format!("gradient of {}", self.spec.name)));
        }
        Ok(grads)
    }
}

/// A network that keeps the tape of its last forward pass.
#[derive(Debug, Clone)]
pub struct Network {
    pub mlp: Mlp,
    tape: Option<Tape>,
}

impl Network {
    pub fn new(mlp: Mlp) -> Network {
        Network { mlp, tape: None }
    }

    pub fn forward(&mut self, x: &[f64]) -> Result<OutputMatrix, NetError> {
        let (out, tape) = self.mlp.forward(x)?;
        self.tape = Some(tape);
        Ok(out)
    }

    /// Consumes the tape of the last forward pass.
    pub fn backward(&mut self, upstream: &[Vec<f64>]) -> Result<ParamStore, NetError> {
        let tape = self.tape.take().ok_or(NetError::NoTape)?;
        self.mlp.backward(&tape, upstream)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests;
