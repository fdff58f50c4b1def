//! Gradients of observation log-likelihoods and the training loops.
//!
//! For a neural atom `c=v` with probability `p` and a set of stable models
//! `I` satisfying an observation, the semantic gradient is
//!
//! ```text
//! ( sum_{I |= c=v} P(I)/p  -  sum_{I |= c=v'} P(I)/P(c=v') ) / sum_I P(I)
//! ```
//!
//! It reaches the network parameters through the output layer by the chain
//! rule; [`GradConvention`] selects how.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ground::{AtomId, EntrySource, GroundObservation, GroundProgram, NeuralEntry};
use crate::net::{Adam, Binding, DataMap, Mlp, NetError, Optimizer, ParamStore, Sgd, Tape};
use crate::par;
use crate::semantics::{
    choice_observation, intended_models, weak_optimal, ChoiceCounter, OutputMatrix, ProbabilityAssignment,
    SemanticsError,
};
use crate::solve::{enumerate_stable_models, OptMode, SolveError, SolveOptions, Solver, StableModel, TotalChoice};


/// Draws allowed before sampling gives up.
pub const SAMPLE_DRAW_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no stable model satisfies the observation")]
    NoModels,
    #[error("no observation could be used in epoch {epoch}")]
    NoUsableObservation { epoch: usize },
    #[error("sampling drew {draws} total choices without collecting enough models")]
    SampleCap { draws: usize },
    #[error("no network named {0}")]
    UnknownNetwork(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// How the semantic gradient is composed with the network's output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradConvention {
    /// The semantic gradient itself is the upstream gradient of the output
    /// matrix.
    #[default]
    Paper,
    /// The partial derivatives of `log P(O)` in the unconstrained outcome
    /// probabilities are the upstream gradient, so the output layer's
    /// Jacobian makes the result the exact parameter gradient.
    SoftmaxJacobian,
}

/// `d log P(O) / dp` for every neural atom, in the form used by each
/// convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGradient {
    /// The semantic gradient by atom id; NaN for atoms that are not neural.
    values: Vec<f64>,
    /// Only the positive part of each entry.
    partial: Vec<f64>,
}

impl SemanticGradient {
    pub fn get(&self, a: AtomId) -> Option<f64> {
        self.values.get(a.index()).copied().filter(|v| !v.is_nan())
    }

    /// `d log P(O) / dp` treating the outcome probabilities as independent.
    pub fn partial(&self, a: AtomId) -> Option<f64> {
        self.partial.get(a.index()).copied().filter(|v| !v.is_nan())
    }

    /// The upstream gradient of an entry's output matrix.
    pub fn upstream(&self, entry: &NeuralEntry, convention: GradConvention) -> Vec<Vec<f64>> {
        let src = match convention {
            GradConvention::Paper => &self.values,
            GradConvention::SoftmaxJacobian => &self.partial,
        };
        entry.atoms.iter().map(|row| row.iter().map(|a| src[a.index()]).collect()).collect()
    }
}

/// The semantic gradient of the set of `models`, which should be distinct
/// stable models satisfying one observation. `counts` holds the number of
/// models of every total choice the models make. Probabilities are floored
/// at [`crate::semantics::EPSILON`].
pub fn semantic_gradient(
    gp: &GroundProgram,
    models: &[StableModel],
    assign: &ProbabilityAssignment,
    counts: &BTreeMap<TotalChoice, usize>,
) -> Result<SemanticGradient, LearnError> {
    let rows: Vec<&Vec<AtomId>> = gp.neural.iter().flat_map(|e| e.atoms.iter()).collect();
    let p = |a: AtomId| assign.clamped(a).ok_or(SemanticsError::UnknownAtom(a.0));
    let mut values = vec![f64::NAN; gp.num_atoms()];
    let mut partial = vec![f64::NAN; gp.num_atoms()];
    for row in &rows {
        for a in row.iter() {
            values[a.index()] = 0.0;
            partial[a.index()] = 0.0;
        }
    }
    let choices: Vec<TotalChoice> = models
        .iter()
        .map(|m| TotalChoice::of(gp, m).ok_or_else(|| SemanticsError::MissingChoice(Vec::new())))
        .collect::<Result<_, _>>()?;
    match models.len() {
        0 => return Err(LearnError::NoModels),
        1 => {
            for (row, &j) in rows.iter().zip(&choices[0].0) {
                let chosen = row[j as usize];
                let pc = p(chosen)?;
                for &a in row.iter() {
                    if a == chosen {
                        values[a.index()] = 1.0 / pc;
                        partial[a.index()] = 1.0 / pc;
                    } else {
                        values[a.index()] = -1.0 / pc;
                    }
                }
            }
        }
        _ => {
            // model weights relative to the heaviest one, so that long
            // products cannot underflow
            let mut logs = Vec::with_capacity(models.len());
            for c in &choices {
                let n = *counts.get(c).filter(|&&n| n > 0).ok_or_else(|| SemanticsError::MissingChoice(c.0.clone()))?;
                let mut l = -(n as f64).ln();
                for (row, &j) in rows.iter().zip(&c.0) {
                    l += p(row[j as usize])?.ln();
                }
                logs.push(l);
            }
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            for (c, wi) in choices.iter().zip(&w) {
                let wi = wi / total;
                for (row, &j) in rows.iter().zip(&c.0) {
                    let chosen = row[j as usize];
                    let pc = p(chosen)?;
                    for &a in row.iter() {
                        if a == chosen {
                            values[a.index()] += wi / pc;
                            partial[a.index()] += wi / pc;
                        } else {
                            values[a.index()] -= wi / pc;
                        }
                    }
                }
            }
        }
    }
    Ok(SemanticGradient { values, partial })
}

/// Gradient of `sum_atoms g(atom) * p_atom` with respect to the parameters,
/// from the tape of the forward pass that produced the probabilities.
pub fn chain_gradient(
    sg: &SemanticGradient,
    entry: &NeuralEntry,
    mlp: &Mlp,
    tape: &Tape,
    convention: GradConvention,
) -> Result<ParamStore, LearnError> {
    Ok(mlp.backward(tape, &sg.upstream(entry, convention))?)
}

/// Networks by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSet {
    pub nets: BTreeMap<String, Mlp>,
}

impl NetworkSet {
    pub fn insert(&mut self, mlp: Mlp) {
        self.nets.insert(mlp.spec.name.clone(), mlp);
    }

    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.nets.get(name)
    }
}

/// Data mappings by network name.
pub type Inputs = BTreeMap<String, DataMap>;

/// The key of an entry's data terms in a [`DataMap`]: the terms joined by
/// commas.
pub fn term_key(entry: &NeuralEntry) -> String {
    entry.data().iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// The output of every network entry on its bound data, with the tapes for
/// the backward pass (`None` for fixed rows and `probs:` bindings).
pub fn forward(
    gp: &GroundProgram,
    nets: &NetworkSet,
    inputs: &Inputs,
) -> Result<(ProbabilityAssignment, Vec<Option<Tape>>), LearnError> {
    let mut tapes: Vec<Option<Tape>> = vec![None; gp.neural.len()];
    let mut failure: Option<LearnError> = None;
    let assign = ProbabilityAssignment::new(gp, |k, e| {
        let name = e.network().expect("network entry");
        let key = term_key(e);
        let out = (|| {
            let binding = inputs.get(name).ok_or_else(|| NetError::UnknownTerm(format!("{name}: {key}")))?.get(&key)?;
            match binding {
                Binding::Probs(rows) => Ok(OutputMatrix { network: name.to_string(), rows: rows.clone() }),
                Binding::Input(x) => {
                    let mlp = nets.get(name).ok_or_else(|| LearnError::UnknownNetwork(name.to_string()))?;
                    let (m, tape) = mlp.forward(x)?;
                    tapes[k] = Some(tape);
                    Ok(m)
                }
            }
        })();
        out.map_err(|e: LearnError| {
            let msg = e.to_string();
            failure = Some(e);
            SemanticsError::BadMatrix { entry: name.to_string(), detail: msg }
        })
    });
    match (assign, failure) {
        (Ok(a), _) => Ok((a, tapes)),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

/// Draws total choices from the row distributions and collects the stable
/// models of each drawn choice that satisfy `obs`, until at least `n`
/// models were collected. The result may contain repeats.
pub fn sample_stable_models(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    assign: &ProbabilityAssignment,
    n: usize,
    rng: &mut impl Rng,
    opts: &SolveOptions,
) -> Result<Vec<StableModel>, LearnError> {
    let rows: Vec<&Vec<AtomId>> = gp.neural.iter().flat_map(|e| e.atoms.iter()).collect();
    let weak = weak_optimal(gp, opts);
    let mut solver = Solver::new(gp);
    if let Some(o) = obs {
        if !solver.add_observation(o) {
            return Err(LearnError::SampleCap { draws: 0 });
        }
    }
    let mut out = Vec::new();
    let mut draws = 0;
    while out.len() < n {
        if draws == SAMPLE_DRAW_CAP {
            return Err(LearnError::SampleCap { draws });
        }
        draws += 1;
        let chosen: Vec<AtomId> = rows.iter().map(|row| draw(row, assign, rng)).collect();
        if weak {
            let optimal = enumerate_stable_models(gp, Some(&choice_observation(&chosen)), opts)?;
            out.extend(optimal.into_iter().filter(|m| obs.is_none_or(|o| o.satisfied_by(&|a| m.contains(a)))));
        } else {
            let assumptions: Vec<(AtomId, bool)> = chosen.iter().map(|&a| (a, true)).collect();
            out.extend(solver.models(&assumptions, None, opts.conflict_budget)?);
        }
    }
    Ok(out)
}

fn draw(row: &[AtomId], assign: &ProbabilityAssignment, rng: &mut impl Rng) -> AtomId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &a in row {
        acc += assign.get(a).unwrap_or(0.0);
        if u < acc {
            return a;
        }
    }
    // rounding left a sliver above the last cumulative sum
    *row.iter().rev().find(|&&a| assign.get(a).unwrap_or(0.0) > 0.0).unwrap_or(&row[row.len() - 1])
}

/// One training example: an observation with its data mapping.
#[derive(Debug, Clone)]
pub struct Example {
    pub obs: GroundObservation,
    pub inputs: Inputs,
    /// Replaces the shared program for this example, for instance-specific
    /// facts. The observation must be grounded against it.
    pub program: Option<Arc<GroundProgram>>,
}

impl Example {
    pub fn new(obs: GroundObservation, inputs: Inputs) -> Example {
        Example { obs, inputs, program: None }
    }

    pub fn with_program(obs: GroundObservation, inputs: Inputs, program: Arc<GroundProgram>) -> Example {
        Example { obs, inputs, program: Some(program) }
    }

    fn program<'a>(&'a self, shared: &'a GroundProgram) -> &'a GroundProgram {
        self.program.as_deref().unwrap_or(shared)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LearnMode {
    #[default]
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    /// `theta + lr * g`.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub mode: LearnMode,
    /// Models per observation in sampled mode.
    pub samples: usize,
    pub seed: u64,
    pub opt_mode: OptMode,
    pub conflict_budget: Option<u64>,
    pub convention: GradConvention,
    pub optimizer: OptimizerKind,
    /// `None` updates after every observation; `Some(k)` sums the gradients
    /// of `k` observations, computed in parallel, before each update.
    pub batch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            epochs: 1,
            mode: LearnMode::Exact,
            samples: 50,
            seed: 0,
            opt_mode: OptMode::Optimal,
            conflict_budget: None,
            convention: GradConvention::Paper,
            optimizer: OptimizerKind::Sgd,
            batch: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), LearnError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(LearnError::Config(format!("learning rate {} is not positive", self.lr)));
        }
        if self.mode == LearnMode::Sampled && self.samples == 0 {
            return Err(LearnError::Config("sampled learning needs at least one sample".into()));
        }
        if self.batch == Some(0) {
            return Err(LearnError::Config("batch size 0".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { max_models: None, conflict_budget: self.conflict_budget, opt_mode: self.opt_mode }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Epochs are numbered from 1.
    pub epoch: usize,
    /// Mean of `ln P(O)` before each update, over the used observations. In
    /// sampled mode `P(O)` is the mass of the distinct sampled models.
    pub mean_log_likelihood: f64,
    pub used: usize,
    pub skipped: usize,
}

/// What one observation contributes.
struct Contribution {
    log_likelihood: f64,
    grads: BTreeMap<String, ParamStore>,
}

/// The RNG stream of observation `index` in `epoch`.
fn stream(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index as u64);
    rng
}

fn contribution(
    gp: &GroundProgram,
    nets: &NetworkSet,
    ex: &Example,
    cfg: &TrainConfig,
    counter: &mut ChoiceCounter,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Contribution>, LearnError> {
    match &ex.program {
        Some(own) => contribution_on(own, nets, ex, cfg, &mut ChoiceCounter::new(own, &cfg.solve_options()), rng),
        None => contribution_on(gp, nets, ex, cfg, counter, rng),
    }
}

fn contribution_on(
    gp: &GroundProgram,
    nets: &NetworkSet,
    ex: &Example,
    cfg: &TrainConfig,
    counter: &mut ChoiceCounter,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Contribution>, LearnError> {
    let opts = cfg.solve_options();
    let (assign, tapes) = forward(gp, nets, &ex.inputs)?;
    let models = match cfg.mode {
        LearnMode::Exact => intended_models(gp, Some(&ex.obs), &opts)?,
        LearnMode::Sampled => match sample_stable_models(gp, Some(&ex.obs), &assign, cfg.samples, rng, &opts) {
            Ok(list) => list.into_iter().collect::<BTreeSet<_>>().into_iter().collect(),
            Err(LearnError::SampleCap { .. }) => Vec::new(),
            Err(e) => return Err(e),
        },
    };
    if models.is_empty() {
        return Ok(None);
    }
    let counts = counter.counts(&models)?;
    let mut p = 0.0;
    for m in &models {
        p += crate::semantics::model_probability(gp, m, &assign, &counts)?;
    }
    let sg = semantic_gradient(gp, &models, &assign, &counts)?;
    let mut grads: BTreeMap<String, ParamStore> = BTreeMap::new();
    for (entry, tape) in gp.neural.iter().zip(&tapes) {
        let (Some(tape), EntrySource::Network { name, .. }) = (tape, &entry.source) else { continue };
        let mlp = &nets.nets[name.as_ref()];
        let g = chain_gradient(&sg, entry, mlp, tape, cfg.convention)?;
        grads.entry(name.to_string()).or_insert_with(|| g.zeros_like()).add_scaled(&g, 1.0);
    }
    Ok(Some(Contribution { log_likelihood: p.max(f64::MIN_POSITIVE).ln(), grads }))
}

/// Trains the networks on the examples. `on_epoch` sees the statistics and
/// the networks after every epoch.
pub fn train(
    gp: &GroundProgram,
    examples: &[Example],
    nets: &mut NetworkSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &NetworkSet),
) -> Result<Vec<EpochStats>, LearnError> {
    cfg.validate()?;
    let mut optimizers: BTreeMap<String, Box<dyn Optimizer>> = nets
        .nets
        .keys()
        .map(|k| {
            let o: Box<dyn Optimizer> = match cfg.optimizer {
                OptimizerKind::Sgd => Box::new(Sgd { lr: cfg.lr }),
                OptimizerKind::Adam => Box::new(Adam::new(cfg.lr)),
            };
            (k.clone(), o)
        })
        .collect();
    let opts = cfg.solve_options();
    let mut counter = ChoiceCounter::new(gp, &opts);
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        let mut ll = 0.0;
        let (mut used, mut skipped) = (0, 0);
        let batch = cfg.batch.unwrap_or(1);
        for (start, chunk) in examples.chunks(batch).enumerate().map(|(b, c)| (b * batch, c)) {
            let results: Vec<Result<Option<Contribution>, LearnError>> = if cfg.batch.is_none() {
                let mut rng = stream(cfg.seed, epoch, start);
                vec![contribution(gp, nets, &chunk[0], cfg, &mut counter, &mut rng)]
            } else {
                let frozen: &NetworkSet = nets;
                let items: Vec<(usize, &Example)> = chunk.iter().enumerate().map(|(i, e)| (start + i, e)).collect();
                par::map_init(
                    items,
                    || ChoiceCounter::new(gp, &opts),
                    |counter, (i, ex)| contribution(gp, frozen, ex, cfg, counter, &mut stream(cfg.seed, epoch, i)),
                )
            };
            let mut total: BTreeMap<String, ParamStore> = BTreeMap::new();
            for (i, r) in results.into_iter().enumerate() {
                match r? {
                    Some(c) => {
                        used += 1;
                        ll += c.log_likelihood;
                        for (name, g) in c.grads {
                            match total.get_mut(&name) {
                                Some(t) => t.add_scaled(&g, 1.0),
                                None => {
                                    total.insert(name, g);
                                }
                            }
                        }
                    }
                    None => {
                        skipped += 1;
                        warn!("epoch {epoch}: observation {} has no satisfying stable model; skipped", start + i);
                    }
                }
            }
            for (name, g) in &total {
                let mlp = nets.nets.get_mut(name).expect("gradient of a known network");
                optimizers.get_mut(name).expect("optimizer per network").step(&mut mlp.params, g);
            }
        }
        if used == 0 && !examples.is_empty() {
            return Err(LearnError::NoUsableObservation { epoch });
        }
        let stats =
            EpochStats { epoch, mean_log_likelihood: if used > 0 { ll / used as f64 } else { 0.0 }, used, skipped };
        on_epoch(&stats, nets);
        history.push(stats);
    }
    Ok(history)
}

/// Training by exact enumeration of the models of every observation.
pub fn learn_exact(
    gp: &GroundProgram,
    examples: &[Example],
    nets: &mut NetworkSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, LearnError> {
    train(gp, examples, nets, &TrainConfig { mode: LearnMode::Exact, ..cfg.clone() }, |_, _| {})
}

/// Training on sampled stable models.
pub fn learn_sampled(
    gp: &GroundProgram,
    examples: &[Example],
    nets: &mut NetworkSet,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>, LearnError> {
    train(gp, examples, nets, &TrainConfig { mode: LearnMode::Sampled, ..cfg.clone() }, |_, _| {})
}

/// `ln P(O)` under the current networks, by exact enumeration.
pub fn log_likelihood(
    gp: &GroundProgram,
    nets: &NetworkSet,
    ex: &Example,
    opts: &SolveOptions,
) -> Result<f64, LearnError> {
    let gp = ex.program(gp);
    let (assign, _) = forward(gp, nets, &ex.inputs)?;
    let models = intended_models(gp, Some(&ex.obs), opts)?;
    let mut counter = ChoiceCounter::new(gp, opts);
    let counts = counter.counts(&models)?;
    let mut p = 0.0;
    for m in &models {
        p += crate::semantics::model_probability(gp, m, &assign, &counts)?;
    }
    Ok(p.ln())
}
