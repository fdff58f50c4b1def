//! Probabilities of atoms, stable models and observations.
//!
//! A total choice picks one outcome for every neural row. The probability of
//! a stable model is the product of the probabilities of its neural atoms,
//! divided by the number of stable models that make the same choice. When
//! weak constraints are present and the optimal mode is on, the models of a
//! choice are the cost-optimal ones among those agreeing with it.

mod mvpp;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ground::{AtomId, EntrySource, GroundHead, GroundLiteral, GroundObservation, GroundProgram};
use crate::par;
use crate::solve::{
    count_models_per_choice, enumerate_stable_models, minimise_rows, OptMode, SolveError, SolveOptions, Solver,
    StableModel, TotalChoice,
};

pub use mvpp::{to_mvpp, MvppProgram};

/// Lower bound applied to atom probabilities where they act as divisors or
/// enter gradients.
pub const EPSILON: f64 = 1e-6;

/// Exhaustive coherence checks refuse more total choices than this.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Scale of the integer weights used by optimisation-based MAP inference.
const MAP_SCALE: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("atom {0} is not a neural atom")]
    UnknownAtom(u32),
    #[error("{entry}: {detail}")]
    BadMatrix { entry: String, detail: String },
    #[error("no stable model agrees with the choice {0:?}")]
    MissingChoice(Vec<u32>),
    #[error("no stable model exists")]
    NoModels,
    #[error("{count} total choices exceed the limit of {limit}")]
    TooManyChoices { count: u128, limit: u128 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Output of one network on one input: `rows[i][j]` is the probability that
/// event `i` takes outcome `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    pub network: String,
    pub rows: Vec<Vec<f64>>,
}

impl OutputMatrix {
    /// Checks that every row is a distribution, within 1e-9.
    pub fn validate(&self) -> Result<(), SemanticsError> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(SemanticsError::BadMatrix {
                    entry: self.network.clone(),
                    detail: format!("row {i} has entry {p} outside [0,1]"),
                });
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(SemanticsError::BadMatrix {
                    entry: self.network.clone(),
                    detail: format!("row {i} sums to {total}"),
                });
            }
        }
        Ok(())
    }
}

/// Probability of every neural atom of a ground program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityAssignment {
    /// By atom id; NaN for atoms that are not neural.
    probs: Vec<f64>,
}

impl ProbabilityAssignment {
    /// Fixed rows come from the program; `matrix` supplies the output of
    /// each network entry.
    pub fn new(
        gp: &GroundProgram,
        mut matrix: impl FnMut(usize, &crate::ground::NeuralEntry) -> Result<OutputMatrix, SemanticsError>,
    ) -> Result<ProbabilityAssignment, SemanticsError> {
        let mut probs = vec![f64::NAN; gp.num_atoms()];
        for (k, e) in gp.neural.iter().enumerate() {
            let m = match &e.source {
                EntrySource::Fixed { probs, .. } => OutputMatrix { network: String::new(), rows: vec![probs.clone()] },
                EntrySource::Network { name, .. } => {
                    let m = matrix(k, e)?;
                    if m.rows.len() != e.events() || m.rows.iter().any(|r| r.len() != e.outcomes()) {
                        return Err(SemanticsError::BadMatrix {
                            entry: name.to_string(),
                            detail: format!("expected {}x{} outputs", e.events(), e.outcomes()),
                        });
                    }
                    m.validate()?;
                    m
                }
            };
            for (row, ps) in e.atoms.iter().zip(&m.rows) {
                for (a, &p) in row.iter().zip(ps) {
                    probs[a.index()] = p;
                }
            }
        }
        Ok(ProbabilityAssignment { probs })
    }

    /// Every network outputs uniform rows.
    pub fn uniform(gp: &GroundProgram) -> ProbabilityAssignment {
        ProbabilityAssignment::new(gp, |_, e| {
            let n = e.outcomes();
            Ok(OutputMatrix { network: String::new(), rows: vec![vec![1.0 / n as f64; n]; e.events()] })
        })
        .expect("uniform rows are distributions")
    }

    /// The unclamped probability of a neural atom.
    pub fn get(&self, a: AtomId) -> Option<f64> {
        self.probs.get(a.index()).copied().filter(|p| !p.is_nan())
    }

    /// The probability floored at [`EPSILON`].
    pub fn clamped(&self, a: AtomId) -> Option<f64> {
        self.get(a).map(|p| p.max(EPSILON))
    }

    fn raw(&self, a: AtomId) -> f64 {
        self.probs[a.index()]
    }
}

/// Probability of a neural atom, floored at [`EPSILON`].
pub fn atom_probability(assign: &ProbabilityAssignment, atom: AtomId) -> Result<f64, SemanticsError> {
    assign.clamped(atom).ok_or(SemanticsError::UnknownAtom(atom.0))
}

/// Product that switches to log space for long factor lists.
pub fn product(ps: impl IntoIterator<Item = f64>) -> f64 {
    let ps: Vec<f64> = ps.into_iter().collect();
    if ps.len() <= 32 {
        ps.iter().product()
    } else {
        ps.iter().map(|p| p.ln()).sum::<f64>().exp()
    }
}

/// Probability of the total choice a model makes, before division by the
/// number of its models.
pub fn choice_weight(model: &StableModel, assign: &ProbabilityAssignment) -> f64 {
    product(model.projection().iter().map(|&a| assign.raw(a)))
}

pub fn model_probability(
    gp: &GroundProgram,
    model: &StableModel,
    assign: &ProbabilityAssignment,
    counts: &BTreeMap<TotalChoice, usize>,
) -> Result<f64, SemanticsError> {
    let choice = TotalChoice::of(gp, model).ok_or_else(|| SemanticsError::MissingChoice(Vec::new()))?;
    match counts.get(&choice) {
        Some(&n) if n > 0 => Ok(choice_weight(model, assign) / n as f64),
        _ => Err(SemanticsError::MissingChoice(choice.0)),
    }
}

/// Sum of the probabilities of the models satisfying the observation.
pub fn observation_probability(
    gp: &GroundProgram,
    obs: &GroundObservation,
    models: &[StableModel],
    assign: &ProbabilityAssignment,
    counts: &BTreeMap<TotalChoice, usize>,
) -> Result<f64, SemanticsError> {
    let mut total = 0.0;
    for m in models {
        if obs.satisfied_by(&|a| m.contains(a)) {
            total += model_probability(gp, m, assign, counts)?;
        }
    }
    Ok(total)
}

/// Product of the probabilities of independent observations.
pub fn observations_probability(
    gp: &GroundProgram,
    obs: &[GroundObservation],
    models: &[StableModel],
    assign: &ProbabilityAssignment,
    counts: &BTreeMap<TotalChoice, usize>,
) -> Result<f64, SemanticsError> {
    let mut total = 1.0;
    for o in obs {
        total *= observation_probability(gp, o, models, assign, counts)?;
    }
    Ok(total)
}

pub(crate) fn weak_optimal(gp: &GroundProgram, opts: &SolveOptions) -> bool {
    !gp.weak.is_empty() && opts.opt_mode == OptMode::Optimal
}

pub(crate) fn choice_observation(atoms: &[AtomId]) -> GroundObservation {
    GroundObservation { constraints: atoms.iter().map(|&a| vec![GroundLiteral::Neg(a)]).collect(), unsatisfiable: false }
}

/// Whether every total choice has at most one stable model: a positive
/// program whose only choices are the neural rows.
pub fn is_deterministic(gp: &GroundProgram) -> bool {
    gp.rules.iter().all(|r| {
        r.body.iter().all(|l| matches!(l, GroundLiteral::Pos(_)))
            && match &r.head {
                GroundHead::Choice { elements, .. } => elements.iter().all(|&a| gp.symbols.is_neural(a)),
                _ => true,
            }
    })
}

/// The stable models of a program that satisfy `obs`. With weak
/// constraints in optimal mode, a model is kept when it is cost-optimal
/// among the models making the same total choice.
pub fn intended_models(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    opts: &SolveOptions,
) -> Result<Vec<StableModel>, SolveError> {
    if !weak_optimal(gp, opts) {
        return enumerate_stable_models(gp, obs, opts);
    }
    let all = SolveOptions { opt_mode: OptMode::All, max_models: None, ..opts.clone() };
    let models = enumerate_stable_models(gp, obs, &all)?;
    let mut best: HashMap<TotalChoice, Vec<(i64, i64)>> = HashMap::new();
    let mut out = Vec::new();
    for m in models {
        let Some(c) = TotalChoice::of(gp, &m) else { continue };
        if !best.contains_key(&c) {
            let one = SolveOptions { max_models: Some(1), ..opts.clone() };
            let opt = enumerate_stable_models(gp, Some(&choice_observation(&c.atoms(gp))), &one)?;
            best.insert(c.clone(), opt.first().map(|o| o.cost.clone()).unwrap_or_default());
        }
        if best[&c] == m.cost {
            out.push(m);
        }
        if opts.max_models.is_some_and(|k| out.len() >= k) {
            break;
        }
    }
    Ok(out)
}

/// Counts the models of total choices on demand, with a cache.
pub struct ChoiceCounter<'a> {
    gp: &'a GroundProgram,
    solver: Solver,
    opts: SolveOptions,
    deterministic: bool,
    cache: HashMap<TotalChoice, usize>,
}

impl<'a> ChoiceCounter<'a> {
    pub fn new(gp: &'a GroundProgram, opts: &SolveOptions) -> ChoiceCounter<'a> {
        ChoiceCounter {
            gp,
            solver: Solver::new(gp),
            opts: SolveOptions { max_models: None, ..opts.clone() },
            deterministic: is_deterministic(gp),
            cache: HashMap::new(),
        }
    }

    /// Number of models making the choice.
    pub fn count(&mut self, choice: &TotalChoice) -> Result<usize, SolveError> {
        if let Some(&n) = self.cache.get(choice) {
            return Ok(n);
        }
        let atoms = choice.atoms(self.gp);
        let n = if weak_optimal(self.gp, &self.opts) {
            enumerate_stable_models(self.gp, Some(&choice_observation(&atoms)), &self.opts)?.len()
        } else {
            let assumptions: Vec<(AtomId, bool)> = atoms.iter().map(|&a| (a, true)).collect();
            self.solver.count(&assumptions, None, self.opts.conflict_budget)?
        };
        self.cache.insert(choice.clone(), n);
        Ok(n)
    }

    /// Number of models making the same choice as `model`, itself a model.
    pub fn count_for(&mut self, model: &StableModel) -> Result<usize, SolveError> {
        let choice = TotalChoice::of(self.gp, model).expect("a model chooses every row");
        if self.deterministic {
            return Ok(1);
        }
        self.count(&choice)
    }

    /// The counts of the choices made by `models`.
    pub fn counts(&mut self, models: &[StableModel]) -> Result<BTreeMap<TotalChoice, usize>, SolveError> {
        let mut out = BTreeMap::new();
        for m in models {
            let c = TotalChoice::of(self.gp, m).expect("a model chooses every row");
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(c) {
                let n = self.count_for(m)?;
                e.insert(n);
            }
        }
        Ok(out)
    }
}

/// All intended models of a program with the number of models per choice.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub models: Vec<StableModel>,
    pub counts: BTreeMap<TotalChoice, usize>,
}

impl ModelSet {
    pub fn enumerate(gp: &GroundProgram, opts: &SolveOptions) -> Result<ModelSet, SolveError> {
        let opts = SolveOptions { max_models: None, ..opts.clone() };
        let models = intended_models(gp, None, &opts)?;
        let counts = count_models_per_choice(gp, &models);
        Ok(ModelSet { models, counts })
    }

    pub fn probabilities(&self, gp: &GroundProgram, assign: &ProbabilityAssignment) -> Result<Vec<f64>, SemanticsError> {
        self.models.iter().map(|m| model_probability(gp, m, assign, &self.counts)).collect()
    }

    pub fn observation_probability(
        &self,
        gp: &GroundProgram,
        obs: &GroundObservation,
        assign: &ProbabilityAssignment,
    ) -> Result<f64, SemanticsError> {
        observation_probability(gp, obs, &self.models, assign, &self.counts)
    }
}

/// Number of total choices of a program.
pub fn total_choices(gp: &GroundProgram) -> u128 {
    gp.neural
        .iter()
        .flat_map(|e| e.atoms.iter())
        .fold(1u128, |acc, row| acc.saturating_mul(row.len() as u128))
}

fn all_choices(gp: &GroundProgram) -> Vec<TotalChoice> {
    let radices: Vec<u32> = gp.neural.iter().flat_map(|e| e.atoms.iter().map(|r| r.len() as u32)).collect();
    let mut out = Vec::new();
    let mut cur = vec![0u32; radices.len()];
    loop {
        out.push(TotalChoice(cur.clone()));
        let mut k = radices.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] < radices[k] {
                break;
            }
            cur[k] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherenceMode {
    Exhaustive,
    /// Checks `choices` total choices drawn uniformly at random.
    Sampled { choices: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherenceReport {
    pub total_choices: u128,
    pub checked: usize,
    /// Checked choices without a stable model.
    pub incoherent: Vec<TotalChoice>,
}

impl CoherenceReport {
    pub fn is_coherent(&self) -> bool {
        self.incoherent.is_empty()
    }
}

/// Checks that total choices have at least one stable model.
pub fn check_coherence(
    gp: &GroundProgram,
    mode: CoherenceMode,
    opts: &SolveOptions,
) -> Result<CoherenceReport, SemanticsError> {
    let total = total_choices(gp);
    let choices = match mode {
        CoherenceMode::Exhaustive => {
            if total > EXHAUSTIVE_LIMIT {
                return Err(SemanticsError::TooManyChoices { count: total, limit: EXHAUSTIVE_LIMIT });
            }
            all_choices(gp)
        }
        CoherenceMode::Sampled { choices, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<usize> = gp.neural.iter().flat_map(|e| e.atoms.iter().map(Vec::len)).collect();
            (0..choices).map(|_| TotalChoice(rows.iter().map(|&n| rng.gen_range(0..n) as u32).collect())).collect()
        }
    };
    let checked = choices.len();
    let results = par::map_init(
        choices,
        || Solver::new(gp),
        |solver, c| -> Result<Option<TotalChoice>, SolveError> {
            let assumptions: Vec<(AtomId, bool)> = c.atoms(gp).into_iter().map(|a| (a, true)).collect();
            Ok(solver.first(&assumptions, opts.conflict_budget)?.is_none().then_some(c))
        },
    );
    let mut incoherent = Vec::new();
    for r in results {
        if let Some(c) = r? {
            incoherent.push(c);
        }
    }
    Ok(CoherenceReport { total_choices: total, checked, incoherent })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapStrategy {
    /// Enumerates the models and picks the most probable one.
    Enumerate,
    /// Branch-and-bound on the sum of negated log probabilities of the
    /// chosen atoms. Ignores the division by the number of models.
    Optimize,
    /// Enumerates up to the given number of models, optimises beyond.
    Auto(usize),
}

impl Default for MapStrategy {
    fn default() -> Self {
        MapStrategy::Auto(10_000)
    }
}

/// The most probable stable model satisfying `obs`. Ties go to the first
/// model in enumeration order. With weak constraints in optimal mode, the
/// weak levels take priority over the probability.
pub fn map_inference(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    assign: &ProbabilityAssignment,
    strategy: MapStrategy,
    opts: &SolveOptions,
) -> Result<StableModel, SemanticsError> {
    match strategy {
        MapStrategy::Enumerate => map_enumerate(gp, obs, assign, opts, None),
        MapStrategy::Optimize => map_optimize(gp, obs, assign, opts),
        MapStrategy::Auto(cap) => match map_enumerate(gp, obs, assign, opts, Some(cap)) {
            Err(SemanticsError::TooManyChoices { .. }) => map_optimize(gp, obs, assign, opts),
            r => r,
        },
    }
}

fn map_enumerate(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    assign: &ProbabilityAssignment,
    opts: &SolveOptions,
    cap: Option<usize>,
) -> Result<StableModel, SemanticsError> {
    let limited = SolveOptions { max_models: cap.map(|c| c + 1), ..opts.clone() };
    let mut models = intended_models(gp, obs, &limited)?;
    if let Some(c) = cap {
        if models.len() > c {
            return Err(SemanticsError::TooManyChoices { count: models.len() as u128, limit: c as u128 });
        }
    }
    if weak_optimal(gp, opts) {
        if let Some(best) = models.iter().map(|m| m.cost.clone()).min() {
            models.retain(|m| m.cost == best);
        }
    }
    let mut counter = ChoiceCounter::new(gp, opts);
    let mut best: Option<(f64, StableModel)> = None;
    for m in models {
        let p = choice_weight(&m, assign) / counter.count_for(&m)? as f64;
        if best.as_ref().is_none_or(|(bp, _)| p > *bp) {
            best = Some((p, m));
        }
    }
    best.map(|(_, m)| m).ok_or(SemanticsError::NoModels)
}

fn map_optimize(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    assign: &ProbabilityAssignment,
    opts: &SolveOptions,
) -> Result<StableModel, SemanticsError> {
    let rows: Vec<Vec<(AtomId, i64)>> = gp
        .neural
        .iter()
        .flat_map(|e| e.atoms.iter())
        .map(|row| {
            row.iter()
                .map(|&a| (a, (-assign.raw(a).max(EPSILON).ln() * MAP_SCALE).round() as i64))
                .collect()
        })
        .collect();
    minimise_rows(gp, obs, &rows, weak_optimal(gp, opts), opts.conflict_budget)?.ok_or(SemanticsError::NoModels)
}

/// CSV with one line per model: id, probability, and whether it satisfies
/// the observation.
pub fn probability_csv(probs: &[f64], satisfies: &[bool]) -> String {
    let mut out = String::from("model_id,probability,satisfies_observation\n");
    for (i, (p, s)) in probs.iter().zip(satisfies).enumerate() {
        out.push_str(&format!("{i},{p},{s}\n"));
    }
    out
}

#[cfg(test)]
mod tests;
