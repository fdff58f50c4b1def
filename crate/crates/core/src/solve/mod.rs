//! Stable model search.
//!
//! Programs are compiled to clauses by Clark completion and searched with a
//! CDCL engine. Non-tight programs get loop clauses lazily from an unfounded
//! set check on each candidate model. Weak constraints are handled by
//! branch-and-bound, one priority level at a time.

mod brute;
mod encode;
mod sat;
mod theory;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::ground::{AtomId, GroundHead, GroundObservation, GroundProgram, GroundRule};

pub use brute::{check_stable_bruteforce, stable_models_bruteforce};
pub use encode::is_tight;

use encode::{atom_lit, Encoding};
use sat::{Lit, SolveResult};
use theory::{AspTheory, LevelObjective, Unfounded};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("conflict budget of {budget} exceeded")]
    Budget { budget: u64 },
}

/// Which models to report when weak constraints are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptMode {
    /// Only models with a lexicographically minimal cost vector.
    #[default]
    Optimal,
    /// Every stable model; costs are still reported.
    All,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub max_models: Option<usize>,
    /// Maximum number of conflicts per search.
    pub conflict_budget: Option<u64>,
    pub opt_mode: OptMode,
}

/// A stable model: its true atoms, the true neural atoms, and its cost per
/// weak-constraint level (highest level first).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StableModel {
    atoms: FixedBitSet,
    projection: Vec<AtomId>,
    pub cost: Vec<(i64, i64)>,
}

impl StableModel {
    /// Builds a model from its true atoms; `num_neural` is the length of
    /// the program's `sigma_nn`.
    pub fn from_atoms(num_atoms: usize, num_neural: usize, atoms: impl IntoIterator<Item = AtomId>) -> StableModel {
        let mut set = FixedBitSet::with_capacity(num_atoms);
        for a in atoms {
            set.insert(a.index());
        }
        let projection = set.ones().take_while(|&i| i < num_neural).map(|i| AtomId(i as u32)).collect();
        StableModel { atoms: set, projection, cost: Vec::new() }
    }

    pub fn contains(&self, a: AtomId) -> bool {
        self.atoms.contains(a.index())
    }

    /// True atoms in id order.
    pub fn atoms(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.atoms.ones().map(|i| AtomId(i as u32))
    }

    pub fn len(&self) -> usize {
        self.atoms.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The true neural atoms.
    pub fn projection(&self) -> &[AtomId] {
        &self.projection
    }

    pub fn names(&self, gp: &GroundProgram) -> Vec<String> {
        self.atoms().map(|a| gp.name(a)).collect()
    }

    pub fn as_bools(&self) -> Vec<bool> {
        (0..self.atoms.len()).map(|i| self.atoms.contains(i)).collect()
    }
}

impl Ord for StableModel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.atoms().cmp(other.atoms()).then_with(|| self.cost.cmp(&other.cost))
    }
}

impl PartialOrd for StableModel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The outcome index chosen for every neural row, rows in `sigma_nn` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TotalChoice(pub Vec<u32>);

impl TotalChoice {
    /// The choice a model makes, or `None` if some row has no true outcome.
    pub fn of(gp: &GroundProgram, model: &StableModel) -> Option<TotalChoice> {
        let mut out = Vec::new();
        for e in &gp.neural {
            for row in &e.atoms {
                let j = row.iter().position(|&a| model.contains(a))?;
                out.push(j as u32);
            }
        }
        Some(TotalChoice(out))
    }

    /// The neural atoms made true by this choice.
    pub fn atoms(&self, gp: &GroundProgram) -> Vec<AtomId> {
        gp.neural
            .iter()
            .flat_map(|e| e.atoms.iter())
            .zip(&self.0)
            .map(|(row, &j)| row[j as usize])
            .collect()
    }
}

/// Replaces every neural row by a choice rule selecting exactly one of its
/// atoms. The neural entries are kept as metadata.
pub fn translate(gp: &GroundProgram) -> GroundProgram {
    let mut out = gp.clone();
    if gp.translated {
        return out;
    }
    for e in &gp.neural {
        for row in &e.atoms {
            out.rules.push(GroundRule {
                head: GroundHead::Choice { elements: row.clone(), lower: Some(1), upper: Some(1) },
                body: Vec::new(),
            });
        }
    }
    out.translated = true;
    out
}

/// Number of models per total choice, grouping by the neural projection.
pub fn count_models_per_choice(gp: &GroundProgram, models: &[StableModel]) -> BTreeMap<TotalChoice, usize> {
    let mut out = BTreeMap::new();
    for m in models {
        if let Some(c) = TotalChoice::of(gp, m) {
            *out.entry(c).or_insert(0) += 1;
        }
    }
    out
}

/// An incremental solver over one program and, optionally, one observation.
/// Enumeration calls are independent of each other: models found in one call
/// are not excluded from the next.
pub struct Solver {
    enc: Encoding,
    unfounded: Option<Unfounded>,
    objective: Vec<LevelObjective>,
    bounds: Vec<Option<i64>>,
    num_neural: usize,
    weak_levels: Vec<i64>,
    /// Number of loop clauses added so far.
    pub loops: u64,
}

impl Solver {
    /// A solver for `gp`, translating it first if needed.
    pub fn new(gp: &GroundProgram) -> Solver {
        if !gp.translated && !gp.neural.is_empty() {
            return Solver::new(&translate(gp));
        }
        let enc = Encoding::new(gp);
        let unfounded = (!enc.tight).then(|| Unfounded::new(gp, &enc.rule_body));
        let mut levels: Vec<i64> = enc.weak_groups.iter().map(|g| g.level).collect();
        levels.sort_by(|a, b| b.cmp(a));
        levels.dedup();
        let mut s = Solver {
            enc,
            unfounded,
            objective: Vec::new(),
            bounds: Vec::new(),
            num_neural: gp.sigma_nn().len(),
            weak_levels: levels,
            loops: 0,
        };
        s.objective = s.weak_objective();
        s.bounds = vec![None; s.objective.len()];
        s
    }

    /// Adds the constraints of an observation. Returns false if no model can
    /// satisfy it any more.
    pub fn add_observation(&mut self, obs: &GroundObservation) -> bool {
        self.enc.add_observation(obs)
    }

    /// Permanently adds the constraint that no model contains all of
    /// `atoms`.
    pub fn forbid(&mut self, atoms: &[AtomId]) {
        let c: Vec<Lit> = atoms.iter().map(|&a| !atom_lit(a)).collect();
        self.enc.sat.add_clause_between(&c);
    }

    /// Preferred truth value of an atom when the search branches on it.
    pub fn set_phase(&mut self, a: AtomId, value: bool) {
        self.enc.sat.set_phase(a.0, value);
    }

    pub fn has_weak(&self) -> bool {
        !self.weak_levels.is_empty()
    }

    fn weak_objective(&self) -> Vec<LevelObjective> {
        let mut out: Vec<LevelObjective> = self
            .weak_levels
            .iter()
            .map(|&level| LevelObjective { level, ..Default::default() })
            .collect();
        for g in &self.enc.weak_groups {
            let k = self.weak_levels.iter().position(|&l| l == g.level).expect("level listed");
            if g.weight >= 0 {
                out[k].items.push((g.lit, g.weight));
            } else {
                out[k].offset += g.weight;
                out[k].items.push((!g.lit, -g.weight));
            }
        }
        out
    }

    fn cost(&self) -> Vec<(i64, i64)> {
        self.objective.iter().map(|o| (o.level, o.value(&self.enc.sat))).collect()
    }

    fn extract(&self) -> StableModel {
        let n = self.enc.num_atoms;
        let atoms = (0..n as u32).filter(|&v| self.enc.sat.var_value(v) == Some(true)).map(AtomId);
        let mut m = StableModel::from_atoms(n, self.num_neural, atoms);
        m.cost = self.cost();
        m
    }

    fn run(&mut self, lits: &[Lit], budget: Option<u64>) -> SolveResult {
        let mut theory = AspTheory {
            unfounded: self.unfounded.as_ref(),
            objective: &self.objective,
            bounds: self.bounds.clone(),
            loops_added: 0,
        };
        let r = self.enc.sat.solve(lits, &mut theory, budget);
        self.loops += theory.loops_added;
        r
    }

    /// Calls `f` on each stable model satisfying the assumptions, in search
    /// order, until `f` returns false or `limit` models were reported.
    /// Returns the number of models reported.
    pub fn enumerate(
        &mut self,
        assumptions: &[(AtomId, bool)],
        limit: Option<usize>,
        budget: Option<u64>,
        mut f: impl FnMut(StableModel) -> bool,
    ) -> Result<usize, SolveError> {
        // A fresh activation literal guards this call's blocking clauses and
        // is retired afterwards.
        let act = Lit::pos(self.enc.sat.new_var());
        let mut lits = vec![act];
        lits.extend(assumptions.iter().map(|&(a, v)| if v { atom_lit(a) } else { !atom_lit(a) }));
        let start = self.enc.sat.conflicts;
        let mut found = 0usize;
        let result = loop {
            if limit.is_some_and(|l| found >= l) {
                break Ok(found);
            }
            let remaining = budget.map(|b| b.saturating_sub(self.enc.sat.conflicts - start));
            match self.run(&lits, remaining) {
                SolveResult::Sat => {
                    found += 1;
                    let m = self.extract();
                    let more = self.enc.sat.block_current();
                    if !f(m) || !more {
                        break Ok(found);
                    }
                }
                SolveResult::Unsat => break Ok(found),
                SolveResult::Budget => break Err(SolveError::Budget { budget: budget.unwrap_or(0) }),
            }
        };
        self.enc.sat.add_clause_between(&[!act]);
        result
    }

    /// All models satisfying the assumptions, up to `limit`.
    pub fn models(
        &mut self,
        assumptions: &[(AtomId, bool)],
        limit: Option<usize>,
        budget: Option<u64>,
    ) -> Result<Vec<StableModel>, SolveError> {
        let mut out = Vec::new();
        self.enumerate(assumptions, limit, budget, |m| {
            out.push(m);
            true
        })?;
        Ok(out)
    }

    /// Number of models satisfying the assumptions, counting at most `limit`.
    pub fn count(&mut self, assumptions: &[(AtomId, bool)], limit: Option<usize>, budget: Option<u64>) -> Result<usize, SolveError> {
        self.enumerate(assumptions, limit, budget, |_| true)
    }

    /// Some model satisfying the assumptions.
    pub fn first(&mut self, assumptions: &[(AtomId, bool)], budget: Option<u64>) -> Result<Option<StableModel>, SolveError> {
        let mut out = None;
        self.enumerate(assumptions, Some(1), budget, |m| {
            out = Some(m);
            false
        })?;
        Ok(out)
    }

}

/// Conflicts allowed for each hinted search in [`minimise_rows`].
const HINT_BUDGET: u64 = 2_000;

/// Minimises the objective of the solvers built by `make` one level at a
/// time by branch-and-bound, then returns a solver whose bounds admit exactly
/// the optimal models. Clauses learned under a bound stay valid only for
/// tighter bounds, so every level starts from a fresh solver.
fn optimise(
    make: &dyn Fn() -> Solver,
    budget: Option<u64>,
    hints: &[Vec<(AtomId, bool)>],
) -> Result<Option<Solver>, SolveError> {
    let mut best: Vec<Option<i64>> = Vec::new();
    let levels = make().objective.len();
    for k in 0..levels {
        let mut s = make();
        s.bounds[..k].copy_from_slice(&best);
        let mut level_best = None;
        if k + 1 == levels {
            // A good first model makes the bound prune early.
            for h in hints {
                match s.first(h, Some(HINT_BUDGET)) {
                    Ok(Some(m)) => {
                        let v = m.cost[k].1;
                        level_best = Some(v);
                        s.bounds[k] = Some(v - 1);
                        break;
                    }
                    Ok(None) | Err(SolveError::Budget { .. }) => {}
                }
            }
        }
        while let Some(m) = s.first(&[], budget)? {
            let v = m.cost[k].1;
            level_best = Some(v);
            s.bounds[k] = Some(v - 1);
        }
        match level_best {
            Some(v) => best.push(Some(v)),
            None => return Ok(None),
        }
    }
    let mut s = make();
    s.bounds.copy_from_slice(&best);
    Ok(Some(s))
}

/// All stable models of `gp` satisfying `obs`, sorted by their true atoms.
/// With weak constraints and [`OptMode::Optimal`], only the optimal ones.
pub fn enumerate_stable_models(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    opts: &SolveOptions,
) -> Result<Vec<StableModel>, SolveError> {
    let mut solver = Solver::new(gp);
    if let Some(o) = obs {
        if !solver.add_observation(o) {
            return Ok(Vec::new());
        }
    }
    if solver.has_weak() && opts.opt_mode == OptMode::Optimal {
        let make = || {
            let mut s = Solver::new(gp);
            if let Some(o) = obs {
                s.add_observation(o);
            }
            s
        };
        match optimise(&make, opts.conflict_budget, &[])? {
            Some(s) => solver = s,
            None => return Ok(Vec::new()),
        }
    }
    let mut models = solver.models(&[], opts.max_models, opts.conflict_budget)?;
    models.sort();
    Ok(models)
}

/// A model minimising the sum of weights over its true atoms, where each
/// group in `rows` has exactly one true atom in every model. With `weak`,
/// the weak-constraint levels are minimised first and the rows last. Ties
/// are broken by search order.
pub fn minimise_rows(
    gp: &GroundProgram,
    obs: Option<&GroundObservation>,
    rows: &[Vec<(AtomId, i64)>],
    weak: bool,
    budget: Option<u64>,
) -> Result<Option<StableModel>, SolveError> {
    let make = || {
        let mut s = Solver::new(gp);
        if let Some(o) = obs {
            s.add_observation(o);
        }
        if !weak {
            s.weak_levels.clear();
            s.objective.clear();
        }
        s.objective.push(LevelObjective {
            level: i64::MIN,
            offset: 0,
            items: Vec::new(),
            rows: rows.iter().map(|r| r.iter().map(|&(a, w)| (atom_lit(a), w)).collect()).collect(),
        });
        s.bounds = vec![None; s.objective.len()];
        // Start the search from the cheapest atom of every row.
        for r in rows {
            if let Some(&(a, _)) = r.iter().min_by_key(|&&(_, w)| w) {
                s.set_phase(a, true);
            }
        }
        s
    };
    // Hints forbid atoms whose excess over their row's minimum is above a
    // threshold, from tight to loose.
    fn excess(r: &[(AtomId, i64)]) -> impl Iterator<Item = (AtomId, i64)> + '_ {
        let lo = r.iter().map(|&(_, w)| w).min().unwrap_or(0);
        r.iter().map(move |&(a, w)| (a, w - lo))
    }
    let top = rows.iter().flat_map(|r| excess(r)).map(|(_, e)| e).max().unwrap_or(0);
    let hints: Vec<Vec<(AtomId, bool)>> = (1..=5)
        .rev()
        .map(|j| top >> j)
        .filter(|&t| t > 0)
        .map(|t| rows.iter().flat_map(|r| excess(r)).filter(|&(_, e)| e > t).map(|(a, _)| (a, false)).collect())
        .collect();
    let Some(mut solver) = optimise(&make, budget, &hints)? else { return Ok(None) };
    let mut m = solver.first(&[], budget)?;
    if let Some(m) = &mut m {
        m.cost.pop();
    }
    Ok(m)
}
