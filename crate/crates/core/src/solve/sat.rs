//! A CDCL SAT engine: two watched literals, first-UIP learning, a static
//! decision order, assumptions as the first decision levels, and clauses that
//! can be injected during search by a theory.

use std::fmt;
use std::ops::Not;

pub type Var = u32;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(v: Var, positive: bool) -> Lit {
        Lit(v * 2 + u32::from(!positive))
    }

    pub fn pos(v: Var) -> Lit {
        Lit::new(v, true)
    }

    pub fn var(self) -> Var {
        self.0 >> 1
    }

    pub fn is_pos(self) -> bool {
        self.0 & 1 == 0
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.is_pos() { "" } else { "-" }, self.var())
    }
}

const NO_REASON: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    /// The conflict budget ran out.
    Budget,
}

/// Hooks called during search. A clause returned by `partial` must be
/// false or unit under the current assignment; one returned by `total` must
/// be false.
pub trait Theory {
    /// Called after each propagation fixpoint.
    fn partial(&mut self, _s: &Sat) -> Option<Vec<Lit>> {
        None
    }

    /// Called on total assignments; `None` accepts the model.
    fn total(&mut self, s: &Sat) -> Option<Vec<Lit>>;
}

#[cfg(test)]
pub struct NoTheory;

#[cfg(test)]
impl Theory for NoTheory {
    fn total(&mut self, _s: &Sat) -> Option<Vec<Lit>> {
        None
    }
}

#[derive(Default)]
pub struct Sat {
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<u32>>,
    assign: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    phase: Vec<bool>,
    seen: Vec<bool>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    /// Tie-break rank of each variable; `u32::MAX` for variables that are
    /// never decided.
    order_pos: Vec<u32>,
    activity: Vec<f64>,
    var_inc: f64,
    /// Binary max-heap of decision candidates by activity, then rank.
    heap: Vec<Var>,
    heap_pos: Vec<u32>,
    /// Decision literal of each level; `None` for an assumption that was
    /// already true when its level was opened.
    decisions: Vec<Option<Lit>>,
    assumption_levels: usize,
    last_assumptions: Vec<Lit>,
    unsat: bool,
    pending: Vec<Lit>,
    pub conflicts: u64,
}

impl Sat {
    pub fn new() -> Sat {
        Sat { var_inc: 1.0, ..Sat::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.assign.len()
    }

    pub fn new_var(&mut self) -> Var {
        let v = self.assign.len() as Var;
        self.assign.push(0);
        self.level.push(0);
        self.reason.push(NO_REASON);
        self.phase.push(false);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.order_pos.push(u32::MAX);
        self.activity.push(0.0);
        self.heap_pos.push(u32::MAX);
        v
    }

    /// Until conflicts raise activities, variables are decided in the order
    /// given and then in index order. Variables created later are never
    /// decided.
    pub fn set_order(&mut self, order: &[Var]) {
        self.order_pos.iter_mut().for_each(|p| *p = u32::MAX);
        let mut rank = 0u32;
        for &v in order.iter().chain(&(0..self.num_vars() as Var).collect::<Vec<_>>()) {
            if self.order_pos[v as usize] == u32::MAX {
                self.order_pos[v as usize] = rank;
                rank += 1;
            }
        }
        for &v in &self.heap {
            self.heap_pos[v as usize] = u32::MAX;
        }
        self.heap.clear();
        for v in 0..self.num_vars() as Var {
            if self.assign[v as usize] == 0 {
                self.heap_insert(v);
            }
        }
    }

    fn before(&self, a: Var, b: Var) -> bool {
        let (x, y) = (self.activity[a as usize], self.activity[b as usize]);
        x > y || (x == y && self.order_pos[a as usize] < self.order_pos[b as usize])
    }

    fn heap_insert(&mut self, v: Var) {
        if self.heap_pos[v as usize] != u32::MAX || self.order_pos[v as usize] == u32::MAX {
            return;
        }
        self.heap_pos[v as usize] = self.heap.len() as u32;
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1);
    }

    fn sift_up(&mut self, mut i: usize) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !self.before(v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.heap_pos[self.heap[i] as usize] = i as u32;
            i = parent;
        }
        self.heap[i] = v;
        self.heap_pos[v as usize] = i as u32;
    }

    fn sift_down(&mut self, mut i: usize) {
        let v = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && self.before(self.heap[r], self.heap[l]) { r } else { l };
            if !self.before(self.heap[c], v) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.heap_pos[self.heap[i] as usize] = i as u32;
            i = c;
        }
        self.heap[i] = v;
        self.heap_pos[v as usize] = i as u32;
    }

    fn heap_pop(&mut self) -> Option<Var> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("non-empty heap");
        self.heap_pos[top as usize] = u32::MAX;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.heap_pos[last as usize] = 0;
            self.sift_down(0);
        }
        Some(top)
    }

    fn bump(&mut self, v: Var) {
        let a = &mut self.activity[v as usize];
        *a += self.var_inc;
        if *a > 1e100 {
            self.activity.iter_mut().for_each(|x| *x *= 1e-100);
            self.var_inc *= 1e-100;
        }
        let p = self.heap_pos[v as usize];
        if p != u32::MAX {
            self.sift_up(p as usize);
        }
    }

    pub fn set_phase(&mut self, v: Var, positive: bool) {
        self.phase[v as usize] = positive;
    }

    pub fn value(&self, l: Lit) -> Option<bool> {
        match self.assign[l.var() as usize] {
            0 => None,
            a => Some((a > 0) == l.is_pos()),
        }
    }

    pub fn is_true(&self, l: Lit) -> bool {
        self.value(l) == Some(true)
    }

    pub fn var_value(&self, v: Var) -> Option<bool> {
        self.value(Lit::pos(v))
    }

    pub fn level_of(&self, v: Var) -> u32 {
        self.level[v as usize]
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Adds a clause at decision level 0.
    pub fn add_clause(&mut self, lits: &[Lit]) {
        debug_assert_eq!(self.decision_level(), 0);
        if self.unsat {
            return;
        }
        let mut c: Vec<Lit> = Vec::with_capacity(lits.len());
        for &l in lits {
            match self.value(l) {
                Some(true) if self.level_of(l.var()) == 0 => return,
                Some(false) if self.level_of(l.var()) == 0 => {}
                _ => {
                    if c.contains(&!l) {
                        return;
                    }
                    if !c.contains(&l) {
                        c.push(l);
                    }
                }
            }
        }
        match c.len() {
            0 => self.unsat = true,
            1 => {
                self.enqueue(c[0], NO_REASON);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
            }
            _ => {
                self.attach(c);
            }
        }
    }

    fn attach(&mut self, c: Vec<Lit>) -> u32 {
        let ci = self.clauses.len() as u32;
        self.watches[c[0].idx()].push(ci);
        self.watches[c[1].idx()].push(ci);
        self.clauses.push(c);
        ci
    }

    fn enqueue(&mut self, l: Lit, reason: u32) {
        let v = l.var() as usize;
        self.assign[v] = if l.is_pos() { 1 } else { -1 };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.idx()]);
            let (mut i, mut j) = (0, 0);
            let mut conflict = None;
            while i < ws.len() {
                let ci = ws[i];
                i += 1;
                let c = &mut self.clauses[ci as usize];
                if c[0] == false_lit {
                    c.swap(0, 1);
                }
                let val = |l: Lit, assign: &[i8]| match assign[l.var() as usize] {
                    0 => None,
                    a => Some((a > 0) == l.is_pos()),
                };
                if val(c[0], &self.assign) == Some(true) {
                    ws[j] = ci;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..c.len() {
                    if val(c[k], &self.assign) != Some(false) {
                        c.swap(1, k);
                        self.watches[c[1].idx()].push(ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = ci;
                j += 1;
                let first = c[0];
                if val(first, &self.assign) == Some(false) {
                    conflict = Some(ci);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, ci);
                }
            }
            ws.truncate(j);
            self.watches[false_lit.idx()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn backtrack(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let start = self.trail_lim[lvl];
        for k in (start..self.trail.len()).rev() {
            let v = self.trail[k].var() as usize;
            self.assign[v] = 0;
            self.reason[v] = NO_REASON;
            self.heap_insert(v as Var);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(lvl);
        self.decisions.truncate(lvl);
        self.qhead = self.trail.len();
        self.assumption_levels = self.assumption_levels.min(lvl);
    }

    fn analyze(&mut self, confl: u32) -> (Vec<Lit>, usize) {
        let mut learnt = vec![Lit(0)];
        let mut path = 0usize;
        let mut idx = self.trail.len();
        let mut confl = confl;
        let mut skip_first = false;
        let cur = self.decision_level() as u32;
        loop {
            for k in usize::from(skip_first)..self.clauses[confl as usize].len() {
                let q = self.clauses[confl as usize][k];
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v as Var);
                    if self.level[v] == cur {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            let p = loop {
                idx -= 1;
                let l = self.trail[idx];
                if self.seen[l.var() as usize] {
                    break l;
                }
            };
            self.seen[p.var() as usize] = false;
            path -= 1;
            if path == 0 {
                learnt[0] = !p;
                break;
            }
            confl = self.reason[p.var() as usize];
            skip_first = true;
        }
        for l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }
        let mut bj = 0usize;
        if learnt.len() > 1 {
            let mut best = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var() as usize] > self.level[learnt[best].var() as usize] {
                    best = k;
                }
            }
            learnt.swap(1, best);
            bj = self.level[learnt[1].var() as usize] as usize;
        }
        (learnt, bj)
    }

    fn new_level(&mut self, decision: Option<Lit>) {
        self.trail_lim.push(self.trail.len());
        self.decisions.push(decision);
        if let Some(l) = decision {
            self.enqueue(l, NO_REASON);
        }
    }

    /// Takes a clause that is false under the current assignment into the
    /// database. `Ok(Some(ci))` is a conflict to analyse; `Err` means the
    /// search space under the current assumptions is exhausted.
    /// Adds a clause whose literals are false except the one at `k`, and
    /// asserts that literal at the level where the clause became unit.
    fn inject_unit(&mut self, mut c: Vec<Lit>, k: usize) -> Result<Option<u32>, ()> {
        debug_assert!(c.iter().enumerate().all(|(i, &l)| i == k || self.value(l) == Some(false)), "injected clause must be unit");
        c.swap(0, k);
        c[1..].sort_by_key(|l| std::cmp::Reverse(self.level[l.var() as usize]));
        if c.len() == 1 {
            self.backtrack(0);
            self.enqueue(c[0], NO_REASON);
            return Ok(None);
        }
        let max = self.level[c[1].var() as usize] as usize;
        self.backtrack(max);
        let first = c[0];
        let ci = self.attach(c);
        self.enqueue(first, ci);
        Ok(None)
    }

    fn inject(&mut self, lits: Vec<Lit>) -> Result<Option<u32>, ()> {
        let mut c: Vec<Lit> = Vec::with_capacity(lits.len());
        for l in lits {
            if !c.contains(&l) {
                c.push(l);
            }
        }
        if let Some(k) = c.iter().position(|&l| self.value(l).is_none()) {
            return self.inject_unit(c, k);
        }
        debug_assert!(c.iter().all(|&l| self.value(l) == Some(false)), "injected clause must be false");
        c.sort_by_key(|l| std::cmp::Reverse(self.level[l.var() as usize]));
        let max = c.first().map_or(0, |l| self.level[l.var() as usize] as usize);
        if max == 0 {
            self.unsat = true;
            return Err(());
        }
        if c.len() == 1 {
            self.backtrack(0);
            self.enqueue(c[0], NO_REASON);
            return Ok(None);
        }
        self.backtrack(max);
        let ci = self.attach(c);
        if max <= self.assumption_levels {
            return Err(());
        }
        Ok(Some(ci))
    }

    /// Searches for a model extending the assumptions. On `Sat` the
    /// assignment stays in place until the next call.
    pub fn solve(&mut self, assumptions: &[Lit], theory: &mut dyn Theory, budget: Option<u64>) -> SolveResult {
        let pending = std::mem::take(&mut self.pending);
        let same = self.last_assumptions == assumptions;
        self.last_assumptions = assumptions.to_vec();
        if self.unsat {
            return SolveResult::Unsat;
        }
        let start = self.conflicts;
        let mut pending_conflict: Option<u32> = None;
        let mut injected: Option<u32> = None;
        if !pending.is_empty() && same && self.decision_level() > 0 {
            match self.inject(pending) {
                Ok(ci) => {
                    pending_conflict = ci;
                    injected = ci;
                }
                Err(()) => return self.finish(SolveResult::Unsat),
            }
        } else {
            self.backtrack(0);
            if !pending.is_empty() {
                self.add_clause(&pending);
            }
            if self.unsat {
                return SolveResult::Unsat;
            }
        }
        loop {
            let confl = match pending_conflict.take() {
                Some(ci) => Some(ci),
                None => self.propagate(),
            };
            if let Some(ci) = confl {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    self.unsat = true;
                    return SolveResult::Unsat;
                }
                if self.decision_level() <= self.assumption_levels {
                    return self.finish(SolveResult::Unsat);
                }
                if budget.is_some_and(|b| self.conflicts - start > b) {
                    return self.finish(SolveResult::Budget);
                }
                let (learnt, bj) = self.analyze(ci);
                self.var_inc /= 0.95;
                self.backtrack(bj);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], NO_REASON);
                } else {
                    let first = learnt[0];
                    let lc = self.attach(learnt);
                    self.enqueue(first, lc);
                }
                // An injected clause may have become unit below its own
                // watches; assert its literal explicitly.
                if injected.take() == Some(ci) {
                    self.assert_if_unit(ci);
                }
                continue;
            }
            if let Some(c) = theory.partial(self) {
                match self.inject(c) {
                    Ok(ci) => {
                        pending_conflict = ci;
                        injected = ci;
                        continue;
                    }
                    Err(()) => return self.finish(SolveResult::Unsat),
                }
            }
            if self.decision_level() == self.assumption_levels && self.assumption_levels < assumptions.len() {
                let a = assumptions[self.assumption_levels];
                self.assumption_levels += 1;
                match self.value(a) {
                    Some(false) => return self.finish(SolveResult::Unsat),
                    Some(true) => self.new_level(None),
                    None => self.new_level(Some(a)),
                }
                continue;
            }
            match self.next_decision() {
                Some(l) => self.new_level(Some(l)),
                None => match theory.total(self) {
                    None => return SolveResult::Sat,
                    Some(c) => match self.inject(c) {
                        Ok(ci) => {
                            pending_conflict = ci;
                            injected = ci;
                        }
                        Err(()) => return self.finish(SolveResult::Unsat),
                    },
                },
            }
        }
    }

    fn assert_if_unit(&mut self, ci: u32) {
        let mut unassigned = None;
        for k in 0..self.clauses[ci as usize].len() {
            let l = self.clauses[ci as usize][k];
            match self.value(l) {
                Some(true) => return,
                Some(false) => {}
                None if unassigned.is_some() => return,
                None => unassigned = Some(k),
            }
        }
        if let Some(k) = unassigned {
            let c = &mut self.clauses[ci as usize];
            if k > 1 {
                // keep the watch invariant: the implied literal must be watched
                return;
            }
            c.swap(0, k);
            let l = c[0];
            self.enqueue(l, ci);
        }
    }

    fn finish(&mut self, r: SolveResult) -> SolveResult {
        self.backtrack(0);
        r
    }

    fn next_decision(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap_pop() {
            if self.assign[v as usize] == 0 {
                return Some(Lit::new(v, self.phase[v as usize]));
            }
        }
        None
    }

    /// Excludes the current model from later calls with the same
    /// assumptions by the negation of its decisions. Returns false when the
    /// model was forced by the assumptions alone, i.e. it was the last one.
    pub fn block_current(&mut self) -> bool {
        let free = self.decisions[self.assumption_levels.min(self.decisions.len())..]
            .iter()
            .any(Option::is_some);
        if !free {
            self.backtrack(0);
            return false;
        }
        self.pending = self.decisions.iter().flatten().map(|&l| !l).collect();
        true
    }

    /// Adds a permanent clause after a call has returned.
    pub fn add_clause_between(&mut self, lits: &[Lit]) {
        self.backtrack(0);
        self.pending.clear();
        self.add_clause(lits);
    }

    pub fn is_unsat(&self) -> bool {
        self.unsat
    }
}
