use crate::ground::{AtomId, GroundHead, GroundLiteral, GroundProgram, Value};

use super::encode::atom_lit;
use super::sat::{Lit, Sat, Theory};

/// Detects unfounded atoms in total assignments of non-tight programs and
/// answers with a loop clause.
pub struct Unfounded {
    heads: Vec<Vec<AtomId>>,
    pos: Vec<Vec<AtomId>>,
    pos_watch: Vec<Vec<usize>>,
    agg_watch: Vec<Vec<usize>>,
    by_head: Vec<Vec<usize>>,
    body: Vec<Lit>,
    rules: Vec<Vec<GroundLiteral>>,
}

impl Unfounded {
    pub fn new(gp: &GroundProgram, rule_body: &[Lit]) -> Unfounded {
        let n = gp.num_atoms();
        let mut u = Unfounded {
            heads: Vec::new(),
            pos: Vec::new(),
            pos_watch: vec![Vec::new(); n],
            agg_watch: vec![Vec::new(); n],
            by_head: vec![Vec::new(); n],
            body: Vec::new(),
            rules: Vec::new(),
        };
        for (ri, r) in gp.rules.iter().enumerate() {
            let heads = match &r.head {
                GroundHead::Atom(h) => vec![*h],
                GroundHead::Choice { elements, .. } => elements.clone(),
                GroundHead::Constraint => continue,
            };
            let idx = u.heads.len();
            for h in &heads {
                u.by_head[h.index()].push(idx);
            }
            let mut pos: Vec<AtomId> = r
                .body
                .iter()
                .filter_map(|l| match l {
                    GroundLiteral::Pos(a) => Some(*a),
                    _ => None,
                })
                .collect();
            pos.sort();
            pos.dedup();
            for a in &pos {
                u.pos_watch[a.index()].push(idx);
            }
            for l in &r.body {
                if let GroundLiteral::Count { negated: false, aggregate } = l {
                    for e in &aggregate.elements {
                        for &(a, p) in &e.condition {
                            if p && !u.agg_watch[a.index()].contains(&idx) {
                                u.agg_watch[a.index()].push(idx);
                            }
                        }
                    }
                }
            }
            u.heads.push(heads);
            u.pos.push(pos);
            u.body.push(rule_body[ri]);
            u.rules.push(r.body.clone());
        }
        u
    }

    /// Whether a positive aggregate fails when its positive conditions are
    /// read from `s` and its negative conditions from the assignment.
    fn agg_fails(l: &GroundLiteral, sat: &Sat, s: &[bool]) -> bool {
        let GroundLiteral::Count { aggregate, .. } = l else { return false };
        let mut tuples: Vec<&Vec<Value>> = aggregate
            .elements
            .iter()
            .filter(|e| {
                e.condition
                    .iter()
                    .all(|&(a, p)| if p { s[a.index()] } else { sat.var_value(a.0) == Some(false) })
            })
            .map(|e| &e.tuple)
            .collect();
        tuples.sort();
        tuples.dedup();
        !aggregate.op.eval(&(tuples.len() as i64), &aggregate.bound)
    }

    /// Greatest unfounded set of the current total assignment.
    pub fn unfounded(&self, sat: &Sat) -> Vec<AtomId> {
        let n = self.by_head.len();
        let truth = |a: AtomId| sat.var_value(a.0) == Some(true);
        let mut s = vec![false; n];
        let mut missing: Vec<usize> = self.pos.iter().map(Vec::len).collect();
        let mut fired = vec![false; self.heads.len()];
        let mut queue: Vec<AtomId> = Vec::new();
        let active: Vec<bool> = self.body.iter().map(|&b| sat.is_true(b)).collect();

        let fire = |r: usize, s: &mut Vec<bool>, queue: &mut Vec<AtomId>, fired: &mut Vec<bool>| {
            fired[r] = true;
            for &h in &self.heads[r] {
                if truth(h) && !s[h.index()] {
                    s[h.index()] = true;
                    queue.push(h);
                }
            }
        };
        for r in 0..self.heads.len() {
            if active[r] && missing[r] == 0 && self.agg_ok(r, &s, sat) {
                fire(r, &mut s, &mut queue, &mut fired);
            }
        }
        while let Some(a) = queue.pop() {
            for &r in &self.pos_watch[a.index()] {
                missing[r] -= 1;
                if active[r] && !fired[r] && missing[r] == 0 && self.agg_ok(r, &s, sat) {
                    fire(r, &mut s, &mut queue, &mut fired);
                }
            }
            for &r in &self.agg_watch[a.index()] {
                if active[r] && !fired[r] && missing[r] == 0 && self.agg_ok(r, &s, sat) {
                    fire(r, &mut s, &mut queue, &mut fired);
                }
            }
        }
        (0..n as u32).map(AtomId).filter(|&a| truth(a) && !s[a.index()]).collect()
    }

    /// Atoms that are not false yet have no support from rules whose bodies
    /// are not false, reading aggregates optimistically. Sound on partial
    /// assignments; the total check stays exact.
    pub fn unfounded_partial(&self, sat: &Sat) -> Vec<AtomId> {
        let n = self.by_head.len();
        let open = |a: AtomId| sat.var_value(a.0) != Some(false);
        let mut s = vec![false; n];
        let mut missing: Vec<usize> = self.pos.iter().map(Vec::len).collect();
        let mut queue: Vec<AtomId> = Vec::new();
        let fire = |r: usize, s: &mut Vec<bool>, queue: &mut Vec<AtomId>| {
            for &h in &self.heads[r] {
                if open(h) && !s[h.index()] {
                    s[h.index()] = true;
                    queue.push(h);
                }
            }
        };
        let active: Vec<bool> = self.body.iter().map(|&b| sat.value(b) != Some(false)).collect();
        for r in 0..self.heads.len() {
            if active[r] && missing[r] == 0 {
                fire(r, &mut s, &mut queue);
            }
        }
        while let Some(a) = queue.pop() {
            for &r in &self.pos_watch[a.index()] {
                missing[r] -= 1;
                if active[r] && missing[r] == 0 {
                    fire(r, &mut s, &mut queue);
                }
            }
        }
        (0..n as u32).map(AtomId).filter(|&a| open(a) && !s[a.index()]).collect()
    }

    /// Loop clause for a set found by [`Unfounded::unfounded_partial`]:
    /// `atom` needs a rule with a head in `u`, no positive body atom in `u`
    /// and a true body. Every such body is false, so the clause is false or
    /// unit.
    pub fn partial_loop_clause(&self, u: &[AtomId], atom: AtomId) -> Vec<Lit> {
        let mut in_u = vec![false; self.by_head.len()];
        for a in u {
            in_u[a.index()] = true;
        }
        let mut rules: Vec<usize> = u.iter().flat_map(|a| self.by_head[a.index()].iter().copied()).collect();
        rules.sort();
        rules.dedup();
        let mut clause = vec![!atom_lit(atom)];
        clause.extend(rules.into_iter().filter(|&r| !self.pos[r].iter().any(|a| in_u[a.index()])).map(|r| self.body[r]));
        clause.sort();
        clause.dedup();
        clause
    }

    fn agg_ok(&self, r: usize, s: &[bool], sat: &Sat) -> bool {
        self.rules[r].iter().all(|l| match l {
            GroundLiteral::Count { negated: false, .. } => !Self::agg_fails(l, sat, s),
            _ => true,
        })
    }

    /// Loop clause for unfounded set `u` and its member `atom`.
    pub fn loop_clause(&self, sat: &Sat, u: &[AtomId], atom: AtomId) -> Vec<Lit> {
        let n = self.by_head.len();
        let mut in_u = vec![false; n];
        for a in u {
            in_u[a.index()] = true;
        }
        let s: Vec<bool> = (0..n).map(|i| sat.var_value(i as u32) == Some(true) && !in_u[i]).collect();
        let mut clause = vec![!atom_lit(atom)];
        let mut rules: Vec<usize> = u.iter().flat_map(|a| self.by_head[a.index()].iter().copied()).collect();
        rules.sort();
        rules.dedup();
        for r in rules {
            if self.pos[r].iter().any(|a| in_u[a.index()]) {
                continue;
            }
            let mut dependent = false;
            let mut flips = Vec::new();
            for l in &self.rules[r] {
                let GroundLiteral::Count { negated: false, aggregate } = l else { continue };
                let touches = aggregate.elements.iter().any(|e| e.condition.iter().any(|&(a, p)| p && in_u[a.index()]));
                if !touches {
                    continue;
                }
                dependent = true;
                for e in &aggregate.elements {
                    for &(a, _) in &e.condition {
                        if !in_u[a.index()] {
                            let cur = sat.var_value(a.0) == Some(true);
                            flips.push(if cur { !atom_lit(a) } else { atom_lit(a) });
                        }
                    }
                }
            }
            if !dependent || self.agg_ok(r, &s, sat) {
                clause.push(self.body[r]);
            }
            clause.extend(flips);
        }
        clause.sort();
        clause.dedup();
        clause
    }
}

/// One priority level of an objective: minimise `offset + sum of weights of
/// true literals`. Literals in `rows` form exactly-one groups, which gives a
/// stronger lower bound.
#[derive(Debug, Clone, Default)]
pub struct LevelObjective {
    pub level: i64,
    pub offset: i64,
    pub items: Vec<(Lit, i64)>,
    pub rows: Vec<Vec<(Lit, i64)>>,
}

impl LevelObjective {
    pub fn value(&self, sat: &Sat) -> i64 {
        let mut total = self.offset;
        for &(l, w) in self.items.iter().chain(self.rows.iter().flatten()) {
            if sat.is_true(l) {
                total += w;
            }
        }
        total
    }

    /// Lower bound under the partial assignment and the literals explaining it.
    fn bound(&self, sat: &Sat) -> (i64, Vec<Lit>) {
        let mut total = self.offset;
        let mut why = Vec::new();
        for &(l, w) in &self.items {
            if sat.is_true(l) {
                total += w;
                why.push(!l);
            }
        }
        for row in &self.rows {
            if let Some(&(l, w)) = row.iter().find(|(l, _)| sat.is_true(*l)) {
                total += w;
                why.push(!l);
                continue;
            }
            let open = row.iter().filter(|(l, _)| sat.value(*l) != Some(false)).map(|&(_, w)| w).min();
            if let Some(m) = open {
                total += m;
                if m > 0 {
                    why.extend(row.iter().filter(|(l, _)| sat.value(*l) == Some(false)).map(|&(l, _)| l));
                }
            }
        }
        (total, why)
    }
}

/// Theory combining the unfounded-set check and objective bounds.
pub struct AspTheory<'a> {
    pub unfounded: Option<&'a Unfounded>,
    pub objective: &'a [LevelObjective],
    /// Inclusive upper bound on each level's value.
    pub bounds: Vec<Option<i64>>,
    pub loops_added: u64,
}

impl Theory for AspTheory<'_> {
    fn partial(&mut self, sat: &Sat) -> Option<Vec<Lit>> {
        for (obj, bound) in self.objective.iter().zip(&self.bounds) {
            let Some(b) = *bound else { continue };
            let (lb, why) = obj.bound(sat);
            if lb > b {
                return Some(why);
            }
        }
        let uf = self.unfounded?;
        let u = uf.unfounded_partial(sat);
        // Prefer a true atom: its clause is a conflict.
        let &atom = u.iter().find(|a| sat.var_value(a.0) == Some(true)).or(u.first())?;
        self.loops_added += 1;
        Some(uf.partial_loop_clause(&u, atom))
    }

    fn total(&mut self, sat: &Sat) -> Option<Vec<Lit>> {
        let uf = self.unfounded?;
        let u = uf.unfounded(sat);
        let &first = u.first()?;
        self.loops_added += 1;
        Some(uf.loop_clause(sat, &u, first))
    }
}
