//! Clause encoding of a ground program: Clark completion over Tseitin body
//! variables, sequential counters for cardinality bounds and `#count`, and
//! one indicator per weak-constraint tuple.

use std::collections::{BTreeMap, HashMap};

use crate::ground::{AtomId, GroundCount, GroundHead, GroundLiteral, GroundObservation, GroundProgram, Value};
use crate::lang::CmpOp;

use super::sat::{Lit, Sat};

/// Exactly-one groups up to this size use pairwise at-most-one clauses.
const PAIRWISE_LIMIT: usize = 16;

#[derive(Debug, Clone)]
pub struct WeakGroup {
    pub weight: i64,
    pub level: i64,
    pub lit: Lit,
}

pub struct Encoding {
    pub sat: Sat,
    pub num_atoms: usize,
    pub truth: Lit,
    /// Body literal of every ground rule, by rule index.
    pub rule_body: Vec<Lit>,
    pub weak_groups: Vec<WeakGroup>,
    pub tight: bool,
    and_cache: HashMap<Vec<Lit>, Lit>,
}

pub fn atom_lit(a: AtomId) -> Lit {
    Lit::pos(a.0)
}

impl Encoding {
    pub fn new(gp: &GroundProgram) -> Encoding {
        let mut sat = Sat::new();
        for _ in 0..gp.num_atoms() {
            sat.new_var();
        }
        let t = sat.new_var();
        let truth = Lit::pos(t);
        sat.add_clause(&[truth]);
        let mut enc = Encoding {
            sat,
            num_atoms: gp.num_atoms(),
            truth,
            rule_body: Vec::with_capacity(gp.rules.len()),
            weak_groups: Vec::new(),
            tight: true,
            and_cache: HashMap::new(),
        };
        enc.encode(gp);
        let order: Vec<u32> = (0..gp.num_atoms() as u32).collect();
        enc.sat.set_order(&order);
        enc
    }

    fn falsity(&self) -> Lit {
        !self.truth
    }

    fn new_lit(&mut self) -> Lit {
        Lit::pos(self.sat.new_var())
    }

    /// A literal equivalent to the conjunction.
    pub fn and(&mut self, lits: &[Lit]) -> Lit {
        let mut v: Vec<Lit> = lits.iter().copied().filter(|&l| l != self.truth).collect();
        v.sort();
        v.dedup();
        if v.contains(&self.falsity()) || v.windows(2).any(|w| w[0] == !w[1]) {
            return self.falsity();
        }
        match v.len() {
            0 => return self.truth,
            1 => return v[0],
            _ => {}
        }
        if let Some(&l) = self.and_cache.get(&v) {
            return l;
        }
        let g = self.new_lit();
        for &l in &v {
            self.sat.add_clause(&[!g, l]);
        }
        let mut big: Vec<Lit> = v.iter().map(|&l| !l).collect();
        big.push(g);
        self.sat.add_clause(&big);
        self.and_cache.insert(v, g);
        g
    }

    pub fn or(&mut self, lits: &[Lit]) -> Lit {
        let neg: Vec<Lit> = lits.iter().map(|&l| !l).collect();
        !self.and(&neg)
    }

    pub fn literal(&mut self, l: &GroundLiteral) -> Lit {
        match l {
            GroundLiteral::Pos(a) => atom_lit(*a),
            GroundLiteral::Neg(a) => !atom_lit(*a),
            GroundLiteral::Count { negated, aggregate } => {
                let c = self.count(aggregate);
                if *negated {
                    !c
                } else {
                    c
                }
            }
        }
    }

    fn body(&mut self, body: &[GroundLiteral]) -> Vec<Lit> {
        body.iter().map(|l| self.literal(l)).collect()
    }

    /// `at_least[j]` for each requested `j`: at least `j` of `xs` hold.
    fn at_least(&mut self, xs: &[Lit], js: &[i64]) -> Vec<Lit> {
        let top = js.iter().copied().max().unwrap_or(0).clamp(0, xs.len() as i64) as usize;
        // prev[j]: at least j among the inputs seen so far
        let mut prev: Vec<Lit> = (0..=top).map(|j| if j == 0 { self.truth } else { self.falsity() }).collect();
        for &x in xs {
            let mut cur = prev.clone();
            for j in 1..=top {
                let carry = self.and(&[x, prev[j - 1]]);
                cur[j] = self.or(&[prev[j], carry]);
            }
            prev = cur;
        }
        js.iter()
            .map(|&j| {
                if j <= 0 {
                    self.truth
                } else if j as usize > xs.len() {
                    self.falsity()
                } else {
                    prev[j as usize]
                }
            })
            .collect()
    }

    fn count(&mut self, agg: &GroundCount) -> Lit {
        let mut tuples: BTreeMap<&Vec<Value>, Vec<Lit>> = BTreeMap::new();
        for e in &agg.elements {
            let cond: Vec<Lit> = e
                .condition
                .iter()
                .map(|&(a, pos)| if pos { atom_lit(a) } else { !atom_lit(a) })
                .collect();
            let c = self.and(&cond);
            tuples.entry(&e.tuple).or_default().push(c);
        }
        let mut certain = 0i64;
        let mut xs = Vec::new();
        for (_, conds) in tuples {
            let l = self.or(&conds);
            if l == self.truth {
                certain += 1;
            } else if l != self.falsity() {
                xs.push(l);
            }
        }
        let b = agg.bound - certain;
        let th = self.at_least(&xs, &[b, b + 1]);
        let (ge_b, ge_b1) = (th[0], th[1]);
        match agg.op {
            CmpOp::Ge => ge_b,
            CmpOp::Gt => ge_b1,
            CmpOp::Le => !ge_b1,
            CmpOp::Lt => !ge_b,
            CmpOp::Eq => self.and(&[ge_b, !ge_b1]),
            CmpOp::Ne => !self.and(&[ge_b, !ge_b1]),
        }
    }

    fn encode(&mut self, gp: &GroundProgram) {
        let n = gp.num_atoms();
        let mut support: Vec<Vec<Lit>> = vec![Vec::new(); n];
        for r in &gp.rules {
            let body = self.body(&r.body);
            let beta = self.and(&body);
            self.rule_body.push(beta);
            match &r.head {
                GroundHead::Atom(h) => {
                    let mut c: Vec<Lit> = body.iter().map(|&l| !l).collect();
                    c.push(atom_lit(*h));
                    self.sat.add_clause(&c);
                    support[h.index()].push(beta);
                }
                GroundHead::Constraint => {
                    let c: Vec<Lit> = body.iter().map(|&l| !l).collect();
                    self.sat.add_clause(&c);
                }
                GroundHead::Choice { elements, lower, upper } => {
                    for e in elements {
                        support[e.index()].push(beta);
                    }
                    let xs: Vec<Lit> = elements.iter().map(|&a| atom_lit(a)).collect();
                    self.choice_bounds(beta, &xs, *lower, *upper);
                }
            }
        }
        for (a, sup) in support.iter().enumerate() {
            if sup.contains(&self.truth) {
                continue;
            }
            let mut c = vec![!Lit::pos(a as u32)];
            c.extend(sup.iter().copied().filter(|&l| l != self.falsity()));
            self.sat.add_clause(&c);
        }
        for (id, atom) in gp.symbols.iter() {
            if atom.strong_neg {
                if let Some(pos) = gp.symbols.get(&atom.complement()) {
                    self.sat.add_clause(&[!atom_lit(id), !atom_lit(pos)]);
                }
            }
        }
        let mut groups: BTreeMap<(i64, i64, Vec<Value>), Vec<Lit>> = BTreeMap::new();
        for w in &gp.weak {
            let body = self.body(&w.body);
            let b = self.and(&body);
            groups.entry((w.level, w.weight, w.terms.clone())).or_default().push(b);
        }
        for ((level, weight, _), bodies) in groups {
            let lit = self.or(&bodies);
            self.weak_groups.push(WeakGroup { weight, level, lit });
        }
        self.tight = is_tight(gp);
    }

    fn choice_bounds(&mut self, beta: Lit, xs: &[Lit], lower: Option<i64>, upper: Option<i64>) {
        if lower == Some(1) && upper == Some(1) && xs.len() <= PAIRWISE_LIMIT {
            let mut alo = vec![!beta];
            alo.extend_from_slice(xs);
            self.sat.add_clause(&alo);
            for i in 0..xs.len() {
                for j in i + 1..xs.len() {
                    self.sat.add_clause(&[!beta, !xs[i], !xs[j]]);
                }
            }
            return;
        }
        let lo = lower.unwrap_or(0);
        let hi1 = upper.map_or(xs.len() as i64 + 1, |u| u + 1);
        let th = self.at_least(xs, &[lo, hi1]);
        self.sat.add_clause(&[!beta, th[0]]);
        self.sat.add_clause(&[!beta, !th[1]]);
    }

    /// Adds the constraints of an observation. Returns false if it can never
    /// be satisfied.
    pub fn add_observation(&mut self, obs: &GroundObservation) -> bool {
        if obs.unsatisfiable {
            self.sat.add_clause(&[]);
            return false;
        }
        for body in &obs.constraints {
            let lits = self.body(body);
            let c: Vec<Lit> = lits.iter().map(|&l| !l).collect();
            self.sat.add_clause(&c);
        }
        !self.sat.is_unsat()
    }
}

/// Positive dependency graph is acyclic.
pub fn is_tight(gp: &GroundProgram) -> bool {
    let n = gp.num_atoms();
    let mut edges: Vec<Vec<u32>> = vec![Vec::new(); n];
    for r in &gp.rules {
        let mut deps = Vec::new();
        for l in &r.body {
            match l {
                GroundLiteral::Pos(a) => deps.push(a.0),
                GroundLiteral::Count { negated: false, aggregate } => {
                    for e in &aggregate.elements {
                        deps.extend(e.condition.iter().filter(|c| c.1).map(|c| c.0 .0));
                    }
                }
                _ => {}
            }
        }
        if deps.is_empty() {
            continue;
        }
        let heads: Vec<AtomId> = match &r.head {
            GroundHead::Atom(h) => vec![*h],
            GroundHead::Choice { elements, .. } => elements.clone(),
            GroundHead::Constraint => Vec::new(),
        };
        for h in heads {
            edges[h.index()].extend(&deps);
        }
    }
    // iterative three-colour DFS for a back edge
    let mut color = vec![0u8; n];
    for root in 0..n {
        if color[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        color[root] = 1;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < edges[v].len() {
                let w = edges[v][*i] as usize;
                *i += 1;
                match color[w] {
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => return false,
                    _ => {}
                }
            } else {
                color[v] = 2;
                stack.pop();
            }
        }
    }
    true
}
