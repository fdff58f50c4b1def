use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::lang::{CmpOp, Observation, Program};

use super::compile::{compile_rule, undo, CAtom, CElem, CHead, CLit, CRule, CTerm, Env, PredKey};
use super::program::*;
use super::value::{AtomId, GroundAtom, SymbolTable, Value};
use super::{GroundConfig, GroundError};

#[derive(Default)]
struct PredTable {
    ids: Vec<u32>,
    by_arg: Vec<HashMap<Value, Vec<u32>>>,
}

/// The atoms that can possibly be derived, and the subset that is certain.
#[derive(Default)]
struct Domain {
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, u32>,
    certain: Vec<bool>,
    n_certain: usize,
    tables: HashMap<PredKey, PredTable>,
}

fn key_of(a: &GroundAtom) -> PredKey {
    PredKey { name: a.predicate.clone(), strong_neg: a.strong_neg, arity: a.args.len() }
}

impl Domain {
    fn len(&self) -> usize {
        self.atoms.len()
    }

    fn get(&self, a: &GroundAtom) -> Option<u32> {
        self.index.get(a).copied()
    }

    fn is_certain(&self, id: u32) -> bool {
        self.certain[id as usize]
    }

    fn insert(&mut self, a: GroundAtom, certain: bool) -> u32 {
        if let Some(id) = self.get(&a) {
            if certain && !self.certain[id as usize] {
                self.certain[id as usize] = true;
                self.n_certain += 1;
            }
            return id;
        }
        let id = self.atoms.len() as u32;
        let table = self.tables.entry(key_of(&a)).or_default();
        if table.by_arg.is_empty() {
            table.by_arg = vec![HashMap::new(); a.args.len()];
        }
        table.ids.push(id);
        for (j, v) in a.args.iter().enumerate() {
            table.by_arg[j].entry(v.clone()).or_default().push(id);
        }
        self.index.insert(a.clone(), id);
        self.atoms.push(a);
        self.certain.push(certain);
        if certain {
            self.n_certain += 1;
        }
        id
    }

    fn candidates(&self, atom: &CAtom, env: &Env) -> &[u32] {
        let Some(table) = self.tables.get(&atom.key) else { return &[] };
        let mut best: &[u32] = &table.ids;
        for (j, t) in atom.args.iter().enumerate() {
            if t.is_computed() {
                continue;
            }
            if let Some(v) = t.value(env) {
                let bucket = table.by_arg[j].get(&v).map_or(&[][..], Vec::as_slice);
                if bucket.len() < best.len() {
                    best = bucket;
                }
            }
        }
        best
    }
}

type Callback<'c> = dyn FnMut(&mut Env, &[u32]) -> Result<(), GroundError> + 'c;

/// Enumerates the substitutions satisfying a conjunction of positive atoms
/// and comparisons over the domain.
struct Joiner<'a> {
    dom: &'a Domain,
    rule: &'a str,
}

impl<'a> Joiner<'a> {
    fn arith(&self, detail: String) -> GroundError {
        GroundError::Arithmetic { rule: self.rule.to_string(), detail }
    }

    fn run(&self, lits: &[&CLit], env: &mut Env, f: &mut Callback<'_>) -> Result<(), GroundError> {
        let mut done = vec![false; lits.len()];
        let mut trail = Vec::new();
        let mut matched = Vec::new();
        self.step(lits, &mut done, env, &mut trail, &mut matched, f)
    }

    fn pick(&self, lits: &[&CLit], done: &[bool], env: &Env) -> Option<usize> {
        let mut best: Option<((u8, usize), usize)> = None;
        for (i, lit) in lits.iter().enumerate() {
            if done[i] {
                continue;
            }
            let rank = match lit {
                CLit::Cmp(op, a, b) => {
                    let (ba, bb) = (a.is_bound(env), b.is_bound(env));
                    if ba && bb {
                        (0, 0)
                    } else if *op == CmpOp::Eq && ((ba && !b.is_computed()) || (bb && !a.is_computed())) {
                        (1, 0)
                    } else {
                        continue;
                    }
                }
                CLit::Pos(atom) => {
                    if atom.args.iter().any(|t| t.is_computed() && !t.is_bound(env)) {
                        continue;
                    }
                    let bound = atom.args.iter().filter(|t| t.is_bound(env)).count();
                    (2, usize::MAX - bound)
                }
                _ => continue,
            };
            if best.is_none_or(|(r, _)| rank < r) {
                best = Some((rank, i));
            }
        }
        best.map(|(_, i)| i)
    }

    fn step(
        &self,
        lits: &[&CLit],
        done: &mut Vec<bool>,
        env: &mut Env,
        trail: &mut Vec<usize>,
        matched: &mut Vec<u32>,
        f: &mut Callback<'_>,
    ) -> Result<(), GroundError> {
        let Some(i) = self.pick(lits, done, env) else {
            if done.iter().all(|&d| d) {
                return f(env, matched);
            }
            return Err(GroundError::Unsafe { rule: self.rule.to_string() });
        };
        done[i] = true;
        match lits[i] {
            CLit::Cmp(op, a, b) => {
                if a.is_bound(env) && b.is_bound(env) {
                    let xs = a.eval(env).map_err(|d| self.arith(d))?;
                    let ys = b.eval(env).map_err(|d| self.arith(d))?;
                    if xs.iter().any(|x| ys.iter().any(|y| op.eval(x, y))) {
                        self.step(lits, done, env, trail, matched, f)?;
                    }
                } else {
                    let (pat, other) = if a.is_bound(env) { (b, a) } else { (a, b) };
                    for v in other.eval(env).map_err(|d| self.arith(d))? {
                        let mark = trail.len();
                        if pat.matches(&v, env, trail).map_err(|d| self.arith(d))? {
                            self.step(lits, done, env, trail, matched, f)?;
                        }
                        undo(env, trail, mark);
                    }
                }
            }
            CLit::Pos(atom) => {
                for &id in self.dom.candidates(atom, env) {
                    let mark = trail.len();
                    let ground = &self.dom.atoms[id as usize];
                    let mut ok = true;
                    for (t, v) in atom.args.iter().zip(&ground.args) {
                        if !t.matches(v, env, trail).map_err(|d| self.arith(d))? {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        matched.push(id);
                        self.step(lits, done, env, trail, matched, f)?;
                        matched.pop();
                    }
                    undo(env, trail, mark);
                }
            }
            _ => unreachable!("only positive atoms and comparisons are joined"),
        }
        done[i] = false;
        Ok(())
    }
}

fn joinable(lits: &[CLit]) -> Vec<&CLit> {
    lits.iter().filter(|l| l.is_joinable()).collect()
}

/// All ground instances of an atom whose variables are bound.
fn instances(atom: &CAtom, env: &Env) -> Result<Vec<GroundAtom>, String> {
    Ok(tuples(&atom.args, env)?
        .into_iter()
        .map(|args| GroundAtom { predicate: atom.key.name.clone(), strong_neg: atom.key.strong_neg, args })
        .collect())
}

fn tuples(terms: &[CTerm], env: &Env) -> Result<Vec<Vec<Value>>, String> {
    let mut acc: Vec<Vec<Value>> = vec![Vec::new()];
    for t in terms {
        let vals = t.eval(env)?;
        let mut next = Vec::with_capacity(acc.len() * vals.len());
        for prefix in &acc {
            for v in &vals {
                let mut p = prefix.clone();
                p.push(v.clone());
                next.push(p);
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn single_int(t: &CTerm, env: &Env, rule: &str) -> Result<i64, GroundError> {
    let vals = t.eval(env).map_err(|detail| GroundError::Arithmetic { rule: rule.to_string(), detail })?;
    match vals.as_slice() {
        [Value::Int(i)] => Ok(*i),
        _ => Err(GroundError::NonInteger {
            rule: rule.to_string(),
            term: vals.iter().map(Value::to_string).collect::<Vec<_>>().join(","),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NnShape {
    events: usize,
    outcomes: Vec<Value>,
}

type NnKey = (Arc<str>, Vec<Value>);

struct FixedEntry {
    probs: Vec<f64>,
    texts: Vec<String>,
    atoms: Vec<GroundAtom>,
}

fn nn_atom(network: &Arc<str>, i: usize, data: &[Value], v: &Value) -> GroundAtom {
    let mut args = Vec::with_capacity(data.len() + 2);
    args.push(Value::Int(i as i64));
    args.extend(data.iter().cloned());
    args.push(v.clone());
    GroundAtom { predicate: network.clone(), strong_neg: false, args }
}

fn derive_neural(
    dom: &Domain,
    rule: &CRule,
    strict: bool,
    out: &mut BTreeMap<NnKey, NnShape>,
) -> Result<(), GroundError> {
    let CHead::Neural { network, events, data, outcomes } = &rule.head else { return Ok(()) };
    let join = Joiner { dom, rule: &rule.text };
    let undecidable = || GroundError::UndecidableGuard { rule: rule.text.clone() };
    let mut env: Env = vec![None; rule.nvars];
    let mut found = Vec::new();
    join.run(&joinable(&rule.body), &mut env, &mut |env, matched| {
        if matched.iter().any(|&id| !dom.is_certain(id)) {
            return if strict { Err(undecidable()) } else { Ok(()) };
        }
        for lit in &rule.body {
            let CLit::Neg(atom) = lit else { continue };
            for g in instances(atom, env).map_err(|d| join.arith(d))? {
                match dom.get(&g) {
                    None => {}
                    Some(id) if dom.is_certain(id) => return Ok(()),
                    Some(_) => return if strict { Err(undecidable()) } else { Ok(()) },
                }
            }
        }
        let e = single_int(events, env, &rule.text)?;
        if e < 1 {
            return Err(GroundError::InvalidNeural { rule: rule.text.clone(), msg: format!("event count {e}") });
        }
        for d in tuples(data, env).map_err(|d| join.arith(d))? {
            found.push(((network.clone(), d), NnShape { events: e as usize, outcomes: outcomes.clone() }));
        }
        Ok(())
    })?;
    for (key, shape) in found {
        match out.get(&key) {
            Some(old) if *old != shape => {
                return Err(GroundError::InvalidNeural {
                    rule: rule.text.clone(),
                    msg: format!("{}({}) declared twice with different shapes", key.0, fmt_values(&key.1)),
                });
            }
            Some(_) => {}
            None => {
                out.insert(key, shape);
            }
        }
    }
    Ok(())
}

fn fmt_values(vs: &[Value]) -> String {
    vs.iter().map(Value::to_string).collect::<Vec<_>>().join(",")
}

/// One round of domain derivation for a rule with an atom or choice head.
fn derive_atoms(dom: &Domain, rule: &CRule, out: &mut Vec<(GroundAtom, bool)>) -> Result<(), GroundError> {
    let join = Joiner { dom, rule: &rule.text };
    let mut env: Env = vec![None; rule.nvars];
    let definite = !rule.has_nonmonotone_body();
    match &rule.head {
        CHead::Atom(head) => join.run(&joinable(&rule.body), &mut env, &mut |env, matched| {
            let certain = definite && matched.iter().all(|&id| dom.is_certain(id));
            for g in instances(head, env).map_err(|d| join.arith(d))? {
                out.push((g, certain));
            }
            Ok(())
        }),
        CHead::Choice { elems, .. } => join.run(&joinable(&rule.body), &mut env, &mut |env, _| {
            for el in elems {
                join.run(&joinable(&el.cond), env, &mut |env, matched| {
                    if matched.iter().any(|&id| !dom.is_certain(id)) {
                        return Ok(());
                    }
                    for g in instances(&el.atom, env).map_err(|d| join.arith(d))? {
                        out.push((g, false));
                    }
                    Ok(())
                })?;
            }
            Ok(())
        }),
        _ => Ok(()),
    }
}

/// Turns instantiated rule parts into ground literals over final atom ids,
/// simplifying against the certain atoms.
struct Emitter<'a> {
    dom: &'a Domain,
    ids: &'a [AtomId],
}

enum Simplified {
    True,
    False,
    Lit(GroundLiteral),
}

impl<'a> Emitter<'a> {
    fn id(&self, d: u32) -> AtomId {
        self.ids[d as usize]
    }

    /// Ground bodies for one substitution of the joinable literals. Several
    /// bodies come out when a negative literal contains an interval.
    fn bodies(&self, rule: &CRule, env: &mut Env, matched: &[u32]) -> Result<Vec<Vec<GroundLiteral>>, GroundError> {
        let mut pos: Vec<AtomId> =
            matched.iter().filter(|&&d| !self.dom.is_certain(d)).map(|&d| self.id(d)).collect();
        pos.sort();
        pos.dedup();
        let base: Vec<GroundLiteral> = pos.into_iter().map(GroundLiteral::Pos).collect();
        let rest: Vec<&CLit> = rule.body.iter().filter(|l| !l.is_joinable()).collect();
        let mut out = Vec::new();
        self.extend(rule, &rest, env, base, &mut out)?;
        for b in &mut out {
            canonical_body(b);
        }
        Ok(out)
    }

    fn extend(
        &self,
        rule: &CRule,
        rest: &[&CLit],
        env: &mut Env,
        cur: Vec<GroundLiteral>,
        out: &mut Vec<Vec<GroundLiteral>>,
    ) -> Result<(), GroundError> {
        let Some((first, tail)) = rest.split_first() else {
            out.push(cur);
            return Ok(());
        };
        let arith = |detail| GroundError::Arithmetic { rule: rule.text.clone(), detail };
        match first {
            CLit::Neg(atom) => {
                for g in instances(atom, env).map_err(arith)? {
                    match self.dom.get(&g) {
                        None => self.extend(rule, tail, env, cur.clone(), out)?,
                        Some(d) if self.dom.is_certain(d) => {}
                        Some(d) => {
                            let mut next = cur.clone();
                            next.push(GroundLiteral::Neg(self.id(d)));
                            self.extend(rule, tail, env, next, out)?;
                        }
                    }
                }
            }
            CLit::Count { negated, elems, op, bound } => {
                let bound = single_int(bound, env, &rule.text)?;
                match self.count(rule, elems, *op, bound, *negated, env)? {
                    Simplified::True => self.extend(rule, tail, env, cur, out)?,
                    Simplified::False => {}
                    Simplified::Lit(l) => {
                        let mut next = cur;
                        next.push(l);
                        self.extend(rule, tail, env, next, out)?;
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn count(
        &self,
        rule: &CRule,
        elems: &[CElem],
        op: CmpOp,
        bound: i64,
        negated: bool,
        env: &mut Env,
    ) -> Result<Simplified, GroundError> {
        let join = Joiner { dom: self.dom, rule: &rule.text };
        let mut elements: Vec<CountElement> = Vec::new();
        for el in elems {
            join.run(&joinable(&el.cond), env, &mut |env, matched| {
                let mut cond: Vec<(AtomId, bool)> = matched
                    .iter()
                    .filter(|&&d| !self.dom.is_certain(d))
                    .map(|&d| (self.id(d), true))
                    .collect();
                for lit in &el.cond {
                    match lit {
                        CLit::Neg(atom) => {
                            for g in instances(atom, env).map_err(|d| join.arith(d))? {
                                match self.dom.get(&g) {
                                    None => {}
                                    Some(d) if self.dom.is_certain(d) => return Ok(()),
                                    Some(d) => cond.push((self.id(d), false)),
                                }
                            }
                        }
                        CLit::Count { .. } => {
                            return Err(GroundError::Unsupported {
                                rule: rule.text.clone(),
                                what: "nested aggregate".into(),
                            })
                        }
                        _ => {}
                    }
                }
                cond.sort();
                cond.dedup();
                for tuple in tuples(&el.terms, env).map_err(|d| join.arith(d))? {
                    elements.push(CountElement { tuple, condition: cond.clone() });
                }
                Ok(())
            })?;
        }
        let certain: HashSet<Vec<Value>> =
            elements.iter().filter(|e| e.condition.is_empty()).map(|e| e.tuple.clone()).collect();
        elements.retain(|e| !certain.contains(&e.tuple) || e.condition.is_empty());
        elements.sort_by(|a, b| (&a.tuple, &a.condition).cmp(&(&b.tuple, &b.condition)));
        elements.dedup();
        if elements.iter().all(|e| e.condition.is_empty()) {
            let holds = op.eval(&(certain.len() as i64), &bound);
            return Ok(if holds != negated { Simplified::True } else { Simplified::False });
        }
        Ok(Simplified::Lit(GroundLiteral::Count { negated, aggregate: GroundCount { elements, op, bound } }))
    }

    fn choice_elements(&self, rule: &CRule, env: &mut Env) -> Result<Vec<AtomId>, GroundError> {
        let CHead::Choice { elems, .. } = &rule.head else { unreachable!() };
        let join = Joiner { dom: self.dom, rule: &rule.text };
        let undecidable = || GroundError::UndecidableCondition { rule: rule.text.clone() };
        let mut atoms = Vec::new();
        for el in elems {
            join.run(&joinable(&el.cond), env, &mut |env, matched| {
                if matched.iter().any(|&d| !self.dom.is_certain(d)) {
                    return Err(undecidable());
                }
                for lit in &el.cond {
                    match lit {
                        CLit::Neg(atom) => {
                            for g in instances(atom, env).map_err(|d| join.arith(d))? {
                                match self.dom.get(&g) {
                                    None => {}
                                    Some(d) if self.dom.is_certain(d) => return Ok(()),
                                    Some(_) => return Err(undecidable()),
                                }
                            }
                        }
                        CLit::Count { .. } => return Err(undecidable()),
                        _ => {}
                    }
                }
                for g in instances(&el.atom, env).map_err(|d| join.arith(d))? {
                    let d = self.dom.get(&g).expect("choice atoms are in the domain");
                    atoms.push(self.id(d));
                }
                Ok(())
            })?;
        }
        atoms.sort();
        atoms.dedup();
        Ok(atoms)
    }
}

fn lit_order(l: &GroundLiteral) -> (u8, u32) {
    match l {
        GroundLiteral::Pos(a) => (0, a.0),
        GroundLiteral::Neg(a) => (1, a.0),
        GroundLiteral::Count { .. } => (2, 0),
    }
}

fn canonical_body(body: &mut Vec<GroundLiteral>) {
    body.sort_by_key(lit_order);
    body.dedup();
}

struct Sink {
    rules: Vec<GroundRule>,
    seen: HashSet<GroundRule>,
    weak: Vec<GroundWeak>,
    seen_weak: HashSet<GroundWeak>,
    limit: usize,
}

impl Sink {
    fn rule(&mut self, r: GroundRule) -> Result<(), GroundError> {
        if self.seen.insert(r.clone()) {
            self.rules.push(r);
            self.check()?;
        }
        Ok(())
    }

    fn weak(&mut self, w: GroundWeak) -> Result<(), GroundError> {
        if self.seen_weak.insert(w.clone()) {
            self.weak.push(w);
            self.check()?;
        }
        Ok(())
    }

    fn check(&self) -> Result<(), GroundError> {
        if self.rules.len() + self.weak.len() > self.limit {
            return Err(GroundError::TooLarge { limit: self.limit });
        }
        Ok(())
    }
}

fn emit_rule(em: &Emitter<'_>, rule: &CRule, sink: &mut Sink) -> Result<(), GroundError> {
    if matches!(rule.head, CHead::Neural { .. } | CHead::Prob(_)) {
        return Ok(());
    }
    let join = Joiner { dom: em.dom, rule: &rule.text };
    let mut env: Env = vec![None; rule.nvars];
    join.run(&joinable(&rule.body), &mut env, &mut |env, matched| {
        for body in em.bodies(rule, env, matched)? {
            match &rule.head {
                CHead::Atom(head) => {
                    for g in instances(head, env).map_err(|d| join.arith(d))? {
                        let d = em.dom.get(&g).expect("head atoms are in the domain");
                        if em.dom.is_certain(d) && !body.is_empty() {
                            continue;
                        }
                        sink.rule(GroundRule { head: GroundHead::Atom(em.id(d)), body: body.clone() })?;
                    }
                }
                CHead::Constraint => sink.rule(GroundRule { head: GroundHead::Constraint, body: body.clone() })?,
                CHead::Choice { lower, upper, .. } => {
                    let elements = em.choice_elements(rule, env)?;
                    let lower = lower.as_ref().map(|t| single_int(t, env, &rule.text)).transpose()?;
                    let upper = upper.as_ref().map(|t| single_int(t, env, &rule.text)).transpose()?;
                    sink.rule(GroundRule { head: GroundHead::Choice { elements, lower, upper }, body: body.clone() })?;
                }
                CHead::Weak { weight, level, terms } => {
                    let weight = single_int(weight, env, &rule.text)?;
                    let level = single_int(level, env, &rule.text)?;
                    for terms in tuples(terms, env).map_err(|d| join.arith(d))? {
                        sink.weak(GroundWeak { body: body.clone(), weight, level, terms })?;
                    }
                }
                CHead::Neural { .. } | CHead::Prob(_) => unreachable!(),
            }
        }
        Ok(())
    })
}

pub(crate) fn ground_program(program: &Program, config: &GroundConfig) -> Result<GroundProgram, GroundError> {
    let rules: Vec<CRule> = program.rules.iter().map(compile_rule).collect();
    let mut dom = Domain::default();

    let mut fixed: Vec<FixedEntry> = Vec::new();
    for r in &rules {
        let CHead::Prob(alts) = &r.head else { continue };
        let entry = if alts.len() == 1 {
            let (p, a) = &alts[0];
            FixedEntry {
                probs: vec![p.value, 1.0 - p.value],
                texts: vec![p.text.clone(), format!("{}", 1.0 - p.value)],
                atoms: vec![a.clone(), a.complement()],
            }
        } else {
            FixedEntry {
                probs: alts.iter().map(|(p, _)| p.value).collect(),
                texts: alts.iter().map(|(p, _)| p.text.clone()).collect(),
                atoms: alts.iter().map(|(_, a)| a.clone()).collect(),
            }
        };
        if fixed.iter().any(|f| f.atoms == entry.atoms) {
            continue;
        }
        for a in &entry.atoms {
            dom.insert(a.clone(), false);
        }
        fixed.push(entry);
    }

    let mut nn: BTreeMap<NnKey, NnShape> = BTreeMap::new();
    loop {
        let before = (dom.len(), dom.n_certain, nn.len());
        for r in &rules {
            let mut found = Vec::new();
            derive_atoms(&dom, r, &mut found)?;
            for (a, certain) in found {
                dom.insert(a, certain);
            }
            let n_before = nn.len();
            derive_neural(&dom, r, false, &mut nn)?;
            if nn.len() != n_before {
                for ((network, data), shape) in &nn {
                    for i in 0..shape.events {
                        for v in &shape.outcomes {
                            dom.insert(nn_atom(network, i, data, v), false);
                        }
                    }
                }
            }
            if dom.len() + dom.n_certain > 2 * config.max_rules {
                return Err(GroundError::TooLarge { limit: config.max_rules });
            }
        }
        if (dom.len(), dom.n_certain, nn.len()) == before {
            break;
        }
    }

    let mut strict = BTreeMap::new();
    for r in &rules {
        derive_neural(&dom, r, true, &mut strict)?;
    }
    if strict != nn {
        let rule = rules
            .iter()
            .find(|r| matches!(r.head, CHead::Neural { .. }))
            .map(|r| r.text.clone())
            .unwrap_or_default();
        return Err(GroundError::UndecidableGuard { rule });
    }

    // Emit, then refine the domain: atoms without any rule are dropped and
    // atoms that came out as facts become certain. Repeat until stable.
    let (rules_out, weak_out) = loop {
        let identity: Vec<AtomId> = (0..dom.len() as u32).map(AtomId).collect();
        let em = Emitter { dom: &dom, ids: &identity };
        let mut sink = Sink {
            rules: Vec::new(),
            seen: HashSet::new(),
            weak: Vec::new(),
            seen_weak: HashSet::new(),
            limit: config.max_rules,
        };
        for r in &rules {
            emit_rule(&em, r, &mut sink)?;
        }
        let mut keep = vec![false; dom.len()];
        let mut certain = vec![false; dom.len()];
        for ((network, data), shape) in &nn {
            for i in 0..shape.events {
                for v in &shape.outcomes {
                    keep[dom.get(&nn_atom(network, i, data, v)).expect("neural atom") as usize] = true;
                }
            }
        }
        for f in &fixed {
            for a in &f.atoms {
                keep[dom.get(a).expect("probabilistic atom") as usize] = true;
            }
        }
        for r in &sink.rules {
            match &r.head {
                GroundHead::Atom(a) => {
                    keep[a.index()] = true;
                    if r.body.is_empty() {
                        certain[a.index()] = true;
                    }
                }
                GroundHead::Choice { elements, .. } => elements.iter().for_each(|a| keep[a.index()] = true),
                GroundHead::Constraint => {}
            }
        }
        if keep.iter().all(|&k| k) && certain == dom.certain {
            break (sink.rules, sink.weak);
        }
        let mut refined = Domain::default();
        for (d, atom) in dom.atoms.iter().enumerate() {
            if keep[d] {
                refined.insert(atom.clone(), certain[d]);
            }
        }
        dom = refined;
    };

    // Final numbering: neural atoms first, then everything else in order.
    let mut symbols = SymbolTable::default();
    let mut ids: Vec<Option<AtomId>> = vec![None; dom.len()];
    let mut neural = Vec::new();
    for ((network, data), shape) in &nn {
        let mut rows = Vec::with_capacity(shape.events);
        for i in 0..shape.events {
            let mut row = Vec::with_capacity(shape.outcomes.len());
            for v in &shape.outcomes {
                let g = nn_atom(network, i, data, v);
                let d = dom.get(&g).expect("neural atoms are in the domain");
                let id = symbols.intern(g);
                symbols.mark_neural(id);
                ids[d as usize] = Some(id);
                row.push(id);
            }
            rows.push(row);
        }
        neural.push(NeuralEntry {
            source: EntrySource::Network { name: network.clone(), data: data.clone(), outcomes: shape.outcomes.clone() },
            atoms: rows,
        });
    }
    for f in &fixed {
        let row: Vec<AtomId> = f
            .atoms
            .iter()
            .map(|a| {
                let id = symbols.intern(a.clone());
                symbols.mark_neural(id);
                ids[dom.get(a).expect("probabilistic atoms are in the domain") as usize] = Some(id);
                id
            })
            .collect();
        neural.push(NeuralEntry {
            source: EntrySource::Fixed { probs: f.probs.clone(), texts: f.texts.clone() },
            atoms: vec![row],
        });
    }
    let mut rest: Vec<u32> = (0..dom.len() as u32).filter(|&d| ids[d as usize].is_none()).collect();
    rest.sort_by(|&a, &b| dom.atoms[a as usize].cmp(&dom.atoms[b as usize]));
    for d in rest {
        ids[d as usize] = Some(symbols.intern(dom.atoms[d as usize].clone()));
    }
    let ids: Vec<AtomId> = ids.into_iter().map(|i| i.expect("every atom is numbered")).collect();

    let rules = rules_out
        .into_iter()
        .map(|r| GroundRule { head: remap_head(&r.head, &ids), body: remap_body(&r.body, &ids) })
        .collect();
    let weak = weak_out
        .into_iter()
        .map(|w| GroundWeak { body: remap_body(&w.body, &ids), ..w })
        .collect();
    Ok(GroundProgram { symbols, rules, weak, neural, translated: false })
}

fn remap_head(h: &GroundHead, ids: &[AtomId]) -> GroundHead {
    match h {
        GroundHead::Atom(a) => GroundHead::Atom(ids[a.index()]),
        GroundHead::Constraint => GroundHead::Constraint,
        GroundHead::Choice { elements, lower, upper } => {
            let mut elements: Vec<AtomId> = elements.iter().map(|a| ids[a.index()]).collect();
            elements.sort();
            GroundHead::Choice { elements, lower: *lower, upper: *upper }
        }
    }
}

fn remap_body(body: &[GroundLiteral], ids: &[AtomId]) -> Vec<GroundLiteral> {
    let mut out: Vec<GroundLiteral> = body
        .iter()
        .map(|l| match l {
            GroundLiteral::Pos(a) => GroundLiteral::Pos(ids[a.index()]),
            GroundLiteral::Neg(a) => GroundLiteral::Neg(ids[a.index()]),
            GroundLiteral::Count { negated, aggregate } => {
                let mut elements: Vec<CountElement> = aggregate
                    .elements
                    .iter()
                    .map(|e| {
                        let mut condition: Vec<(AtomId, bool)> =
                            e.condition.iter().map(|&(a, p)| (ids[a.index()], p)).collect();
                        condition.sort();
                        CountElement { tuple: e.tuple.clone(), condition }
                    })
                    .collect();
                elements.sort_by(|a, b| (&a.tuple, &a.condition).cmp(&(&b.tuple, &b.condition)));
                GroundLiteral::Count {
                    negated: *negated,
                    aggregate: GroundCount { elements, op: aggregate.op, bound: aggregate.bound },
                }
            }
        })
        .collect();
    canonical_body(&mut out);
    out
}

/// Grounds observations against a fixed ground program, reusing its
/// atom domain.
pub struct ObservationGrounder {
    dom: Domain,
    ids: Vec<AtomId>,
}

impl ObservationGrounder {
    pub fn new(program: &GroundProgram) -> ObservationGrounder {
        let mut certain = vec![false; program.num_atoms()];
        for r in &program.rules {
            if let (GroundHead::Atom(a), true) = (&r.head, r.body.is_empty()) {
                certain[a.index()] = true;
            }
        }
        let mut dom = Domain::default();
        for (id, atom) in program.symbols.iter() {
            dom.insert(atom.clone(), certain[id.index()]);
        }
        let ids = program.symbols.ids().collect();
        ObservationGrounder { dom, ids }
    }

    pub fn ground(&self, obs: &Observation) -> Result<GroundObservation, GroundError> {
        let em = Emitter { dom: &self.dom, ids: &self.ids };
        let mut out = GroundObservation::default();
        let mut seen = HashSet::new();
        for c in &obs.constraints {
            let rule = compile_rule(c);
            let join = Joiner { dom: &self.dom, rule: &rule.text };
            let mut env: Env = vec![None; rule.nvars];
            join.run(&joinable(&rule.body), &mut env, &mut |env, matched| {
                for body in em.bodies(&rule, env, matched)? {
                    if body.is_empty() {
                        out.unsatisfiable = true;
                    } else if seen.insert(body.clone()) {
                        out.constraints.push(body);
                    }
                }
                Ok(())
            })?;
        }
        Ok(out)
    }
}
