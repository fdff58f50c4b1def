//! Rules with variables replaced by slot indices, plus term evaluation and
//! pattern matching against ground values.

use std::collections::HashMap;
use std::sync::Arc;

use crate::lang::{ArithOp, Atom, CmpOp, Head, Literal, Prob, Rule, Term};

use super::value::{GroundAtom, Value};

pub(crate) type Env = Vec<Option<Value>>;

#[derive(Debug, Clone)]
pub(crate) enum CTerm {
    Val(Value),
    Var(usize),
    Bin(ArithOp, Box<CTerm>, Box<CTerm>),
    Neg(Box<CTerm>),
    Abs(Box<CTerm>),
    Interval(Box<CTerm>, Box<CTerm>),
    Func(Arc<str>, Vec<CTerm>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct PredKey {
    pub name: Arc<str>,
    pub strong_neg: bool,
    pub arity: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct CAtom {
    pub key: PredKey,
    pub args: Vec<CTerm>,
}

#[derive(Debug, Clone)]
pub(crate) struct CElem {
    pub terms: Vec<CTerm>,
    pub cond: Vec<CLit>,
}

#[derive(Debug, Clone)]
pub(crate) enum CLit {
    Pos(CAtom),
    Neg(CAtom),
    Cmp(CmpOp, CTerm, CTerm),
    Count { negated: bool, elems: Vec<CElem>, op: CmpOp, bound: CTerm },
}

impl CLit {
    /// Literals the join enumerates; the rest are evaluated once the global
    /// variables are bound.
    pub fn is_joinable(&self) -> bool {
        matches!(self, CLit::Pos(_) | CLit::Cmp(..))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CChoiceElem {
    pub atom: CAtom,
    pub cond: Vec<CLit>,
}

#[derive(Debug, Clone)]
pub(crate) enum CHead {
    Atom(CAtom),
    Choice { elems: Vec<CChoiceElem>, lower: Option<CTerm>, upper: Option<CTerm> },
    Constraint,
    Weak { weight: CTerm, level: CTerm, terms: Vec<CTerm> },
    Neural { network: Arc<str>, events: CTerm, data: Vec<CTerm>, outcomes: Vec<Value> },
    Prob(Vec<(Prob, GroundAtom)>),
}

#[derive(Debug, Clone)]
pub(crate) struct CRule {
    pub text: String,
    pub head: CHead,
    pub body: Vec<CLit>,
    pub nvars: usize,
}

impl CRule {
    pub fn has_nonmonotone_body(&self) -> bool {
        self.body.iter().any(|l| !l.is_joinable())
    }
}

#[derive(Default)]
struct VarMap {
    slots: HashMap<String, usize>,
    next: usize,
}

impl VarMap {
    fn slot(&mut self, name: &str) -> usize {
        if name == "_" {
            self.next += 1;
            return self.next - 1;
        }
        if let Some(&s) = self.slots.get(name) {
            return s;
        }
        self.slots.insert(name.to_string(), self.next);
        self.next += 1;
        self.next - 1
    }
}

fn term(t: &Term, vm: &mut VarMap) -> CTerm {
    match t {
        Term::Int(i) => CTerm::Val(Value::Int(*i)),
        Term::Sym(s) => CTerm::Val(Value::sym(s)),
        Term::Var(v) => CTerm::Var(vm.slot(v)),
        Term::Binary(op, a, b) => CTerm::Bin(*op, Box::new(term(a, vm)), Box::new(term(b, vm))),
        Term::Neg(a) => CTerm::Neg(Box::new(term(a, vm))),
        Term::Abs(a) => CTerm::Abs(Box::new(term(a, vm))),
        Term::Interval(a, b) => CTerm::Interval(Box::new(term(a, vm)), Box::new(term(b, vm))),
        Term::Func(name, args) => {
            let args: Vec<CTerm> = args.iter().map(|a| term(a, vm)).collect();
            if args.iter().all(|a| matches!(a, CTerm::Val(_))) {
                let vals: Vec<Value> = args
                    .into_iter()
                    .map(|a| match a {
                        CTerm::Val(v) => v,
                        _ => unreachable!(),
                    })
                    .collect();
                CTerm::Val(Value::Func(Arc::from(name.as_str()), vals.into()))
            } else {
                CTerm::Func(Arc::from(name.as_str()), args)
            }
        }
    }
}

pub(crate) fn ground_atom_of(a: &Atom) -> Option<GroundAtom> {
    let mut vm = VarMap::default();
    let c = atom(a, &mut vm);
    let mut args = Vec::new();
    for t in &c.args {
        match t {
            CTerm::Val(v) => args.push(v.clone()),
            _ => return None,
        }
    }
    Some(GroundAtom { predicate: c.key.name, strong_neg: a.strong_neg, args })
}

fn atom(a: &Atom, vm: &mut VarMap) -> CAtom {
    CAtom {
        key: PredKey { name: Arc::from(a.predicate.as_str()), strong_neg: a.strong_neg, arity: a.args.len() },
        args: a.args.iter().map(|t| term(t, vm)).collect(),
    }
}

fn literal(l: &Literal, vm: &mut VarMap) -> CLit {
    match l {
        Literal::Atom { negated: false, atom: a } => CLit::Pos(atom(a, vm)),
        Literal::Atom { negated: true, atom: a } => CLit::Neg(atom(a, vm)),
        Literal::Cmp { op, lhs, rhs } => CLit::Cmp(*op, term(lhs, vm), term(rhs, vm)),
        Literal::Count { negated, aggregate } => CLit::Count {
            negated: *negated,
            elems: aggregate
                .elements
                .iter()
                .map(|e| CElem {
                    terms: e.terms.iter().map(|t| term(t, vm)).collect(),
                    cond: e.condition.iter().map(|c| literal(c, vm)).collect(),
                })
                .collect(),
            op: aggregate.op,
            bound: term(&aggregate.bound, vm),
        },
    }
}

/// Compiles a rule. Variables local to aggregate or choice elements get
/// their own slots, so the same name in two elements does not join.
pub(crate) fn compile_rule(rule: &Rule) -> CRule {
    let mut vm = VarMap::default();
    // Global variables: those of non-aggregate body literals and bounds.
    let mut global = Vec::new();
    for l in &rule.body {
        match l {
            Literal::Count { aggregate, .. } => aggregate.bound.vars(&mut global),
            other => other.vars(&mut global),
        }
    }
    for v in &global {
        vm.slot(v);
    }
    let base = vm.slots.clone();
    let local_scope = |vm: &mut VarMap| {
        vm.slots = base.clone();
    };

    let mut body = Vec::new();
    for l in &rule.body {
        if let Literal::Count { .. } = l {
            let mut elems_lit = literal(l, &mut vm);
            // Re-scope each element separately.
            if let (CLit::Count { elems, .. }, Literal::Count { aggregate, .. }) = (&mut elems_lit, l) {
                for (ce, e) in elems.iter_mut().zip(&aggregate.elements) {
                    local_scope(&mut vm);
                    ce.terms = e.terms.iter().map(|t| term(t, &mut vm)).collect();
                    ce.cond = e.condition.iter().map(|c| literal(c, &mut vm)).collect();
                }
            }
            local_scope(&mut vm);
            body.push(elems_lit);
        } else {
            body.push(literal(l, &mut vm));
        }
    }

    let head = match &rule.head {
        Head::Atom(a) => CHead::Atom(atom(a, &mut vm)),
        Head::Constraint => CHead::Constraint,
        Head::Choice(ch) => {
            let mut elems = Vec::new();
            for e in &ch.elements {
                local_scope(&mut vm);
                elems.push(CChoiceElem {
                    atom: atom(&e.atom, &mut vm),
                    cond: e.condition.iter().map(|c| literal(c, &mut vm)).collect(),
                });
            }
            local_scope(&mut vm);
            CHead::Choice {
                elems,
                lower: ch.lower.as_ref().map(|t| term(t, &mut vm)),
                upper: ch.upper.as_ref().map(|t| term(t, &mut vm)),
            }
        }
        Head::Weak(w) => CHead::Weak {
            weight: term(&w.weight, &mut vm),
            level: term(&w.level, &mut vm),
            terms: w.terms.iter().map(|t| term(t, &mut vm)).collect(),
        },
        Head::Neural(nn) => CHead::Neural {
            network: Arc::from(nn.network.as_str()),
            events: term(&nn.events, &mut vm),
            data: nn.data.iter().map(|t| term(t, &mut vm)).collect(),
            outcomes: nn
                .outcomes
                .iter()
                .map(|t| match term(t, &mut vm) {
                    CTerm::Val(v) => v,
                    _ => unreachable!("outcomes are checked to be constants"),
                })
                .collect(),
        },
        Head::Probabilistic(alts) => CHead::Prob(
            alts.iter()
                .map(|(p, a)| (p.clone(), ground_atom_of(a).expect("probabilistic atoms are ground")))
                .collect(),
        ),
    };
    CRule { text: rule.to_string(), head, body, nvars: vm.next }
}

impl CTerm {
    pub fn is_computed(&self) -> bool {
        match self {
            CTerm::Val(_) | CTerm::Var(_) => false,
            CTerm::Func(_, args) => args.iter().any(CTerm::is_computed),
            _ => true,
        }
    }

    pub fn is_bound(&self, env: &Env) -> bool {
        match self {
            CTerm::Val(_) => true,
            CTerm::Var(i) => env[*i].is_some(),
            CTerm::Bin(_, a, b) | CTerm::Interval(a, b) => a.is_bound(env) && b.is_bound(env),
            CTerm::Neg(a) | CTerm::Abs(a) => a.is_bound(env),
            CTerm::Func(_, args) => args.iter().all(|a| a.is_bound(env)),
        }
    }

    /// The single value of a bound, non-computed term.
    pub fn value(&self, env: &Env) -> Option<Value> {
        match self {
            CTerm::Val(v) => Some(v.clone()),
            CTerm::Var(i) => env[*i].clone(),
            CTerm::Func(name, args) => {
                let vals: Option<Vec<Value>> = args.iter().map(|a| a.value(env)).collect();
                vals.map(|v| Value::Func(name.clone(), v.into()))
            }
            _ => None,
        }
    }

    /// All values of a bound term (intervals make it multi-valued). Division
    /// by zero yields no value.
    pub fn eval(&self, env: &Env) -> Result<Vec<Value>, String> {
        match self {
            CTerm::Val(v) => Ok(vec![v.clone()]),
            CTerm::Var(i) => Ok(vec![env[*i].clone().expect("evaluated an unbound variable")]),
            CTerm::Bin(op, a, b) => {
                let (xs, ys) = (ints(a, env)?, ints(b, env)?);
                let mut out = Vec::new();
                for &x in &xs {
                    for &y in &ys {
                        let r = match op {
                            ArithOp::Add => x.checked_add(y),
                            ArithOp::Sub => x.checked_sub(y),
                            ArithOp::Mul => x.checked_mul(y),
                            ArithOp::Div => x.checked_div(y),
                            ArithOp::Mod => x.checked_rem(y),
                        };
                        match r {
                            Some(v) => out.push(Value::Int(v)),
                            None if y == 0 && matches!(op, ArithOp::Div | ArithOp::Mod) => {}
                            None => return Err(format!("integer overflow in {x}{}{y}", op.symbol())),
                        }
                    }
                }
                Ok(out)
            }
            CTerm::Neg(a) => Ok(ints(a, env)?.into_iter().map(|x| Value::Int(-x)).collect()),
            CTerm::Abs(a) => Ok(ints(a, env)?.into_iter().map(|x| Value::Int(x.abs())).collect()),
            CTerm::Interval(a, b) => {
                let (xs, ys) = (ints(a, env)?, ints(b, env)?);
                let mut out = Vec::new();
                for &lo in &xs {
                    for &hi in &ys {
                        out.extend((lo..=hi).map(Value::Int));
                    }
                }
                Ok(out)
            }
            CTerm::Func(name, args) => {
                let mut acc: Vec<Vec<Value>> = vec![Vec::new()];
                for a in args {
                    let vals = a.eval(env)?;
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
                Ok(acc.into_iter().map(|v| Value::Func(name.clone(), v.into())).collect())
            }
        }
    }

    /// Matches the term against `v`, binding unbound variables and recording
    /// them on `trail`. The caller undoes the trail on failure.
    pub fn matches(&self, v: &Value, env: &mut Env, trail: &mut Vec<usize>) -> Result<bool, String> {
        match self {
            CTerm::Val(x) => Ok(x == v),
            CTerm::Var(i) => match &env[*i] {
                Some(x) => Ok(x == v),
                None => {
                    env[*i] = Some(v.clone());
                    trail.push(*i);
                    Ok(true)
                }
            },
            CTerm::Func(name, args) if !self.is_computed() => match v {
                Value::Func(n2, a2) if n2 == name && a2.len() == args.len() => {
                    for (t, x) in args.iter().zip(a2.iter()) {
                        if !t.matches(x, env, trail)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                _ => Ok(false),
            },
            _ => Ok(self.eval(env)?.contains(v)),
        }
    }
}

fn ints(t: &CTerm, env: &Env) -> Result<Vec<i64>, String> {
    t.eval(env)?
        .into_iter()
        .map(|v| match v {
            Value::Int(i) => Ok(i),
            other => Err(format!("arithmetic on non-integer term {other}")),
        })
        .collect()
}

pub(crate) fn undo(env: &mut Env, trail: &mut Vec<usize>, mark: usize) {
    for i in trail.drain(mark..) {
        env[i] = None;
    }
}
