use std::fmt;
use std::sync::Arc;

use crate::lang::CmpOp;

use super::value::{AtomId, SymbolTable, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountElement {
    pub tuple: Vec<Value>,
    /// Conjunction of atom literals; `(atom, true)` is positive.
    pub condition: Vec<(AtomId, bool)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundCount {
    pub elements: Vec<CountElement>,
    pub op: CmpOp,
    pub bound: i64,
}

impl GroundCount {
    /// Evaluates the aggregate under a total assignment.
    pub fn holds(&self, truth: impl Fn(AtomId) -> bool) -> bool {
        let mut tuples: Vec<&Vec<Value>> = self
            .elements
            .iter()
            .filter(|e| e.condition.iter().all(|&(a, pos)| truth(a) == pos))
            .map(|e| &e.tuple)
            .collect();
        tuples.sort();
        tuples.dedup();
        self.op.eval(&(tuples.len() as i64), &self.bound)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundLiteral {
    Pos(AtomId),
    Neg(AtomId),
    Count { negated: bool, aggregate: GroundCount },
}

impl GroundLiteral {
    pub fn holds(&self, truth: &impl Fn(AtomId) -> bool) -> bool {
        match self {
            GroundLiteral::Pos(a) => truth(*a),
            GroundLiteral::Neg(a) => !truth(*a),
            GroundLiteral::Count { negated, aggregate } => aggregate.holds(truth) != *negated,
        }
    }

    /// Every atom the literal mentions.
    pub fn atoms(&self, out: &mut Vec<AtomId>) {
        match self {
            GroundLiteral::Pos(a) | GroundLiteral::Neg(a) => out.push(*a),
            GroundLiteral::Count { aggregate, .. } => {
                for e in &aggregate.elements {
                    out.extend(e.condition.iter().map(|&(a, _)| a));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundHead {
    Atom(AtomId),
    Choice { elements: Vec<AtomId>, lower: Option<i64>, upper: Option<i64> },
    Constraint,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundRule {
    pub head: GroundHead,
    pub body: Vec<GroundLiteral>,
}

impl GroundRule {
    pub fn body_holds(&self, truth: &impl Fn(AtomId) -> bool) -> bool {
        self.body.iter().all(|l| l.holds(truth))
    }

    pub fn is_fact(&self) -> bool {
        matches!(self.head, GroundHead::Atom(_)) && self.body.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundWeak {
    pub body: Vec<GroundLiteral>,
    pub weight: i64,
    pub level: i64,
    pub terms: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntrySource {
    /// Probabilities come from the named network applied to `data`.
    Network { name: Arc<str>, data: Vec<Value>, outcomes: Vec<Value> },
    /// A probabilistic rule with fixed probabilities, one per outcome.
    Fixed { probs: Vec<f64>, texts: Vec<String> },
}

/// One ground neural rule (or probabilistic rule): `events` independent
/// random variables, each ranging over the same outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralEntry {
    pub source: EntrySource,
    /// `atoms[i][j]` is the atom for event `i` taking outcome `j`.
    pub atoms: Vec<Vec<AtomId>>,
}

impl NeuralEntry {
    pub fn events(&self) -> usize {
        self.atoms.len()
    }

    pub fn outcomes(&self) -> usize {
        self.atoms.first().map_or(0, Vec::len)
    }

    pub fn network(&self) -> Option<&str> {
        match &self.source {
            EntrySource::Network { name, .. } => Some(name),
            EntrySource::Fixed { .. } => None,
        }
    }

    pub fn data(&self) -> &[Value] {
        match &self.source {
            EntrySource::Network { data, .. } => data,
            EntrySource::Fixed { .. } => &[],
        }
    }
}

/// A ground program. Atom ids are dense; the neural atoms come first, in
/// `sigma_nn` order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundProgram {
    pub symbols: SymbolTable,
    pub rules: Vec<GroundRule>,
    pub weak: Vec<GroundWeak>,
    pub neural: Vec<NeuralEntry>,
    /// Whether the neural entries have been replaced by choice rules.
    pub translated: bool,
}

impl GroundProgram {
    /// All neural atoms ordered by (network, data term, event index, outcome
    /// index). Probabilistic-rule atoms follow the neural ones.
    pub fn sigma_nn(&self) -> Vec<AtomId> {
        self.neural.iter().flat_map(|e| e.atoms.iter().flatten().copied()).collect()
    }

    pub fn num_atoms(&self) -> usize {
        self.symbols.len()
    }

    pub fn name(&self, id: AtomId) -> String {
        self.symbols.atom(id).to_string()
    }

    /// Whether any rule body or weak constraint contains default negation or
    /// an aggregate; such programs may have several models per choice.
    pub fn has_negation(&self) -> bool {
        self.rules
            .iter()
            .flat_map(|r| r.body.iter())
            .chain(self.weak.iter().flat_map(|w| w.body.iter()))
            .any(|l| !matches!(l, GroundLiteral::Pos(_)))
    }

    /// Renders the program in the surface syntax; parsing and grounding the
    /// result gives back the same ground program.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for e in &self.neural {
            out.push_str(&self.entry_source(e));
            out.push('\n');
        }
        for r in &self.rules {
            out.push_str(&self.rule_source(r));
            out.push('\n');
        }
        for w in &self.weak {
            out.push_str(":~ ");
            out.push_str(&self.body_source(&w.body));
            if w.body.is_empty() {
                out.push_str("0=0");
            }
            out.push_str(&format!(". [{}@{}", w.weight, w.level));
            for t in &w.terms {
                out.push_str(&format!(",{t}"));
            }
            out.push_str("]\n");
        }
        out
    }

    fn entry_source(&self, e: &NeuralEntry) -> String {
        match &e.source {
            EntrySource::Network { name, data, outcomes } => {
                let mut s = format!("nn({name}({}", e.events());
                for d in data {
                    s.push_str(&format!(",{d}"));
                }
                s.push_str("),[");
                let outs: Vec<String> = outcomes.iter().map(Value::to_string).collect();
                s.push_str(&outs.join(","));
                s.push_str("]).");
                s
            }
            EntrySource::Fixed { texts, .. } => {
                let alts: Vec<String> = texts
                    .iter()
                    .zip(&e.atoms[0])
                    .map(|(p, &a)| format!("{p}: {}", self.name(a)))
                    .collect();
                format!("{}.", alts.join(" | "))
            }
        }
    }

    pub fn rule_source(&self, r: &GroundRule) -> String {
        let mut s = match &r.head {
            GroundHead::Atom(a) => self.name(*a),
            GroundHead::Constraint => String::new(),
            GroundHead::Choice { elements, lower, upper } => {
                let elems: Vec<String> = elements.iter().map(|&a| self.name(a)).collect();
                let set = format!("{{{}}}", elems.join(";"));
                match (lower, upper) {
                    (Some(l), Some(u)) if l == u => format!("{set}={l}"),
                    _ => format!(
                        "{}{set}{}",
                        lower.map(|l| l.to_string()).unwrap_or_default(),
                        upper.map(|u| u.to_string()).unwrap_or_default()
                    ),
                }
            }
        };
        if matches!(r.head, GroundHead::Constraint) {
            s.push_str(":- ");
            s.push_str(&self.body_source(&r.body));
            if r.body.is_empty() {
                s.push_str("0=0");
            }
        } else if !r.body.is_empty() {
            s.push_str(" :- ");
            s.push_str(&self.body_source(&r.body));
        }
        s.push('.');
        s
    }

    fn body_source(&self, body: &[GroundLiteral]) -> String {
        let lits: Vec<String> = body.iter().map(|l| self.literal_source(l)).collect();
        lits.join(", ")
    }

    fn literal_source(&self, l: &GroundLiteral) -> String {
        match l {
            GroundLiteral::Pos(a) => self.name(*a),
            GroundLiteral::Neg(a) => format!("not {}", self.name(*a)),
            GroundLiteral::Count { negated, aggregate } => {
                let elems: Vec<String> = aggregate
                    .elements
                    .iter()
                    .map(|e| {
                        let tuple: Vec<String> = e.tuple.iter().map(Value::to_string).collect();
                        let mut s = tuple.join(",");
                        if !e.condition.is_empty() {
                            let cond: Vec<String> = e
                                .condition
                                .iter()
                                .map(|&(a, pos)| if pos { self.name(a) } else { format!("not {}", self.name(a)) })
                                .collect();
                            s.push(':');
                            s.push_str(&cond.join(","));
                        }
                        s
                    })
                    .collect();
                format!(
                    "{}#count{{{}}}{}{}",
                    if *negated { "not " } else { "" },
                    elems.join(";"),
                    aggregate.op.symbol(),
                    aggregate.bound
                )
            }
        }
    }
}

impl fmt::Display for GroundProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

/// A ground observation: a set of constraint bodies, none of which may hold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundObservation {
    pub constraints: Vec<Vec<GroundLiteral>>,
    /// Set when a constraint body is already true in every interpretation.
    pub unsatisfiable: bool,
}

impl GroundObservation {
    pub fn satisfied_by(&self, truth: &impl Fn(AtomId) -> bool) -> bool {
        !self.unsatisfiable && self.constraints.iter().all(|body| !body.iter().all(|l| l.holds(truth)))
    }
}
