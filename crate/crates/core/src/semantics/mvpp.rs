use std::fmt;

use crate::ground::{ground, GroundProgram};
use crate::lang::parse_program;

use super::ProbabilityAssignment;

/// A multi-valued probabilistic program: one probabilistic rule per neural
/// row, plus the ordinary rules.
#[derive(Debug, Clone, PartialEq)]
pub struct MvppProgram {
    /// Alternatives `(probability, atom)` of each probabilistic rule.
    pub probabilistic: Vec<Vec<(f64, String)>>,
    /// The remaining rules in surface syntax.
    pub rules: String,
}

/// Replaces every neural row by a probabilistic rule carrying the current
/// probabilities. Boolean constants outside the neural rows get the
/// constraint that they take at most one value.
pub fn to_mvpp(gp: &GroundProgram, assign: &ProbabilityAssignment) -> MvppProgram {
    let mut probabilistic = Vec::new();
    let mut rows = 0;
    for e in &gp.neural {
        for row in &e.atoms {
            rows += 1;
            probabilistic.push(row.iter().map(|&a| (assign.get(a).unwrap_or(0.0), gp.name(a))).collect());
        }
    }
    let mut rest = gp.clone();
    rest.neural.clear();
    if gp.translated {
        rest.rules.truncate(gp.rules.len() - rows);
        rest.translated = false;
    }
    let mut rules = rest.to_source();
    for (id, atom) in gp.symbols.iter() {
        if !atom.strong_neg || gp.symbols.is_neural(id) {
            continue;
        }
        if let Some(pos) = gp.symbols.get(&atom.complement()) {
            if !gp.symbols.is_neural(pos) {
                rules.push_str(&format!(":- {}, {}.\n", gp.name(pos), gp.name(id)));
            }
        }
    }
    MvppProgram { probabilistic, rules }
}

impl MvppProgram {
    pub fn to_source(&self) -> String {
        self.to_string()
    }

    /// Parses and grounds the program; its probabilistic rules become fixed
    /// rows of the neural table.
    pub fn ground(&self) -> Result<GroundProgram, crate::Error> {
        Ok(ground(&parse_program(&self.to_source())?)?)
    }
}

impl fmt::Display for MvppProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for alts in &self.probabilistic {
            let parts: Vec<String> = alts.iter().map(|(p, a)| format!("{p}: {a}")).collect();
            writeln!(f, "{}.", parts.join(" | "))?;
        }
        f.write_str(&self.rules)
    }
}
