//! Surface language: lexing, parsing and static checks.
//!
//! The accepted grammar is the ASP-Core-2 fragment used by neural answer set
//! programs: normal rules, integrity and weak constraints, choice rules with
//! conditional elements and bounds, `#count` aggregates with a single guard,
//! strong negation (`~a` or `-a`), intervals, integer arithmetic (`+ - * / \`
//! and `|x|`), neural rules `nn(m(e,t1,...,tk),[v1,...,vn]) :- Guard.` and
//! probabilistic rules `p1: a1 | ... | pn: an.`

mod ast;
mod lexer;
mod parser;
mod safety;

pub use ast::*;

use parser::Parser;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsafe variable {var} in rule at line {line}: {rule}")]
    Unsafe { line: usize, var: String, rule: String },
    #[error("neural atom {atom} appears in a rule head at line {line}")]
    NeuralInHead { line: usize, atom: String },
    #[error("invalid neural rule at line {line}: {msg}")]
    InvalidNeural { line: usize, msg: String },
    #[error("invalid probabilistic rule at line {line}: {msg}")]
    InvalidProbabilistic { line: usize, msg: String },
    #[error("observation rule at line {line} has a head; observations may only contain ':- Body.' constraints")]
    ObservationHead { line: usize },
}

impl LangError {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> LangError {
        LangError::Syntax { line, col, msg: msg.into() }
    }
}

/// Parses a program and runs the static checks (safety, neural-rule shape,
/// no neural atoms in rule heads).
pub fn parse_program(text: &str) -> Result<Program, LangError> {
    let (program, lines) = parse_rules(text)?;
    for (rule, &line) in program.rules.iter().zip(&lines) {
        safety::check_rule(rule, line)?;
        check_neural_shape(rule, line)?;
        check_probabilistic(rule, line)?;
    }
    check_neural_heads(&program, &lines)?;
    Ok(program)
}

fn parse_rules(text: &str) -> Result<(Program, Vec<usize>), LangError> {
    let mut p = Parser::new(text)?;
    let mut rules = Vec::new();
    let mut lines = Vec::new();
    while !p.at_end() {
        lines.push(p.line());
        rules.push(p.rule()?);
    }
    Ok((Program { rules }, lines))
}

/// Parses a single observation: every rule must be an integrity constraint.
pub fn parse_observation(text: &str) -> Result<Observation, LangError> {
    let (program, lines) = parse_rules(text)?;
    for (rule, &line) in program.rules.iter().zip(&lines) {
        if rule.head != Head::Constraint {
            return Err(LangError::ObservationHead { line });
        }
        safety::check_rule(rule, line)?;
    }
    Ok(Observation { constraints: program.rules })
}

/// Splits `text` on blank lines and parses each block as one observation.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>, LangError> {
    let mut out = Vec::new();
    let mut block = String::new();
    let mut block_start = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.trim().is_empty() {
                out.push(parse_block(&block, block_start)?);
            }
            block.clear();
            block_start = idx + 1;
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    if !block.trim().is_empty() {
        out.push(parse_block(&block, block_start)?);
    }
    Ok(out)
}

fn parse_block(block: &str, first_line: usize) -> Result<Observation, LangError> {
    parse_observation(block).map_err(|e| shift_line(e, first_line))
}

fn shift_line(e: LangError, by: usize) -> LangError {
    match e {
        LangError::Syntax { line, col, msg } => LangError::Syntax { line: line + by, col, msg },
        LangError::Unsafe { line, var, rule } => LangError::Unsafe { line: line + by, var, rule },
        LangError::ObservationHead { line } => LangError::ObservationHead { line: line + by },
        other => other,
    }
}

/// Parses a comma-separated list of terms, e.g. a data reference `i1,b2`.
pub fn parse_terms(text: &str) -> Result<Vec<Term>, LangError> {
    let src = format!("t({text}).");
    let (program, _) = parse_rules(&src)?;
    match program.rules.as_slice() {
        [Rule { head: Head::Atom(a), body }] if body.is_empty() => Ok(a.args.clone()),
        _ => Err(LangError::syntax(1, 1, format!("not a term list: {text}"))),
    }
}

fn check_neural_shape(rule: &Rule, line: usize) -> Result<(), LangError> {
    let Head::Neural(nn) = &rule.head else { return Ok(()) };
    let bad = |msg: String| Err(LangError::InvalidNeural { line, msg });
    match &nn.events {
        Term::Int(e) if *e < 1 => return bad(format!("event count {e} must be >= 1")),
        Term::Int(_) | Term::Var(_) => {}
        other => return bad(format!("event count must be an integer, got {other}")),
    }
    if nn.outcomes.len() < 2 {
        return bad("a neural atom needs at least two outcomes".into());
    }
    for (i, v) in nn.outcomes.iter().enumerate() {
        if !matches!(v, Term::Int(_) | Term::Sym(_)) {
            return bad(format!("outcome {v} must be a constant"));
        }
        if nn.outcomes[..i].contains(v) {
            return bad(format!("duplicate outcome {v}"));
        }
    }
    for lit in &rule.body {
        if let Literal::Count { .. } = lit {
            return bad("aggregates are not decidable in a neural-rule guard".into());
        }
    }
    Ok(())
}

fn check_probabilistic(rule: &Rule, line: usize) -> Result<(), LangError> {
    let Head::Probabilistic(alts) = &rule.head else { return Ok(()) };
    let bad = |msg: String| Err(LangError::InvalidProbabilistic { line, msg });
    if !rule.body.is_empty() {
        return bad("probabilistic rules cannot have a body".into());
    }
    for (p, a) in alts {
        if !(0.0..=1.0).contains(&p.value) {
            return bad(format!("probability {} outside [0,1]", p.text));
        }
        if !a.args.iter().all(Term::is_ground) {
            return bad(format!("atom {a} is not ground"));
        }
    }
    if alts.len() == 1 {
        // `p: a.` abbreviates `p: a | 1-p: -a.`
        if alts[0].1.strong_neg {
            return bad("the Boolean abbreviation needs a positive atom".into());
        }
        return Ok(());
    }
    let total: f64 = alts.iter().map(|(p, _)| p.value).sum();
    if (total - 1.0).abs() > 1e-9 {
        return bad(format!("probabilities sum to {total}, not 1"));
    }
    Ok(())
}

/// Predicate name and arity of the atoms `m(i,t1..tk,v)` introduced by a
/// neural head.
pub fn neural_signature(nn: &NeuralHead) -> (String, usize) {
    (nn.network.clone(), nn.data.len() + 2)
}

fn check_neural_heads(program: &Program, lines: &[usize]) -> Result<(), LangError> {
    let sigs: Vec<(String, usize)> = program
        .rules
        .iter()
        .filter_map(|r| match &r.head {
            Head::Neural(nn) => Some(neural_signature(nn)),
            _ => None,
        })
        .collect();
    if sigs.is_empty() {
        return Ok(());
    }
    let is_nn = |a: &Atom| !a.strong_neg && sigs.iter().any(|(p, n)| *p == a.predicate && *n == a.args.len());
    for (rule, &line) in program.rules.iter().zip(lines) {
        let offending = match &rule.head {
            Head::Atom(a) => is_nn(a).then(|| a.clone()),
            Head::Choice(ch) => ch.elements.iter().map(|e| &e.atom).find(|a| is_nn(a)).cloned(),
            Head::Probabilistic(alts) => alts.iter().map(|(_, a)| a).find(|a| is_nn(a)).cloned(),
            _ => None,
        };
        if let Some(atom) = offending {
            return Err(LangError::NeuralInHead { line, atom: atom.to_string() });
        }
    }
    Ok(())
}
