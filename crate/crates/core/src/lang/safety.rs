use super::ast::*;
use super::LangError;

/// Variables that a positive occurrence of `t` can bind by matching.
fn binding_vars(t: &Term, out: &mut Vec<String>) {
    match t {
        Term::Var(v) => {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        Term::Func(_, args) => args.iter().for_each(|a| binding_vars(a, out)),
        _ => {}
    }
}

fn all_bound(t: &Term, bound: &[String]) -> bool {
    let mut vs = Vec::new();
    t.vars(&mut vs);
    vs.iter().all(|v| bound.contains(v))
}

/// Extends `bound` with everything the literals can bind, to a fixpoint.
fn close(lits: &[Literal], bound: &mut Vec<String>) {
    loop {
        let before = bound.len();
        for lit in lits {
            match lit {
                Literal::Atom { negated: false, atom } => {
                    atom.args.iter().for_each(|a| binding_vars(a, bound));
                }
                Literal::Cmp { op: CmpOp::Eq, lhs, rhs } => {
                    for (var_side, other) in [(lhs, rhs), (rhs, lhs)] {
                        if let Term::Var(v) = var_side {
                            if !bound.contains(v) && all_bound(other, bound) {
                                bound.push(v.clone());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        if bound.len() == before {
            return;
        }
    }
}

fn first_unbound(vars: &[String], bound: &[String]) -> Option<String> {
    vars.iter().find(|v| !bound.contains(v)).cloned()
}

pub(crate) fn check_rule(rule: &Rule, line: usize) -> Result<(), LangError> {
    let mut bound = Vec::new();
    close(&rule.body, &mut bound);

    let unsafe_var = |var: String| LangError::Unsafe { line, var, rule: rule.to_string() };

    for lit in &rule.body {
        match lit {
            Literal::Atom { .. } | Literal::Cmp { .. } => {
                let mut vs = Vec::new();
                lit.vars(&mut vs);
                if let Some(v) = first_unbound(&vs, &bound) {
                    return Err(unsafe_var(v));
                }
            }
            Literal::Count { aggregate, .. } => {
                let mut vs = Vec::new();
                aggregate.bound.vars(&mut vs);
                if let Some(v) = first_unbound(&vs, &bound) {
                    return Err(unsafe_var(v));
                }
                for el in &aggregate.elements {
                    check_conditional(&el.terms, &el.condition, &bound).map_err(unsafe_var)?;
                }
            }
        }
    }

    let mut head_vars = Vec::new();
    match &rule.head {
        Head::Atom(a) => a.vars(&mut head_vars),
        Head::Choice(ch) => {
            for t in ch.lower.iter().chain(ch.upper.iter()) {
                t.vars(&mut head_vars);
            }
            for el in &ch.elements {
                check_conditional(&el.atom.args, &el.condition, &bound).map_err(unsafe_var)?;
            }
        }
        Head::Weak(w) => {
            w.weight.vars(&mut head_vars);
            w.level.vars(&mut head_vars);
            w.terms.iter().for_each(|t| t.vars(&mut head_vars));
        }
        Head::Neural(nn) => {
            nn.events.vars(&mut head_vars);
            nn.data.iter().for_each(|t| t.vars(&mut head_vars));
            nn.outcomes.iter().for_each(|t| t.vars(&mut head_vars));
        }
        Head::Probabilistic(alts) => alts.iter().for_each(|(_, a)| a.vars(&mut head_vars)),
        Head::Constraint => {}
    }
    if let Some(v) = first_unbound(&head_vars, &bound) {
        return Err(unsafe_var(v));
    }
    Ok(())
}

/// Checks `terms : condition` where the condition may bind local variables.
fn check_conditional(terms: &[Term], condition: &[Literal], global: &[String]) -> Result<(), String> {
    let mut local = global.to_vec();
    close(condition, &mut local);
    let mut vs = Vec::new();
    terms.iter().for_each(|t| t.vars(&mut vs));
    condition.iter().for_each(|l| l.vars(&mut vs));
    match first_unbound(&vs, &local) {
        Some(v) => Err(v),
        None => Ok(()),
    }
}
