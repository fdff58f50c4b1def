//! Reference semantics by exhaustive search, for testing the solver.

use crate::ground::{AtomId, GroundCount, GroundHead, GroundLiteral, GroundProgram, Value};

/// Checks that `interp` is a stable model of `gp`: it satisfies every rule
/// and equals the least fixpoint of the rules applied under the reduct.
pub fn check_stable_bruteforce(gp: &GroundProgram, interp: &[bool]) -> bool {
    let truth = |a: AtomId| interp[a.index()];
    for r in &gp.rules {
        if !r.body_holds(&truth) {
            continue;
        }
        match &r.head {
            GroundHead::Atom(h) => {
                if !interp[h.index()] {
                    return false;
                }
            }
            GroundHead::Constraint => return false,
            GroundHead::Choice { elements, lower, upper } => {
                let k = elements.iter().filter(|a| interp[a.index()]).count() as i64;
                if lower.is_some_and(|l| k < l) || upper.is_some_and(|u| k > u) {
                    return false;
                }
            }
        }
    }
    for (id, atom) in gp.symbols.iter() {
        if atom.strong_neg && interp[id.index()] {
            if let Some(p) = gp.symbols.get(&atom.complement()) {
                if interp[p.index()] {
                    return false;
                }
            }
        }
    }
    // Least fixpoint of the reduct: negative literals and negated aggregates
    // are read from `interp`, positive ones from the growing set.
    let mut derived = vec![false; interp.len()];
    loop {
        let mut changed = false;
        for r in &gp.rules {
            let heads: Vec<AtomId> = match &r.head {
                GroundHead::Atom(h) => vec![*h],
                GroundHead::Choice { elements, .. } => elements.iter().copied().filter(|a| interp[a.index()]).collect(),
                GroundHead::Constraint => continue,
            };
            if heads.iter().all(|h| derived[h.index()]) {
                continue;
            }
            let fires = r.body.iter().all(|l| match l {
                GroundLiteral::Pos(a) => derived[a.index()],
                GroundLiteral::Neg(a) => !interp[a.index()],
                GroundLiteral::Count { negated: true, aggregate } => !aggregate.holds(truth),
                GroundLiteral::Count { negated: false, aggregate } => {
                    aggregate.holds(truth) && reduct_count_holds(aggregate, &derived, interp)
                }
            });
            if fires {
                for h in heads {
                    if !derived[h.index()] {
                        derived[h.index()] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    derived.iter().zip(interp).all(|(d, i)| d == i)
}

/// Evaluates an aggregate with positive conditions read from the derived
/// atoms and negative ones from the candidate.
fn reduct_count_holds(agg: &GroundCount, derived: &[bool], interp: &[bool]) -> bool {
    let mut tuples: Vec<&Vec<Value>> = agg
        .elements
        .iter()
        .filter(|e| e.condition.iter().all(|&(a, p)| if p { derived[a.index()] } else { !interp[a.index()] }))
        .map(|e| &e.tuple)
        .collect();
    tuples.sort();
    tuples.dedup();
    agg.op.eval(&(tuples.len() as i64), &agg.bound)
}

/// All stable models by enumerating every interpretation. Only for small
/// programs.
pub fn stable_models_bruteforce(gp: &GroundProgram) -> Vec<Vec<bool>> {
    let n = gp.num_atoms();
    assert!(n <= 24, "brute force is limited to 24 atoms");
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << n) {
        let interp: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if check_stable_bruteforce(gp, &interp) {
            out.push(interp);
        }
    }
    out
}
