//! Grounding: instantiates a program over the atoms it can possibly derive.
//!
//! The grounder computes two sets by fixpoint iteration: the atoms that may be
//! derivable at all, and the atoms that are certain (derived by definite rules
//! from certain atoms). Rule instances are emitted over the first set and
//! simplified against the second. Neural-rule guards and choice-element
//! conditions must be decided by the certain atoms alone.

mod compile;
mod grounder;
mod program;
mod value;

pub use grounder::ObservationGrounder;
pub use program::*;
pub use value::{AtomId, GroundAtom, SymbolTable, Value};

use thiserror::Error;

use crate::lang::{Observation, Program};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("arithmetic error in rule {rule}: {detail}")]
    Arithmetic { rule: String, detail: String },
    #[error("expected a single integer in rule {rule}, got {term}")]
    NonInteger { rule: String, term: String },
    #[error("grounding exceeds {limit} ground rules")]
    TooLarge { limit: usize },
    #[error("the guard of neural rule {rule} is not decided by facts")]
    UndecidableGuard { rule: String },
    #[error("a choice condition in rule {rule} is not decided by facts")]
    UndecidableCondition { rule: String },
    #[error("invalid neural rule {rule}: {msg}")]
    InvalidNeural { rule: String, msg: String },
    #[error("unsafe rule {rule}")]
    Unsafe { rule: String },
    #[error("{what} is not supported in rule {rule}")]
    Unsupported { rule: String, what: String },
}

#[derive(Debug, Clone)]
pub struct GroundConfig {
    /// Maximum number of ground rules before grounding fails.
    pub max_rules: usize,
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig { max_rules: 10_000_000 }
    }
}

pub fn ground(program: &Program) -> Result<GroundProgram, GroundError> {
    ground_with(program, &GroundConfig::default())
}

pub fn ground_with(program: &Program, config: &GroundConfig) -> Result<GroundProgram, GroundError> {
    grounder::ground_program(program, config)
}

/// Grounds one observation against the atoms of `program`. Use
/// [`ObservationGrounder`] when grounding many observations.
pub fn ground_observation(program: &GroundProgram, obs: &Observation) -> Result<GroundObservation, GroundError> {
    ObservationGrounder::new(program).ground(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_observation, parse_program};

    fn g(src: &str) -> GroundProgram {
        ground(&parse_program(src).unwrap()).unwrap()
    }

    const DIGIT: &str = "img(d1).\nimg(d2).\nnn(digit(1,X),[0,1,2,3,4,5,6,7,8,9]) :- img(X).\n\
                         addition(A,B,N) :- digit(0,A,N1), digit(0,B,N2), N=N1+N2.\n";

    #[test]
    fn digit_sigma_nn() {
        let gp = g(DIGIT);
        let sigma = gp.sigma_nn();
        assert_eq!(sigma.len(), 20);
        let names: Vec<String> = sigma.iter().map(|&a| gp.name(a)).collect();
        assert_eq!(names[0], "digit(0,d1,0)");
        assert_eq!(names[9], "digit(0,d1,9)");
        assert_eq!(names[10], "digit(0,d2,0)");
        assert_eq!(gp.neural.len(), 2);
        // addition(A,B,N) for A,B in {d1,d2} and 19 sums each
        let adds = gp.symbols.iter().filter(|(_, a)| &*a.predicate == "addition").count();
        assert_eq!(adds, 4 * 19);
        assert_eq!(gp.rules.iter().filter(|r| r.is_fact()).count(), 2);
    }

    #[test]
    fn interval_facts() {
        let gp = g("p(1..3).");
        let facts: Vec<String> = gp
            .rules
            .iter()
            .filter(|r| r.is_fact())
            .map(|r| gp.rule_source(r))
            .collect();
        assert_eq!(facts, vec!["p(1).", "p(2).", "p(3)."]);
    }

    #[test]
    fn sudoku_entry_shape() {
        let src = "nn(identify(81, img), [empty,1,2,3,4,5,6,7,8,9]).\n\
                   a(R,C,N) :- identify(Pos,img,N), R=Pos/9, C=Pos\\9, N!=empty.\n\
                   {a(R,C,N): N=1..9}=1 :- identify(Pos, img, empty), R=Pos/9, C=Pos\\9.\n\
                   :- a(R,C,N), a(R,C1,N), C!=C1.\n\
                   :- a(R,C,N), a(R1,C,N), R!=R1.\n\
                   :- a(R,C,N), a(R1,C1,N), R!=R1, C!=C1, ((R/3)*3 + C/3) = ((R1/3)*3 + C1/3).";
        let gp = g(src);
        assert_eq!(gp.neural.len(), 1);
        assert_eq!(gp.neural[0].events(), 81);
        assert_eq!(gp.neural[0].outcomes(), 10);
        assert_eq!(gp.symbols.iter().filter(|(_, a)| &*a.predicate == "a").count(), 729);
        let choices = gp.rules.iter().filter(|r| matches!(r.head, GroundHead::Choice { .. })).count();
        assert_eq!(choices, 81);
    }

    #[test]
    fn negation_simplification() {
        let gp = g("a :- not b. b :- not a. c :- not d. e :- not f. f.");
        let src = gp.to_source();
        assert!(src.contains("a :- not b."), "{src}");
        assert!(src.contains("c."), "{src}");
        assert!(!src.contains("e"), "{src}");
    }

    #[test]
    fn division_by_zero_drops_instance() {
        let gp = g("n(0..2). q(X) :- n(X), Y=4/X, Y>0.");
        let qs = gp.symbols.iter().filter(|(_, a)| &*a.predicate == "q").count();
        assert_eq!(qs, 2);
    }

    #[test]
    fn symbol_arithmetic_is_error() {
        let err = ground(&parse_program("p(a). q(Y) :- p(X), Y=X+1.").unwrap()).unwrap_err();
        assert!(matches!(err, GroundError::Arithmetic { .. }), "{err}");
    }

    #[test]
    fn size_cap() {
        let p = parse_program("n(1..100). p(X,Y) :- n(X), n(Y).").unwrap();
        let err = ground_with(&p, &GroundConfig { max_rules: 1000 }).unwrap_err();
        assert_eq!(err, GroundError::TooLarge { limit: 1000 });
    }

    #[test]
    fn undecidable_guard() {
        let p = parse_program("{img(a)}. nn(m(1,X),[0,1]) :- img(X).").unwrap();
        assert!(matches!(ground(&p), Err(GroundError::UndecidableGuard { .. })));
    }

    #[test]
    fn count_aggregate_grounding() {
        let gp = g("n(1..3). {e(X,Y)} :- n(X), n(Y), X<Y. ok(X) :- n(X), #count{Y: e(X,Y)} >= 1.");
        let src = gp.to_source();
        assert!(src.contains("ok(1) :- #count{2:e(1,2);3:e(1,3)}>=1."), "{src}");
        // n(3) has no successors: the aggregate is statically false
        assert!(!src.contains("ok(3)"), "{src}");
    }

    #[test]
    fn probabilistic_boolean_abbreviation() {
        let gp = g("0.1: head.\nwin :- head.\n~win :- not win.");
        assert_eq!(gp.neural.len(), 1);
        let names: Vec<String> = gp.sigma_nn().iter().map(|&a| gp.name(a)).collect();
        assert_eq!(names, vec!["head", "-head"]);
        match &gp.neural[0].source {
            EntrySource::Fixed { probs, .. } => assert_eq!(probs, &vec![0.1, 0.9]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dump_is_idempotent() {
        let srcs = [
            DIGIT,
            "p(1..3). q(X) :- p(X), not r(X). r(2). {s(X): p(X)}=1. :- s(1), q(1). :~ s(X). [X@1, X]",
            "0.3: c(a) | 0.7: c(b).\n0.25: h.\nw :- c(a), h.\n-w :- not w.",
            "n(1..3). {e(X,Y)} :- n(X), n(Y), X!=Y. :- n(X), #count{Y: e(X,Y)} > 1. f(g(X,1)) :- n(X).",
            ":- a. a :- not b. b :- not a.",
        ];
        for src in srcs {
            let gp = g(src);
            let once = gp.to_source();
            let again = g(&once);
            assert_eq!(again.to_source(), once, "source: {src}");
            assert_eq!(again, gp, "source: {src}");
        }
    }

    #[test]
    fn observation_grounding() {
        let gp = g(DIGIT);
        let obs = ground_observation(&gp, &parse_observation(":- not addition(d1,d2,1).").unwrap()).unwrap();
        assert_eq!(obs.constraints.len(), 1);
        assert!(!obs.unsatisfiable);
        let bad = ground_observation(&gp, &parse_observation(":- not addition(d1,d2,30).").unwrap()).unwrap();
        assert!(bad.unsatisfiable);
        let vacuous = ground_observation(&gp, &parse_observation(":- addition(d1,d2,30).").unwrap()).unwrap();
        assert!(vacuous.constraints.is_empty() && !vacuous.unsatisfiable);
    }

    #[test]
    fn observation_with_variables() {
        let gp = g(DIGIT);
        let obs = ground_observation(&gp, &parse_observation(":- digit(0,d1,N), N > 7.").unwrap()).unwrap();
        assert_eq!(obs.constraints.len(), 2);
    }
}
