use super::*;
use crate::ground::{ground, ground_observation};
use crate::lang::{parse_observation, parse_program};
use crate::solve::translate;

fn g(src: &str) -> GroundProgram {
    translate(&ground(&parse_program(src).unwrap()).unwrap())
}

fn obs(gp: &GroundProgram, src: &str) -> GroundObservation {
    ground_observation(gp, &parse_observation(src).unwrap()).unwrap()
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

const COIN: &str = "0.1: head.\nwin :- head.\n~win :- not win.";
const DIGIT: &str = "img(d1).\nimg(d2).\nnn(digit(1,X),[0,1,2,3,4,5,6,7,8,9]) :- img(X).\n\
                     addition(A,B,N) :- digit(0,A,N1), digit(0,B,N2), N=N1+N2.\n";

fn atom(gp: &GroundProgram, name: &str) -> AtomId {
    gp.symbols.find(name).unwrap_or_else(|| panic!("no atom {name}"))
}

#[test]
fn coin_probabilities() {
    let gp = g(COIN);
    let assign = ProbabilityAssignment::uniform(&gp);
    assert_eq!(atom_probability(&assign, atom(&gp, "head")).unwrap(), 0.1);
    let set = ModelSet::enumerate(&gp, &opts()).unwrap();
    let probs = set.probabilities(&gp, &assign).unwrap();
    assert_eq!(set.models[0].names(&gp), vec!["head", "win"]);
    assert!((probs[0] - 0.1).abs() < 1e-12);
    assert!((probs[1] - 0.9).abs() < 1e-12);
    let o = obs(&gp, ":- win.");
    assert!((set.observation_probability(&gp, &o, &assign).unwrap() - 0.9).abs() < 1e-12);
    let both = observations_probability(&gp, &[o.clone(), o], &set.models, &assign, &set.counts).unwrap();
    assert!((both - 0.81).abs() < 1e-12);
    assert_eq!(observations_probability(&gp, &[], &set.models, &assign, &set.counts).unwrap(), 1.0);
    let empty = obs(&gp, "");
    assert!((set.observation_probability(&gp, &empty, &assign).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn digit_uniform_matches_bruteforce() {
    let gp = g(DIGIT);
    let assign = ProbabilityAssignment::uniform(&gp);
    assert_eq!(atom_probability(&assign, atom(&gp, "digit(0,d1,7)")).unwrap(), 0.1);
    let set = ModelSet::enumerate(&gp, &opts()).unwrap();
    assert_eq!(set.models.len(), 100);
    for p in set.probabilities(&gp, &assign).unwrap() {
        assert!((p - 0.01).abs() < 1e-12);
    }
    let o = obs(&gp, ":- not addition(d1,d2,1).");
    let got = set.observation_probability(&gp, &o, &assign).unwrap();
    // every pair of digits is one total choice of weight 0.1 * 0.1
    let mut want = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            if i + j == 1 {
                want += 0.1 * 0.1;
            }
        }
    }
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!((got - 0.02).abs() < 1e-12);
}

#[test]
fn extra_choice_halves_probability() {
    let gp = g(&format!("{DIGIT}{{extra}}."));
    let assign = ProbabilityAssignment::uniform(&gp);
    let set = ModelSet::enumerate(&gp, &opts()).unwrap();
    assert_eq!(set.models.len(), 200);
    for p in set.probabilities(&gp, &assign).unwrap() {
        assert!((p - 0.005).abs() < 1e-12);
    }
    let mut counter = ChoiceCounter::new(&gp, &opts());
    assert_eq!(counter.counts(&set.models).unwrap(), set.counts);
}

#[test]
fn floor_applies_to_zero_entries() {
    let gp = g("nn(f(1,t),[a,b]).");
    let assign = ProbabilityAssignment::new(&gp, |_, _| Ok(OutputMatrix { network: "f".into(), rows: vec![vec![0.0, 1.0]] })).unwrap();
    assert_eq!(atom_probability(&assign, atom(&gp, "f(0,t,a)")).unwrap(), 1e-6);
    assert_eq!(assign.get(atom(&gp, "f(0,t,a)")), Some(0.0));
    let bad = ProbabilityAssignment::new(&gp, |_, _| Ok(OutputMatrix { network: "f".into(), rows: vec![vec![0.5, 0.6]] }));
    assert!(matches!(bad, Err(SemanticsError::BadMatrix { .. })));
    assert!(matches!(atom_probability(&assign, AtomId(99)), Err(SemanticsError::UnknownAtom(99))));
}

#[test]
fn coherence() {
    let coin = g(COIN);
    let r = check_coherence(&coin, CoherenceMode::Exhaustive, &opts()).unwrap();
    assert_eq!((r.total_choices, r.checked), (2, 2));
    assert!(r.is_coherent());
    let bad = g("nn(f(1,t),[a,b]). :- f(0,t,a).");
    let r = check_coherence(&bad, CoherenceMode::Exhaustive, &opts()).unwrap();
    assert_eq!(r.incoherent, vec![TotalChoice(vec![0])]);
    let plain = g("a :- not b. b :- not a.");
    let r = check_coherence(&plain, CoherenceMode::Exhaustive, &opts()).unwrap();
    assert!(r.is_coherent() && r.total_choices == 1);
    let digit = g(DIGIT);
    let r = check_coherence(&digit, CoherenceMode::Sampled { choices: 20, seed: 3 }, &opts()).unwrap();
    assert_eq!(r.checked, 20);
    assert!(r.is_coherent());
}

#[test]
fn coherence_guard() {
    let big = g("n(1..7). nn(f(1,X),[0,1,2,3,4,5,6,7,8,9]) :- n(X).");
    assert!(matches!(
        check_coherence(&big, CoherenceMode::Exhaustive, &opts()),
        Err(SemanticsError::TooManyChoices { count: 10_000_000, .. })
    ));
}

#[test]
fn mvpp_translation() {
    let gp = g(DIGIT);
    let assign = ProbabilityAssignment::uniform(&gp);
    let m = to_mvpp(&gp, &assign);
    assert_eq!(m.probabilistic.len(), 2);
    assert!(m.probabilistic.iter().all(|r| r.len() == 10));
    assert!(!m.rules.contains("nn("));
    let plain = g("a :- not b.");
    assert!(to_mvpp(&plain, &ProbabilityAssignment::uniform(&plain)).probabilistic.is_empty());
}

/// Probabilities through the MVPP program, keyed by sorted atom names.
fn via_mvpp(gp: &GroundProgram, assign: &ProbabilityAssignment) -> Vec<(Vec<String>, f64)> {
    let m = to_mvpp(gp, assign).ground().unwrap();
    let m = translate(&m);
    let a = ProbabilityAssignment::uniform(&m);
    let set = ModelSet::enumerate(&m, &opts()).unwrap();
    let mut out: Vec<(Vec<String>, f64)> =
        set.models.iter().zip(set.probabilities(&m, &a).unwrap()).map(|(x, p)| (x.names(&m), p)).collect();
    out.iter_mut().for_each(|(n, _)| n.sort());
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn direct(gp: &GroundProgram, assign: &ProbabilityAssignment) -> Vec<(Vec<String>, f64)> {
    let set = ModelSet::enumerate(gp, &opts()).unwrap();
    let mut out: Vec<(Vec<String>, f64)> =
        set.models.iter().zip(set.probabilities(gp, assign).unwrap()).map(|(x, p)| (x.names(gp), p)).collect();
    out.iter_mut().for_each(|(n, _)| n.sort());
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn mvpp_agrees_with_direct_semantics() {
    for src in [COIN, DIGIT, "0.3: c(a) | 0.7: c(b).\n0.25: h.\nw :- c(a), h.\n-w :- not w.\n{x} :- w."] {
        let gp = g(src);
        let assign = ProbabilityAssignment::new(&gp, |_, e| {
            let n = e.outcomes();
            let row: Vec<f64> = (0..n).map(|j| (j + 1) as f64 / (n * (n + 1) / 2) as f64).collect();
            Ok(OutputMatrix { network: String::new(), rows: vec![row; e.events()] })
        })
        .unwrap();
        let d = direct(&gp, &assign);
        let v = via_mvpp(&gp, &assign);
        assert_eq!(d.len(), v.len(), "{src}");
        for ((dn, dp), (vn, vp)) in d.iter().zip(&v) {
            assert_eq!(dn, vn);
            assert!((dp - vp).abs() < 1e-12, "{src}: {dp} vs {vp}");
        }
    }
}

#[test]
fn map_inference_modes() {
    let gp = g(COIN);
    let assign = ProbabilityAssignment::uniform(&gp);
    for s in [MapStrategy::Enumerate, MapStrategy::Optimize, MapStrategy::default()] {
        let m = map_inference(&gp, None, &assign, s, &opts()).unwrap();
        assert_eq!(m.names(&gp), vec!["-head", "-win"], "{s:?}");
    }
    let fair = g("0.5: head.\nwin :- head.\n~win :- not win.");
    let m = map_inference(&fair, None, &ProbabilityAssignment::uniform(&fair), MapStrategy::Enumerate, &opts()).unwrap();
    assert_eq!(m.names(&fair), vec!["head", "win"]);
    let o = obs(&gp, ":- not win.");
    let m = map_inference(&gp, Some(&o), &assign, MapStrategy::Optimize, &opts()).unwrap();
    assert_eq!(m.names(&gp), vec!["head", "win"]);
    let none = g("0.1: head. :- head. :- not head.");
    assert_eq!(
        map_inference(&none, None, &ProbabilityAssignment::uniform(&none), MapStrategy::Enumerate, &opts()),
        Err(SemanticsError::NoModels)
    );
}

#[test]
fn map_prefers_weak_levels() {
    // the likelier choice pays a weak-constraint cost
    let gp = g("0.8: a.\nb :- not a.\n:~ a. [1@1]");
    let assign = ProbabilityAssignment::uniform(&gp);
    for s in [MapStrategy::Enumerate, MapStrategy::Optimize] {
        let m = map_inference(&gp, None, &assign, s, &opts()).unwrap();
        assert_eq!(m.names(&gp), vec!["-a", "b"], "{s:?}");
    }
    let all = SolveOptions { opt_mode: OptMode::All, ..opts() };
    let m = map_inference(&gp, None, &assign, MapStrategy::Optimize, &all).unwrap();
    assert_eq!(m.names(&gp), vec!["a"]);
}

#[test]
fn weak_constraints_act_within_a_choice() {
    let gp = g("0.4: a.\n{b; c}=1.\n:~ b. [1@0]\n:~ c, a. [2@0]");
    let set = ModelSet::enumerate(&gp, &opts()).unwrap();
    let names: Vec<Vec<String>> = set.models.iter().map(|m| m.names(&gp)).collect();
    assert_eq!(names, vec![vec!["a", "b"], vec!["-a", "c"]]);
    let total: f64 = set.probabilities(&gp, &ProbabilityAssignment::uniform(&gp)).unwrap().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn csv_report() {
    let csv = probability_csv(&[0.1, 0.9], &[false, true]);
    assert_eq!(csv, "model_id,probability,satisfies_observation\n0,0.1,false\n1,0.9,true\n");
}

#[test]
fn long_products_use_logs() {
    let p = product(vec![0.5; 40]);
    assert!((p - 0.5f64.powi(40)).abs() < 1e-24);
    assert_eq!(product(vec![0.5, 0.0]), 0.0);
}
