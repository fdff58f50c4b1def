//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use neurasp::ground::{ground, ground_observation, AtomId, GroundObservation, GroundProgram};
use neurasp::lang::{parse_observation, parse_program};
use neurasp::learn::{chain_gradient, forward, semantic_gradient, Example, GradConvention, Inputs, NetworkSet};
use neurasp::net::{Activation, Binding, DataMap, Mlp, NetSpec};
use neurasp::semantics::{intended_models, ChoiceCounter, ProbabilityAssignment, EPSILON};
use neurasp::solve::{stable_models_bruteforce, translate, SolveOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn program(src: &str) -> GroundProgram {
    translate(&ground(&parse_program(src).unwrap()).unwrap())
}

pub fn observation(gp: &GroundProgram, src: &str) -> GroundObservation {
    ground_observation(gp, &parse_observation(src).unwrap()).unwrap()
}

/// A random program with probabilistic rows `c<k>(v<j>)` and rules over
/// `p0..p4`, plus a random observation. Not necessarily coherent.
pub fn random_program(seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src = String::new();
    let rows = rng.gen_range(1..=3);
    let mut choice_atoms = Vec::new();
    for k in 0..rows {
        let n = rng.gen_range(2..=3);
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=9) as f64).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let last = 1.0 - w[..n - 1].iter().sum::<f64>();
        w[n - 1] = last;
        let alts: Vec<String> = (0..n).map(|j| format!("{}: c{k}(v{j})", w[j])).collect();
        src.push_str(&alts.join(" | "));
        src.push_str(".\n");
        choice_atoms.extend((0..n).map(|j| format!("c{k}(v{j})")));
    }
    let p: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
    let lit = |rng: &mut ChaCha8Rng| -> String {
        if rng.gen_bool(0.5) {
            choice_atoms.choose(rng).unwrap().clone()
        } else {
            let a = p.choose(rng).unwrap().clone();
            if rng.gen_bool(0.3) { format!("not {a}") } else { a }
        }
    };
    for _ in 0..rng.gen_range(2..=7) {
        let body: Vec<String> = (0..rng.gen_range(1..=2)).map(|_| lit(&mut rng)).collect();
        let head = if rng.gen_bool(0.25) {
            format!("{{{}}}", p.choose(&mut rng).unwrap())
        } else {
            p.choose(&mut rng).unwrap().clone()
        };
        src.push_str(&format!("{head} :- {}.\n", body.join(", ")));
    }
    let obs: Vec<String> = (0..rng.gen_range(0..=2)).map(|_| format!(":- {}.", lit(&mut rng))).collect();
    (src, obs.join("\n"))
}

/// Stable models by the reduct oracle, as true-atom sets.
pub fn bruteforce_models(gp: &GroundProgram) -> Vec<Vec<bool>> {
    stable_models_bruteforce(gp)
}

/// The row choices of a model given as truth values.
pub fn row_choice(gp: &GroundProgram, model: &[bool]) -> Vec<AtomId> {
    gp.neural.iter().flat_map(|e| e.atoms.iter()).map(|row| *row.iter().find(|a| model[a.index()]).unwrap()).collect()
}

/// The semantic gradient evaluated directly from its definition over the
/// brute-force models satisfying `obs`, or `None` if no model does.
pub fn bruteforce_gradient(
    gp: &GroundProgram,
    obs: &GroundObservation,
    assign: &ProbabilityAssignment,
) -> Option<BTreeMap<AtomId, f64>> {
    let all = bruteforce_models(gp);
    let mut per_choice: BTreeMap<Vec<AtomId>, usize> = BTreeMap::new();
    for m in &all {
        *per_choice.entry(row_choice(gp, m)).or_default() += 1;
    }
    let sat: Vec<&Vec<bool>> = all.iter().filter(|m| obs.satisfied_by(&|a: AtomId| m[a.index()])).collect();
    if sat.is_empty() {
        return None;
    }
    let p = |a: AtomId| assign.get(a).unwrap().max(EPSILON);
    let prob = |m: &Vec<bool>| {
        let c = row_choice(gp, m);
        c.iter().map(|&a| p(a)).product::<f64>() / per_choice[&c] as f64
    };
    let denom: f64 = sat.iter().map(|m| prob(m)).sum();
    let mut out = BTreeMap::new();
    for row in gp.neural.iter().flat_map(|e| e.atoms.iter()) {
        for &a in row {
            let mut num = 0.0;
            for m in &sat {
                if m[a.index()] {
                    num += prob(m) / p(a);
                } else {
                    let other = *row.iter().find(|b| m[b.index()]).unwrap();
                    num -= prob(m) / p(other);
                }
            }
            out.insert(a, num / denom);
        }
    }
    Some(out)
}

/// Whether every total choice has a stable model, by brute force.
pub fn coherent(gp: &GroundProgram) -> bool {
    let rows: Vec<usize> = gp.neural.iter().flat_map(|e| e.atoms.iter()).map(Vec::len).collect();
    let total: usize = rows.iter().product();
    let seen: std::collections::BTreeSet<Vec<AtomId>> =
        bruteforce_models(gp).iter().map(|m| row_choice(gp, m)).collect();
    seen.len() == total
}

pub fn toy() -> (GroundProgram, NetworkSet, Inputs) {
    let gp = program(
        "img(i1). img(i2).\nnn(f(1,X),[a,b,c]) :- img(X).\n\
         same :- f(0,i1,V), f(0,i2,V).\nlow :- f(0,i1,a).\nlow :- f(0,i2,a).\n{extra} :- f(0,i1,c).",
    );
    let spec = NetSpec { activation: Activation::Tanh, ..NetSpec::new("f", 2, &[3], 1, 3) };
    let mut nets = NetworkSet::default();
    nets.insert(Mlp::new(spec, 4).unwrap());
    let mut d = DataMap::default();
    d.insert("i1", Binding::Input(vec![0.8, -0.3]));
    d.insert("i2", Binding::Input(vec![-0.5, 0.9]));
    (gp, nets, Inputs::from([("f".to_string(), d)]))
}

/// d log P(O) / d theta for every parameter, by the chain rule.
pub fn analytic(gp: &GroundProgram, nets: &NetworkSet, ex: &Example, conv: GradConvention) -> Vec<f64> {
    let opts = SolveOptions::default();
    let (assign, tapes) = forward(gp, nets, &ex.inputs).unwrap();
    let models = intended_models(gp, Some(&ex.obs), &opts).unwrap();
    let counts = ChoiceCounter::new(gp, &opts).counts(&models).unwrap();
    let sg = semantic_gradient(gp, &models, &assign, &counts).unwrap();
    let mlp = &nets.nets["f"];
    let mut total = mlp.params.zeros_like();
    for (e, t) in gp.neural.iter().zip(&tapes) {
        total.add_scaled(&chain_gradient(&sg, e, mlp, t.as_ref().unwrap(), conv).unwrap(), 1.0);
    }
    total.flat()
}

/// A random ground program over `p0..p11` with normal, choice and
/// constraint rules and count aggregates. Positive cycles are common.
pub fn random_asp(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atom = |rng: &mut ChaCha8Rng| format!("p{}", rng.gen_range(0..12));
    let mut out = String::new();
    for _ in 0..rng.gen_range(1..=30) {
        let mut body = Vec::new();
        for _ in 0..rng.gen_range(0..4) {
            if rng.gen_bool(1.0 / 7.0) {
                let elems: Vec<String> = (0..rng.gen_range(1..4))
                    .map(|i| {
                        let a = atom(&mut rng);
                        if rng.gen_bool(0.5) { format!("{i}: not {a}") } else { format!("{i}: {a}") }
                    })
                    .collect();
                let op = if rng.gen_bool(0.5) { ">=" } else { "<=" };
                body.push(format!("#count{{{}}} {op} {}", elems.join("; "), rng.gen_range(0..3)));
            } else {
                let a = atom(&mut rng);
                body.push(if rng.gen_bool(0.5) { format!("not {a}") } else { a });
            }
        }
        let head = match rng.gen_range(0..8) {
            0..=4 => atom(&mut rng),
            5 | 6 => {
                let elems: Vec<String> = (0..rng.gen_range(1..4)).map(|_| atom(&mut rng)).collect();
                let lo = if rng.gen_bool(0.5) { rng.gen_range(0..2).to_string() } else { String::new() };
                let hi = if rng.gen_bool(0.5) { rng.gen_range(1..3).to_string() } else { String::new() };
                format!("{lo}{{{}}}{hi}", elems.join(";"))
            }
            _ if body.is_empty() => continue,
            _ => String::new(),
        };
        out.push_str(&head);
        if !body.is_empty() {
            out.push_str(" :- ");
            out.push_str(&body.join(", "));
        }
        out.push_str(".\n");
    }
    out
}
