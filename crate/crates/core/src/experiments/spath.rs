//! Shortest paths on a 4x4 grid with 24 edges. An instance has two
//! terminals and 8 removed edges; the label is a shortest path between the
//! terminals that avoids the removed edges.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{atoms_of, compile, compile_observation, MetricsRow};
use crate::ground::GroundProgram;
use crate::learn::{self, Example, GradConvention, LearnMode, NetworkSet, OptimizerKind, TrainConfig};
use crate::net::{Activation, Binding, DataMap, Mlp, NetSpec};
use crate::semantics::{map_inference, MapStrategy, OutputMatrix, ProbabilityAssignment};
use crate::solve::{SolveOptions, TotalChoice};
use crate::Error;

pub const NODES: usize = 16;
pub const REMOVED: usize = 8;

/// Edge `i` joins `EDGES[i].0` and `EDGES[i].1`; nodes are numbered row by
/// row.
pub const EDGES: [(usize, usize); 24] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (4, 5),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (12, 13),
    (13, 14),
    (14, 15),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
    (4, 8),
    (5, 9),
    (6, 10),
    (7, 11),
    (8, 12),
    (9, 13),
    (10, 14),
    (11, 15),
];

const PROGRAM: &str = include_str!("../../../../fixtures/spath/program.lp");
const P: &str = include_str!("../../../../fixtures/spath/p.lp");
const R: &str = include_str!("../../../../fixtures/spath/r.lp");
const O: &str = include_str!("../../../../fixtures/spath/o.lp");
const NR: &str = include_str!("../../../../fixtures/spath/nr.lp");

/// Which constraints are added to the base program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pack {
    P,
    PR,
    PRO,
    PRONR,
}

impl Pack {
    pub fn name(self) -> &'static str {
        match self {
            Pack::P => "p",
            Pack::PR => "p-r",
            Pack::PRO => "p-r-o",
            Pack::PRONR => "p-r-o-nr",
        }
    }

    pub fn parse(s: &str) -> Option<Pack> {
        [Pack::P, Pack::PR, Pack::PRO, Pack::PRONR].into_iter().find(|p| p.name() == s)
    }

    fn rules(self) -> Vec<&'static str> {
        match self {
            Pack::P => vec![P],
            Pack::PR => vec![P, R],
            Pack::PRO => vec![P, R, O],
            Pack::PRONR => vec![P, R, O, NR],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub source: usize,
    pub target: usize,
    pub removed: Vec<usize>,
    /// Edge membership of the labelled shortest path.
    pub label: Vec<bool>,
}

impl Instance {
    /// Checks the shape of the instance.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Experiment(m));
        if self.source >= NODES || self.target >= NODES || self.source == self.target {
            return bad(format!("terminals {} and {} are not two distinct nodes", self.source, self.target));
        }
        if self.removed.iter().any(|&e| e >= EDGES.len()) {
            return bad("removed edge out of range".into());
        }
        if self.label.len() != EDGES.len() {
            return bad(format!("label has {} edges, expected {}", self.label.len(), EDGES.len()));
        }
        Ok(())
    }

    pub fn allowed(&self) -> Vec<bool> {
        let mut ok = vec![true; EDGES.len()];
        for &e in &self.removed {
            ok[e] = false;
        }
        ok
    }

    /// Network input: removed-edge flags followed by terminal indicators.
    pub fn input(&self) -> Vec<f64> {
        let mut x = vec![0.0; EDGES.len() + NODES];
        for &e in &self.removed {
            x[e] = 1.0;
        }
        x[EDGES.len() + self.source] = 1.0;
        x[EDGES.len() + self.target] = 1.0;
        x
    }

    /// The instance facts.
    pub fn facts(&self) -> String {
        let mut s = format!("terminal({}).\nterminal({}).\n", self.source, self.target);
        for e in &self.removed {
            s.push_str(&format!("removed({e}).\n"));
        }
        s
    }

    /// The label as an observation fixing every edge.
    pub fn label_observation(&self) -> String {
        self.label
            .iter()
            .enumerate()
            .map(|(e, &on)| if on { format!(":- not sp({e},g,true).\n") } else { format!(":- sp({e},g,true).\n") })
            .collect()
    }
}

/// The program for an instance under a constraint pack.
pub fn program(inst: &Instance, pack: Pack) -> String {
    let mut s = String::from(PROGRAM);
    for r in pack.rules() {
        s.push('\n');
        s.push_str(r);
    }
    s.push('\n');
    s.push_str(&inst.facts());
    s
}

/// Shortest path by breadth-first search over the allowed edges, as edge
/// indices. Neighbours are visited in edge order.
pub fn bfs_path(source: usize, target: usize, allowed: &[bool]) -> Option<Vec<usize>> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; NODES];
    let mut seen = [false; NODES];
    seen[source] = true;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if u == target {
            let mut path = Vec::new();
            let mut v = target;
            while let Some((p, e)) = prev[v] {
                path.push(e);
                v = p;
            }
            path.reverse();
            return Some(path);
        }
        for (e, &(a, b)) in EDGES.iter().enumerate() {
            if !allowed[e] {
                continue;
            }
            let w = if a == u { b } else if b == u { a } else { continue };
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((u, e));
                queue.push_back(w);
            }
        }
    }
    None
}

pub fn bfs_distance(source: usize, target: usize, allowed: &[bool]) -> Option<usize> {
    bfs_path(source, target, allowed).map(|p| p.len())
}

/// Seed-fixed instances whose terminals stay connected after the removals.
pub fn generate_instances(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let source = rng.gen_range(0..NODES);
        let target = loop {
            let t = rng.gen_range(0..NODES);
            if t != source {
                break t;
            }
        };
        let mut edges: Vec<usize> = (0..EDGES.len()).collect();
        edges.shuffle(&mut rng);
        let mut removed = edges[..REMOVED].to_vec();
        removed.sort_unstable();
        let mut inst = Instance { source, target, removed, label: vec![false; EDGES.len()] };
        if let Some(path) = bfs_path(source, target, &inst.allowed()) {
            for e in path {
                inst.label[e] = true;
            }
            out.push(inst);
        }
    }
    out
}

/// Constraint satisfaction of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags {
    /// Simple path(s): counting the link from each terminal to the outside,
    /// no node has exactly one or more than two incident edges.
    pub p: bool,
    /// Every two nodes on the prediction are connected through it.
    pub r: bool,
    /// No removed edge is used.
    pub nr: bool,
    /// A terminal-to-terminal path of minimal length in the graph without
    /// the removed edges.
    pub o: bool,
    /// As `o`, in the full grid.
    pub o_full: bool,
    pub label: bool,
}

impl Flags {
    pub fn path(&self) -> bool {
        self.p && self.r
    }

    pub fn shortest(&self) -> bool {
        self.p && self.r && self.nr && self.o
    }
}

/// Checks a prediction (edge membership) against an instance.
pub fn evaluate_spath(inst: &Instance, pred: &[bool]) -> Result<Flags, Error> {
    inst.validate()?;
    if pred.len() != EDGES.len() {
        return Err(Error::Experiment(format!("prediction has {} edges, expected {}", pred.len(), EDGES.len())));
    }
    // Node 16 stands for the outside, linked to both terminals.
    let outside = NODES;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); NODES + 1];
    for (e, &(a, b)) in EDGES.iter().enumerate() {
        if pred[e] {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for t in [inst.source, inst.target] {
        adj[t].push(outside);
        adj[outside].push(t);
    }
    let p = (0..NODES).all(|v| adj[v].len() != 1 && adj[v].len() < 3);
    let on: Vec<usize> = (0..=NODES).filter(|&v| !adj[v].is_empty()).collect();
    let mut seen = [false; NODES + 1];
    let mut stack = vec![outside];
    seen[outside] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    let r = on.iter().all(|&v| seen[v]);
    let allowed = inst.allowed();
    let nr = pred.iter().zip(&allowed).all(|(&x, &ok)| !x || ok);
    let used = pred.iter().filter(|&&x| x).count();
    let is_path = p && r;
    let o = is_path && Some(used) == bfs_distance(inst.source, inst.target, &allowed);
    let o_full = is_path && Some(used) == bfs_distance(inst.source, inst.target, &[true; 24]);
    Ok(Flags { p, r, nr, o, o_full, label: pred == inst.label.as_slice() })
}

/// The most probable prediction satisfying the pack, given the network's
/// 24x2 output. Weak constraints take priority over the probability.
pub fn predict(gp: &GroundProgram, rows: &[Vec<f64>], opts: &SolveOptions) -> Result<Vec<bool>, Error> {
    let assign = ProbabilityAssignment::new(gp, |_, _| Ok(OutputMatrix { network: "sp".into(), rows: rows.to_vec() }))?;
    let model = map_inference(gp, None, &assign, MapStrategy::Optimize, opts)?;
    let choice = TotalChoice::of(gp, &model).ok_or_else(|| Error::Experiment("model without a total choice".into()))?;
    Ok(choice.0.iter().map(|&o| o == 0).collect())
}

/// The prediction from the raw network output: edge `e` is on when
/// `true` is more likely.
pub fn argmax_prediction(rows: &[Vec<f64>]) -> Vec<bool> {
    rows.iter().map(|r| r[0] > r[1]).collect()
}

/// Edge membership read from the `sp/3` atoms of a model.
pub fn edges_of(gp: &GroundProgram, model: &crate::solve::StableModel) -> Vec<bool> {
    let mut out = vec![false; EDGES.len()];
    for args in atoms_of(gp, model, "sp") {
        if args.len() == 3 && args[2] == "true" {
            if let Ok(e) = args[0].parse::<usize>() {
                out[e] = true;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SpathConfig {
    pub train: usize,
    pub test: usize,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub pack: Pack,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for SpathConfig {
    fn default() -> SpathConfig {
        SpathConfig {
            train: 60,
            test: 20,
            epochs: 10,
            lr: 0.01,
            hidden: vec![64, 64],
            pack: Pack::P,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

pub fn net_spec(hidden: &[usize]) -> NetSpec {
    NetSpec { activation: Activation::Relu, ..NetSpec::new("sp", EDGES.len() + NODES, hidden, EDGES.len(), 2) }
}

fn inputs_for(inst: &Instance) -> learn::Inputs {
    let mut data = DataMap::default();
    data.insert("g", Binding::Input(inst.input()));
    BTreeMap::from([("sp".to_string(), data)])
}

/// Fraction of test instances whose predictions satisfy each constraint,
/// with and without the pack's solver filter.
pub fn evaluate_net(
    mlp: &Mlp,
    instances: &[Instance],
    programs: &[Arc<GroundProgram>],
    run: &str,
    epoch: usize,
) -> Result<Vec<MetricsRow>, Error> {
    let opts = SolveOptions::default();
    let mut raw = Vec::new();
    let mut filtered = Vec::new();
    for (inst, gp) in instances.iter().zip(programs) {
        let (m, _) = mlp.forward(&inst.input())?;
        raw.push(evaluate_spath(inst, &argmax_prediction(&m.rows))?);
        filtered.push(evaluate_spath(inst, &predict(gp, &m.rows, &opts)?)?);
    }
    let mut rows = Vec::new();
    for (suffix, flags) in [("", &raw), ("_filtered", &filtered)] {
        let n = flags.len().max(1) as f64;
        let rate = |f: fn(&Flags) -> bool| flags.iter().filter(|x| f(x)).count() as f64 / n;
        rows.push(MetricsRow::new(run, epoch, &format!("constraint_sat_p{suffix}"), rate(|f| f.p)));
        rows.push(MetricsRow::new(run, epoch, &format!("constraint_sat_r{suffix}"), rate(|f| f.r)));
        rows.push(MetricsRow::new(run, epoch, &format!("constraint_sat_nr{suffix}"), rate(|f| f.nr)));
        rows.push(MetricsRow::new(run, epoch, &format!("label_acc{suffix}"), rate(|f| f.label)));
    }
    Ok(rows)
}

/// Trains the network on the labels under the configured pack and reports
/// test metrics after every epoch (epoch 0 is before training).
pub fn run(cfg: &SpathConfig) -> Result<(Vec<MetricsRow>, Mlp), Error> {
    let all = generate_instances(cfg.train + cfg.test, cfg.seed);
    let (train_set, test_set) = all.split_at(cfg.train);
    let run_id = format!("spath-{}", cfg.pack.name());
    let compile_all = |set: &[Instance]| -> Result<Vec<Arc<GroundProgram>>, Error> {
        set.iter().map(|i| compile(&program(i, cfg.pack)).map(Arc::new)).collect()
    };
    let train_programs = compile_all(train_set)?;
    let test_programs = compile_all(test_set)?;
    let mut examples = Vec::with_capacity(train_set.len());
    for (inst, gp) in train_set.iter().zip(&train_programs) {
        let obs = compile_observation(gp, &inst.label_observation())?;
        examples.push(Example::with_program(obs, inputs_for(inst), gp.clone()));
    }
    let mut nets = NetworkSet::default();
    nets.insert(Mlp::new(net_spec(&cfg.hidden), cfg.seed)?);
    let mut rows = evaluate_net(&nets.nets["sp"], test_set, &test_programs, &run_id, 0)?;
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        mode: LearnMode::Exact,
        seed: cfg.seed,
        convention: GradConvention::Paper,
        optimizer: cfg.optimizer,
        ..TrainConfig::default()
    };
    let mut failure = None;
    learn::train(&train_programs[0], &examples, &mut nets, &tc, |stats, nets| {
        rows.push(MetricsRow::new(&run_id, stats.epoch, "log_likelihood", stats.mean_log_likelihood));
        match evaluate_net(&nets.nets["sp"], test_set, &test_programs, &run_id, stats.epoch) {
            Ok(r) => rows.extend(r),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((rows, nets.nets.remove("sp").expect("trained network")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> Instance {
        let mut i = Instance { source: 0, target: 15, removed: vec![2, 5, 7, 9, 13, 16, 20, 22], label: vec![] };
        i.label = vec![false; 24];
        for e in bfs_path(0, 15, &i.allowed()).unwrap() {
            i.label[e] = true;
        }
        i
    }

    #[test]
    fn label_satisfies_everything() {
        let i = inst();
        let f = evaluate_spath(&i, &i.label).unwrap();
        assert!(f.p && f.r && f.nr && f.o && f.label, "{f:?}");
    }

    #[test]
    fn degree_three_breaks_p() {
        let i = inst();
        let mut pred = i.label.clone();
        let node_on_path = EDGES[pred.iter().position(|&x| x).unwrap()].1;
        let extra = (0..24).find(|&e| !pred[e] && (EDGES[e].0 == node_on_path || EDGES[e].1 == node_on_path)).unwrap();
        pred[extra] = true;
        assert!(!evaluate_spath(&i, &pred).unwrap().p);
    }

    #[test]
    fn removed_edge_breaks_nr() {
        let i = inst();
        let mut pred = i.label.clone();
        pred[i.removed[0]] = true;
        assert!(!evaluate_spath(&i, &pred).unwrap().nr);
    }

    #[test]
    fn empty_prediction_is_not_a_path() {
        let f = evaluate_spath(&inst(), &[false; 24]).unwrap();
        assert!(!f.p && !f.o);
    }

    #[test]
    fn malformed_instances() {
        let mut i = inst();
        i.target = 0;
        assert!(evaluate_spath(&i, &[false; 24]).is_err());
        assert!(evaluate_spath(&inst(), &[false; 3]).is_err());
    }

    #[test]
    fn generator_is_seeded() {
        let a = generate_instances(5, 3);
        assert_eq!(a, generate_instances(5, 3));
        for i in &a {
            assert_eq!(i.removed.len(), REMOVED);
            assert!(evaluate_spath(i, &i.label).unwrap().shortest());
        }
    }

    #[test]
    fn solver_prediction_is_a_shortest_path() {
        let i = inst();
        let gp = compile(&program(&i, Pack::PRO)).unwrap();
        let rows = vec![vec![0.5, 0.5]; 24];
        let pred = predict(&gp, &rows, &SolveOptions::default()).unwrap();
        let f = evaluate_spath(&i, &pred).unwrap();
        assert!(f.p && f.r && f.o_full, "{f:?} {pred:?}");
        let gp = compile(&program(&i, Pack::PRONR)).unwrap();
        let f = evaluate_spath(&i, &predict(&gp, &rows, &SolveOptions::default()).unwrap()).unwrap();
        assert!(f.shortest(), "{f:?}");
    }
}
