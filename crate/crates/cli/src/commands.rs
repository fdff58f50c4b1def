//! The subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use neurasp::experiments::{self, addition, commonsense, spath, sudoku, MetricsRow};
use neurasp::ground::{GroundError, GroundObservation};
use neurasp::learn::{self, log_likelihood, sample_stable_models, Example, GradConvention, LearnError, LearnMode, OptimizerKind, TrainConfig};
use neurasp::net::{save_params, Mlp};
use neurasp::semantics::{
    check_coherence, intended_models, map_inference, model_probability, ChoiceCounter, CoherenceMode, MapStrategy,
    ProbabilityAssignment, SemanticsError,
};
use neurasp::solve::{SolveError, SolveOptions, StableModel};
use neurasp::Error;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::load::Loaded;
use crate::{Cli, Command, Common, ConventionArg, ExperimentArgs, ExperimentName, MapArg, ModeArg, OptimizerArg, Status, TrainArgs};

const COIN: &str = include_str!("../../../fixtures/coin/program.lp");
const COIN_OBS: &str = include_str!("../../../fixtures/coin/observations.txt");

pub fn run(cli: Cli) -> Result<Status> {
    let common = match &cli.command {
        Command::Models(c) => c,
        Command::Infer { common, .. }
        | Command::Sample { common, .. }
        | Command::Check { common, .. }
        | Command::Learn { common, .. }
        | Command::Experiment { common, .. } => common,
    };
    if common.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(common.jobs).build_global().context("thread pool")?;
    match cli.command {
        Command::Models(c) => models(&c.load()?, &c.solve_options()),
        Command::Infer { common, map } => {
            let l = common.load()?;
            let obs = common.observations(&l.gp)?;
            infer(&l, &obs, map, &common.solve_options())
        }
        Command::Sample { common, samples } => sample(&common, samples),
        Command::Check { common, samples } => check(&common, samples),
        Command::Learn { common, train } => learn_cmd(&common, &train),
        Command::Experiment { name, common, train, exp } => experiment(name, &common, &train, &exp),
    }
}

/// Exit status for an error: 3 when a resource limit was hit, 2 otherwise.
pub fn status_of(e: &anyhow::Error) -> Status {
    fn solve(e: &SolveError) -> bool {
        matches!(e, SolveError::Budget { .. })
    }
    fn semantics(e: &SemanticsError) -> bool {
        match e {
            SemanticsError::TooManyChoices { .. } => true,
            SemanticsError::Solve(s) => solve(s),
            _ => false,
        }
    }
    fn learn(e: &LearnError) -> bool {
        match e {
            LearnError::SampleCap { .. } => true,
            LearnError::Semantics(s) => semantics(s),
            LearnError::Solve(s) => solve(s),
            _ => false,
        }
    }
    let budget = e.chain().any(|c| {
        if let Some(x) = c.downcast_ref::<Error>() {
            match x {
                Error::Solve(s) => solve(s),
                Error::Semantics(s) => semantics(s),
                Error::Learn(l) => learn(l),
                Error::Ground(g) => matches!(g, GroundError::TooLarge { .. }),
                _ => false,
            }
        } else if let Some(x) = c.downcast_ref::<SolveError>() {
            solve(x)
        } else if let Some(x) = c.downcast_ref::<SemanticsError>() {
            semantics(x)
        } else if let Some(x) = c.downcast_ref::<LearnError>() {
            learn(x)
        } else if let Some(x) = c.downcast_ref::<GroundError>() {
            matches!(x, GroundError::TooLarge { .. })
        } else {
            false
        }
    });
    if budget {
        Status::Budget
    } else {
        Status::Usage
    }
}

/// `p` with 12 significant digits.
pub fn sig12(p: f64) -> String {
    if p == 0.0 || !p.is_finite() {
        return p.to_string();
    }
    let digits = 11 - p.abs().log10().floor() as i32;
    if (0..=20).contains(&digits) {
        format!("{p:.*}", digits as usize)
    } else {
        format!("{p:.11e}")
    }
}

fn render(l: &Loaded, m: &StableModel) -> String {
    let mut s = m.names(&l.gp).join(" ");
    if !m.cost.is_empty() {
        s.push_str(&format!("  cost {:?}", m.cost));
    }
    s
}

fn all_models(opts: &SolveOptions) -> SolveOptions {
    SolveOptions { max_models: None, ..opts.clone() }
}

fn models(l: &Loaded, opts: &SolveOptions) -> Result<Status> {
    let assign = l.assignment()?;
    let found = intended_models(&l.gp, None, opts)?;
    if found.is_empty() {
        println!("no stable models");
        return Ok(Status::Empty);
    }
    let counts = ChoiceCounter::new(&l.gp, &all_models(opts)).counts(&found)?;
    let mut total = 0.0;
    for m in &found {
        let p = model_probability(&l.gp, m, &assign, &counts)?;
        total += p;
        println!("{}  {}", sig12(p), render(l, m));
    }
    eprintln!("{} models, total probability {}", found.len(), sig12(total));
    Ok(Status::Ok)
}

fn observation_probability(
    l: &Loaded,
    obs: &GroundObservation,
    assign: &ProbabilityAssignment,
    opts: &SolveOptions,
) -> Result<f64> {
    let opts = all_models(opts);
    let found = intended_models(&l.gp, Some(obs), &opts)?;
    let counts = ChoiceCounter::new(&l.gp, &opts).counts(&found)?;
    let mut p = 0.0;
    for m in &found {
        p += model_probability(&l.gp, m, assign, &counts)?;
    }
    Ok(p)
}

fn infer(l: &Loaded, obs: &[GroundObservation], map: MapArg, opts: &SolveOptions) -> Result<Status> {
    let assign = l.assignment()?;
    let empty = [GroundObservation { constraints: Vec::new(), unsatisfiable: false }];
    let obs = if obs.is_empty() { &empty[..] } else { obs };
    let strategy = match map {
        MapArg::Enumerate => MapStrategy::Enumerate,
        MapArg::Optimize => MapStrategy::Optimize,
        MapArg::Auto => MapStrategy::default(),
    };
    let mut status = Status::Ok;
    for (i, o) in obs.iter().enumerate() {
        let label = if obs.len() == 1 { "O".to_string() } else { format!("O{}", i + 1) };
        let p = observation_probability(l, o, &assign, opts)?;
        if p == 0.0 {
            println!("P({label}) = 0: no stable model satisfies the observation");
            status = Status::Empty;
            continue;
        }
        println!("P({label}) = {}", sig12(p));
        let best = map_inference(&l.gp, Some(o), &assign, strategy, opts)?;
        println!("MAP({label}): {}", render(l, &best));
    }
    Ok(status)
}

fn sample(common: &Common, n: usize) -> Result<Status> {
    let l = common.load()?;
    let assign = l.assignment()?;
    let obs = common.observations(&l.gp)?;
    if obs.len() > 1 {
        bail!("sampling takes at most one observation, got {}", obs.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let drawn = sample_stable_models(&l.gp, obs.first(), &assign, n, &mut rng, &common.solve_options())?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for m in &drawn {
        *tally.entry(render(&l, m)).or_default() += 1;
    }
    let mut rows: Vec<(String, usize)> = tally.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for (model, k) in rows {
        println!("{k}  {}  {model}", sig12(k as f64 / drawn.len() as f64));
    }
    Ok(Status::Ok)
}

fn check(common: &Common, samples: Option<usize>) -> Result<Status> {
    let l = common.load()?;
    let mode = match samples {
        Some(choices) => CoherenceMode::Sampled { choices, seed: common.seed },
        None => CoherenceMode::Exhaustive,
    };
    let r = check_coherence(&l.gp, mode, &common.solve_options())?;
    let total = if r.total_choices == u128::MAX { "over 2^128".to_string() } else { r.total_choices.to_string() };
    println!("total choices {total}, checked {}, without a stable model {}", r.checked, r.incoherent.len());
    for c in r.incoherent.iter().take(10) {
        let names: Vec<String> = c.atoms(&l.gp).into_iter().map(|a| l.gp.name(a)).collect();
        println!("  {}", names.join(" "));
    }
    Ok(if r.is_coherent() { Status::Ok } else { Status::Empty })
}

impl TrainArgs {
    fn config(&self, seed: u64, opts: &SolveOptions) -> TrainConfig {
        TrainConfig {
            lr: self.lr.unwrap_or(0.1),
            epochs: self.epochs.unwrap_or(1),
            mode: self.mode(),
            samples: self.samples,
            seed,
            opt_mode: opts.opt_mode,
            conflict_budget: opts.conflict_budget,
            convention: self.convention(),
            optimizer: self.optimizer(OptimizerKind::Sgd),
            batch: self.batch,
        }
    }

    fn mode(&self) -> LearnMode {
        match self.mode {
            ModeArg::Exact => LearnMode::Exact,
            ModeArg::Sampled => LearnMode::Sampled,
        }
    }

    fn convention(&self) -> GradConvention {
        match self.grad_convention {
            ConventionArg::Paper => GradConvention::Paper,
            ConventionArg::Jacobian => GradConvention::SoftmaxJacobian,
        }
    }

    fn optimizer(&self, default: OptimizerKind) -> OptimizerKind {
        match self.optimizer {
            Some(OptimizerArg::Sgd) => OptimizerKind::Sgd,
            Some(OptimizerArg::Adam) => OptimizerKind::Adam,
            None => default,
        }
    }

    fn emit(&self, rows: &[MetricsRow]) -> Result<()> {
        match &self.metrics {
            Some(p) => experiments::write_metrics(p, rows).with_context(|| format!("cannot write {}", p.display())),
            None => {
                print!("{}", experiments::metrics_csv(rows));
                Ok(())
            }
        }
    }
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn save(dir: &Path, mlp: &Mlp) -> Result<()> {
    let path = dir.join(format!("{}.naspw", mlp.spec.name));
    save_params(&mlp.params, &path)?;
    eprintln!("weights written to {}", path.display());
    Ok(())
}

fn learn_cmd(common: &Common, train: &TrainArgs) -> Result<Status> {
    let mut l = common.load()?;
    for e in &l.gp.neural {
        if let Some(name) = e.network() {
            if l.nets.get(name).is_none() {
                bail!("network {name} needs a manifest with a trainable network");
            }
        }
    }
    let obs = common.observations(&l.gp)?;
    if obs.is_empty() {
        bail!("learning needs --observations");
    }
    let examples: Vec<Example> = obs.into_iter().map(|o| Example::new(o, l.inputs.clone())).collect();
    let opts = common.solve_options();
    let cfg = train.config(common.seed, &opts);
    let lls: Vec<f64> = examples
        .iter()
        .map(|ex| log_likelihood(&l.gp, &l.nets, ex, &all_models(&opts)))
        .collect::<Result<_, _>>()?;
    let finite: Vec<f64> = lls.into_iter().filter(|v| v.is_finite()).collect();
    let mut rows = Vec::new();
    if !finite.is_empty() {
        rows.push(MetricsRow::new("learn", 0, "log_likelihood", finite.iter().sum::<f64>() / finite.len() as f64));
    }
    learn::train(&l.gp, &examples, &mut l.nets, &cfg, |s, _| {
        rows.push(MetricsRow::new("learn", s.epoch, "log_likelihood", s.mean_log_likelihood));
    })?;
    train.emit(&rows)?;
    let dir = out_dir(common)?;
    for mlp in l.nets.nets.values() {
        save(&dir, mlp)?;
    }
    Ok(Status::Ok)
}

fn experiment(name: ExperimentName, common: &Common, train: &TrainArgs, exp: &ExperimentArgs) -> Result<Status> {
    let seed = common.seed;
    match name {
        ExperimentName::Coin => {
            let l = common.load_source(COIN, "coin")?;
            let status = models(&l, &common.solve_options())?;
            let obs = experiments::compile_observation(&l.gp, COIN_OBS)?;
            infer(&l, &[obs], MapArg::Auto, &common.solve_options()).map(|s| if s == Status::Ok { status } else { s })
        }
        ExperimentName::Addition => {
            let d = addition::AdditionConfig::default();
            let cfg = addition::AdditionConfig {
                data_dir: exp.data.clone().unwrap_or(d.data_dir),
                pairs: exp.train_size.unwrap_or(d.pairs),
                epochs: train.epochs.unwrap_or(d.epochs),
                lr: train.lr.unwrap_or(d.lr),
                seed,
                mode: train.mode(),
                samples: train.samples,
                optimizer: train.optimizer(d.optimizer),
                convention: train.convention(),
                batch: train.batch,
                ..d
            };
            let (rows, mlp) = addition::run(&cfg)?;
            train.emit(&rows)?;
            save(&out_dir(common)?, &mlp)?;
            Ok(Status::Ok)
        }
        ExperimentName::Sudoku => {
            let variant = sudoku::Variant::parse(&exp.variant)
                .with_context(|| format!("unknown variant {}; expected standard, anti-knight, sudoku-x or offset", exp.variant))?;
            let boards = sudoku::generate_boards(exp.test_size.unwrap_or(50), variant, 30, seed);
            let r = sudoku::noise_experiment(&boards, exp.noise, seed)?;
            let run = format!("sudoku-{}", variant.name());
            let rows = vec![
                MetricsRow::new(&format!("{run}-network"), 0, "acc_identify", r.network),
                MetricsRow::new(&format!("{run}-without-fill"), 0, "acc_identify", r.without_fill),
                MetricsRow::new(&run, 0, "acc_identify", r.full),
                MetricsRow::new(&run, 0, "acc_sol", r.acc_sol),
            ];
            train.emit(&rows)?;
            Ok(Status::Ok)
        }
        ExperimentName::SudokuSolve => {
            let d = sudoku::SolveConfig::default();
            let cfg = sudoku::SolveConfig {
                train: exp.train_size.unwrap_or(d.train),
                test: exp.test_size.unwrap_or(d.test),
                epochs: train.epochs.unwrap_or(d.epochs),
                lr: train.lr.unwrap_or(d.lr),
                seed,
                ..d
            };
            let (rows, mlp) = sudoku::run_solve(&cfg)?;
            train.emit(&rows)?;
            save(&out_dir(common)?, &mlp)?;
            Ok(Status::Ok)
        }
        ExperimentName::Spath => {
            let pack = spath::Pack::parse(&exp.pack)
                .with_context(|| format!("unknown pack {}; expected p, p-r, p-r-o or p-r-o-nr", exp.pack))?;
            let d = spath::SpathConfig::default();
            let cfg = spath::SpathConfig {
                train: exp.train_size.unwrap_or(d.train),
                test: exp.test_size.unwrap_or(d.test),
                epochs: train.epochs.unwrap_or(d.epochs),
                lr: train.lr.unwrap_or(d.lr),
                pack,
                seed,
                optimizer: train.optimizer(d.optimizer),
                ..d
            };
            let (rows, mlp) = spath::run(&cfg)?;
            train.emit(&rows)?;
            save(&out_dir(common)?, &mlp)?;
            Ok(Status::Ok)
        }
        ExperimentName::Commonsense => {
            let toys = commonsense::toys()?;
            for (image, b) in &toys {
                println!("toy({image},{b})");
            }
            Ok(if toys.is_empty() { Status::Empty } else { Status::Ok })
        }
    }
}
