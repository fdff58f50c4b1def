use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neurasp::experiments::{compile, compile_observation};
use neurasp::semantics::{ModelSet, ProbabilityAssignment};
use neurasp::solve::SolveOptions;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn neurasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurasp")).args(args).output().expect("run binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

/// The probabilities in the first column of a `models` listing.
fn listed(o: &Output) -> Vec<f64> {
    stdout(o).lines().map(|l| l.split_whitespace().next().unwrap().parse().unwrap()).collect()
}

/// The value printed on the first `P(...) = ` line.
fn printed_probability(o: &Output) -> f64 {
    let out = stdout(o);
    let line = out.lines().find(|l| l.starts_with("P(")).expect("probability line");
    line.split(" = ").nth(1).unwrap().split(':').next().unwrap().trim().parse().unwrap()
}

#[test]
fn coin_models() {
    let o = neurasp(&["models", "--program", fixture("coin/program.lp").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let p = listed(&o);
    assert_eq!(p.len(), 2);
    assert!((p[0] - 0.1).abs() < 1e-12 && (p[1] - 0.9).abs() < 1e-12, "{p:?}");
    assert!(stdout(&o).lines().next().unwrap().contains("head win"));
}

#[test]
fn uniform_digit_models_sum_to_one() {
    let o = neurasp(&["models", "--program", fixture("addition/program.lp").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let p = listed(&o);
    assert_eq!(p.len(), 100);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn unsatisfiable_program_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let prog = write(dir.path(), "u.lp", "a :- not a.\n");
    let o = neurasp(&["models", "--program", &prog]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("no stable models"));
}

#[test]
fn infer_coin_and_addition() {
    let coin = fixture("coin/program.lp");
    let o = neurasp(&["infer", "--program", coin.to_str().unwrap(), "--observations", fixture("coin/observations.txt").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("P(O) = 0.900000000000"), "{}", stdout(&o));
    assert!(stdout(&o).contains("MAP(O): -head -win"));

    let o = neurasp(&["infer", "--program", coin.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!((printed_probability(&o) - 1.0).abs() < 1e-12);

    let add = fixture("addition/program.lp");
    let obs = fixture("addition/observations.txt");
    let o = neurasp(&["infer", "--program", add.to_str().unwrap(), "--observations", obs.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!((printed_probability(&o) - 0.02).abs() < 1e-12);
}

#[test]
fn infer_matches_in_process_probability() {
    let src = fs::read_to_string(fixture("addition/program.lp")).unwrap();
    let gp = compile(&src).unwrap();
    let set = ModelSet::enumerate(&gp, &SolveOptions::default()).unwrap();
    let assign = ProbabilityAssignment::uniform(&gp);
    let dir = tempfile::tempdir().unwrap();
    for s in [0, 3, 9, 17] {
        let text = format!(":- not addition(d1,d2,{s}).\n");
        let want = set.observation_probability(&gp, &compile_observation(&gp, &text).unwrap(), &assign).unwrap();
        let obs = write(dir.path(), "o.txt", &text);
        let o = neurasp(&["infer", "--program", fixture("addition/program.lp").to_str().unwrap(), "--observations", &obs]);
        let got = printed_probability(&o);
        assert!((got - want).abs() <= 1e-11 * want, "sum {s}: {got} vs {want}");
    }
}

#[test]
fn impossible_observation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let obs = write(dir.path(), "o.txt", ":- win.\n:- not win.\n");
    let o = neurasp(&["infer", "--program", fixture("coin/program.lp").to_str().unwrap(), "--observations", &obs]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("P(O) = 0"));
}

#[test]
fn several_observations_are_reported_separately() {
    let dir = tempfile::tempdir().unwrap();
    let obs = write(dir.path(), "o.txt", ":- win.\n\n:- not win.\n");
    let o = neurasp(&["infer", "--program", fixture("coin/program.lp").to_str().unwrap(), "--observations", &obs]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("P(O1) = 0.900000000000") && out.contains("P(O2) = 0.100000000000"), "{out}");
}

#[test]
fn usage_and_budget_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.lp", "a :- b(\n");
    let o = neurasp(&["models", "--program", &bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
    assert_eq!(code(&neurasp(&["models"])), 2);
    assert_eq!(code(&neurasp(&["frobnicate"])), 2);
    let sudoku = fixture("sudoku/program.lp");
    let o = neurasp(&["models", "--program", sudoku.to_str().unwrap(), "--max-models", "1", "--conflict-budget", "1"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sampling_frequencies() {
    let o = neurasp(&["sample", "--program", fixture("coin/program.lp").to_str().unwrap(), "--samples", "10000", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let head = out.lines().find(|l| l.ends_with("head win")).unwrap();
    let f: f64 = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((f - 0.1).abs() <= 0.01, "{f}");
}

#[test]
fn coherence_check() {
    let o = neurasp(&["check", "--program", fixture("addition/program.lp").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("total choices 100, checked 100, without a stable model 0"));
    let dir = tempfile::tempdir().unwrap();
    let prog = write(dir.path(), "p.lp", "0.5: a.\n:- a.\n");
    let o = neurasp(&["check", "--program", &prog]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("without a stable model 1"));
}

#[test]
fn learn_writes_metrics_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let prog = write(dir.path(), "p.lp", "nn(flip(1,x),[h,t]).\nwin :- flip(0,x,h).\n");
    let manifest = write(
        dir.path(),
        "flip.toml",
        "name = \"flip\"\ninput = 1\nevents = 1\noutcomes = 2\noutput = \"logistic\"\nbias = false\n\n[data]\nx = \"vec:[1.0]\"\n",
    );
    let obs = write(dir.path(), "o.txt", ":- not win.\n\n:- not win.\n");
    let metrics = dir.path().join("m.csv");
    let out = dir.path().join("w");
    let o = neurasp(&[
        "learn",
        "--program",
        &prog,
        "--networks",
        &manifest,
        "--observations",
        &obs,
        "--epochs",
        "3",
        "--lr",
        "0.5",
        "--metrics",
        metrics.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&metrics).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "run,epoch,metric,value");
    assert_eq!(lines.len(), 5);
    let lls: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(lls.windows(2).all(|w| w[1] >= w[0]), "{lls:?}");
    let weights = format!("flip={}", out.join("flip.naspw").display());
    let o = neurasp(&["infer", "--program", &prog, "--networks", &manifest, "--weights", &weights, "--observations", &obs]);
    assert_eq!(code(&o), 0);
    let trained = printed_probability(&o);
    let o = neurasp(&["infer", "--program", &prog, "--networks", &manifest, "--observations", &obs]);
    let untrained = printed_probability(&o);
    assert!(trained > untrained && trained > lls[lls.len() - 1].exp(), "{trained} vs {untrained}");
}

fn metrics_of(o: &Output, path: &Path) -> Vec<(String, usize, String, f64)> {
    assert_eq!(code(o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn addition_experiment_reports_epoch_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = neurasp(&[
        "experiment",
        "addition",
        "--train-size",
        "20",
        "--epochs",
        "1",
        "--seed",
        "0",
        "--metrics",
        m.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = metrics_of(&o, &m);
    assert!(rows.iter().any(|r| r.1 == 0 && r.2 == "acc_identify"));
    assert!(rows.iter().any(|r| r.1 == 1 && r.2 == "log_likelihood"));
    assert!(dir.path().join("digit.naspw").exists());
}

#[test]
fn spath_experiment_reports_constraint_satisfaction() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = neurasp(&[
        "experiment",
        "spath",
        "--pack",
        "p",
        "--train-size",
        "5",
        "--test-size",
        "4",
        "--epochs",
        "2",
        "--metrics",
        m.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = metrics_of(&o, &m);
    for epoch in 0..=2 {
        assert!(rows.iter().any(|r| r.1 == epoch && r.2 == "constraint_sat_p"), "epoch {epoch}");
    }
    assert!(rows.iter().all(|r| r.2 == "log_likelihood" || (0.0..=1.0).contains(&r.3)));
}

#[test]
fn sudoku_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    let o = neurasp(&["experiment", "sudoku", "--test-size", "5", "--metrics", m.to_str().unwrap()]);
    let rows = metrics_of(&o, &m);
    let full = rows.iter().find(|r| r.0 == "sudoku-standard" && r.2 == "acc_identify").unwrap().3;
    let sol = rows.iter().find(|r| r.0 == "sudoku-standard" && r.2 == "acc_sol").unwrap().3;
    assert_eq!(full, sol);

    let o = neurasp(&[
        "experiment",
        "sudoku-solve",
        "--train-size",
        "2",
        "--test-size",
        "2",
        "--epochs",
        "1",
        "--metrics",
        m.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = metrics_of(&o, &m);
    assert!(rows.iter().any(|r| r.2 == "acc_sol") && rows.iter().any(|r| r.2 == "grid_cell_acc"));
    assert_eq!(code(&neurasp(&["experiment", "sudoku", "--variant", "jigsaw"])), 2);
}

#[test]
fn commonsense_experiment() {
    let o = neurasp(&["experiment", "commonsense"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "toy(i1,b2)\ntoy(i1,b3)\n");
}

#[test]
fn coin_experiment() {
    let o = neurasp(&["experiment", "coin"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("P(O) = 0.900000000000"));
}
