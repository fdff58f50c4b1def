//! Experiment harnesses: data generators, evaluation oracles and runners
//! for the bundled example programs.

pub mod addition;
pub mod commonsense;
pub mod spath;
pub mod sudoku;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::ground::{ground, ground_observation, AtomId, GroundObservation, GroundProgram};
use crate::lang::{parse_observation, parse_program};
use crate::solve::{translate, StableModel};
use crate::Error;

/// Directory of the bundled digit images.
pub fn default_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits")
}

/// Parses, grounds and translates a program.
pub fn compile(src: &str) -> Result<GroundProgram, Error> {
    Ok(translate(&ground(&parse_program(src)?)?))
}

pub fn compile_observation(gp: &GroundProgram, src: &str) -> Result<GroundObservation, Error> {
    Ok(ground_observation(gp, &parse_observation(src)?)?)
}

/// The true atoms of `model` with the given predicate, as argument lists.
pub fn atoms_of(gp: &GroundProgram, model: &StableModel, predicate: &str) -> Vec<Vec<String>> {
    model
        .atoms()
        .map(|a: AtomId| gp.symbols.atom(a))
        .filter(|a| a.predicate.as_ref() == predicate && !a.strong_neg)
        .map(|a| a.args.iter().map(ToString::to_string).collect())
        .collect()
}

/// One metric value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: String,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

impl MetricsRow {
    pub fn new(run: &str, epoch: usize, metric: &str, value: f64) -> MetricsRow {
        MetricsRow { run: run.to_string(), epoch, metric: metric.to_string(), value }
    }
}

/// Rows as CSV with the header `run,epoch,metric,value`.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("run,epoch,metric,value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.run, r.epoch, r.metric, r.value);
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    fs::write(path, metrics_csv(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let rows = [MetricsRow::new("a", 1, "acc", 0.5), MetricsRow::new("a", 2, "acc", 0.75)];
        assert_eq!(metrics_csv(&rows), "run,epoch,metric,value\na,1,acc,0.5\na,2,acc,0.75\n");
    }
}
