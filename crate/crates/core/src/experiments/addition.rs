//! Digit addition: a digit classifier trained from pairs of images labelled
//! only with their sum.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compile, compile_observation, MetricsRow};
use crate::ground::GroundObservation;
use crate::learn::{self, Example, GradConvention, LearnMode, NetworkSet, OptimizerKind, TrainConfig};
use crate::net::{load_idx, Binding, DataMap, Dataset, Mlp, NetSpec};
use crate::Error;

pub const PROGRAM: &str = include_str!("../../../../fixtures/addition/program.lp");

#[derive(Debug, Clone)]
pub struct AdditionConfig {
    pub data_dir: PathBuf,
    pub pairs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub mode: LearnMode,
    pub samples: usize,
    pub optimizer: OptimizerKind,
    pub convention: GradConvention,
    pub batch: Option<usize>,
}

impl Default for AdditionConfig {
    fn default() -> AdditionConfig {
        AdditionConfig {
            data_dir: super::default_data_dir(),
            pairs: 2000,
            epochs: 3,
            lr: 0.001,
            hidden: vec![32],
            seed: 0,
            mode: LearnMode::Exact,
            samples: 50,
            optimizer: OptimizerKind::Adam,
            convention: GradConvention::Paper,
            batch: None,
        }
    }
}

pub struct Digits {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_digits(dir: &Path) -> Result<Digits, Error> {
    Ok(Digits {
        train: load_idx(&dir.join("train-images.idx"), &dir.join("train-labels.idx"))?,
        test: load_idx(&dir.join("test-images.idx"), &dir.join("test-labels.idx"))?,
    })
}

/// Fraction of images whose most probable class is the label.
pub fn accuracy(mlp: &Mlp, data: &Dataset) -> Result<f64, Error> {
    let mut right = 0usize;
    for (x, &y) in data.images.iter().zip(&data.labels) {
        let (m, _) = mlp.forward(x)?;
        let row = &m.rows[0];
        let best = row.iter().enumerate().fold(0, |b, (i, &p)| if p > row[b] { i } else { b });
        right += usize::from(best == y as usize);
    }
    Ok(right as f64 / data.len().max(1) as f64)
}

/// Random image pairs as examples observing only the sum.
pub fn sum_examples(train: &Dataset, pairs: usize, seed: u64) -> Result<Vec<Example>, Error> {
    let gp = compile(PROGRAM)?;
    let obs: Vec<GroundObservation> =
        (0..19).map(|s| compile_observation(&gp, &format!(":- not addition(d1,d2,{s}).\n"))).collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let (i, j) = (rng.gen_range(0..train.len()), rng.gen_range(0..train.len()));
        let mut data = DataMap::default();
        data.insert("d1", Binding::Input(train.images[i].clone()));
        data.insert("d2", Binding::Input(train.images[j].clone()));
        let sum = (train.labels[i] + train.labels[j]) as usize;
        out.push(Example::new(obs[sum].clone(), BTreeMap::from([("digit".to_string(), data)])));
    }
    Ok(out)
}

/// Trains on sums and reports held-out single-digit accuracy after every
/// epoch (epoch 0 is before training).
pub fn run(cfg: &AdditionConfig) -> Result<(Vec<MetricsRow>, Mlp), Error> {
    let digits = load_digits(&cfg.data_dir)?;
    let gp = compile(PROGRAM)?;
    let examples = sum_examples(&digits.train, cfg.pairs, cfg.seed)?;
    let input = digits.train.rows * digits.train.cols;
    let mut nets = NetworkSet::default();
    nets.insert(Mlp::new(NetSpec::new("digit", input, &cfg.hidden, 1, 10), cfg.seed)?);
    let run_id = "addition";
    let mut rows = vec![MetricsRow::new(run_id, 0, "acc_identify", accuracy(&nets.nets["digit"], &digits.test)?)];
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        mode: cfg.mode,
        samples: cfg.samples,
        seed: cfg.seed,
        convention: cfg.convention,
        optimizer: cfg.optimizer,
        batch: cfg.batch,
        ..TrainConfig::default()
    };
    let mut failure = None;
    learn::train(&gp, &examples, &mut nets, &tc, |stats, nets| {
        rows.push(MetricsRow::new(run_id, stats.epoch, "log_likelihood", stats.mean_log_likelihood));
        match accuracy(&nets.nets["digit"], &digits.test) {
            Ok(a) => rows.push(MetricsRow::new(run_id, stats.epoch, "acc_identify", a)),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((rows, nets.nets.remove("digit").expect("trained network")))
}
