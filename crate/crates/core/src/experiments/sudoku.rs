//! Sudoku boards: a generator with unique solutions, noised perception
//! matrices, identification by the network alone or through the program,
//! and whole-board accuracies.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{atoms_of, compile, compile_observation, MetricsRow};
use crate::ground::GroundProgram;
use crate::learn::{self, Example, LearnMode, NetworkSet, OptimizerKind, TrainConfig};
use crate::net::{Binding, DataMap, Mlp, NetSpec};
use crate::semantics::{map_inference, MapStrategy, OutputMatrix, ProbabilityAssignment};
use crate::solve::{enumerate_stable_models, SolveOptions, TotalChoice};
use crate::Error;

/// Cells row by row; 0 is an empty cell.
pub type Grid = [u8; 81];

const PROGRAM: &str = include_str!("../../../../fixtures/sudoku/program.lp");
const ANTI_KNIGHT: &str = include_str!("../../../../fixtures/sudoku/anti-knight.lp");
const SUDOKU_X: &str = include_str!("../../../../fixtures/sudoku/sudoku-x.lp");
const OFFSET: &str = include_str!("../../../../fixtures/sudoku/offset.lp");
const SOLVE: &str = include_str!("../../../../fixtures/sudoku/solve.lp");
const IMPLIED: &str = include_str!("../../../../fixtures/sudoku/implied.lp");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Standard,
    AntiKnight,
    SudokuX,
    Offset,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Standard, Variant::AntiKnight, Variant::SudokuX, Variant::Offset];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::AntiKnight => "anti-knight",
            Variant::SudokuX => "sudoku-x",
            Variant::Offset => "offset",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    fn rules(self) -> &'static str {
        match self {
            Variant::Standard => "",
            Variant::AntiKnight => ANTI_KNIGHT,
            Variant::SudokuX => SUDOKU_X,
            Variant::Offset => OFFSET,
        }
    }

    /// Whether two distinct cells must hold different digits.
    pub fn conflict(self, a: usize, b: usize) -> bool {
        let (r1, c1, r2, c2) = ((a / 9) as i32, (a % 9) as i32, (b / 9) as i32, (b % 9) as i32);
        if a == b {
            return false;
        }
        if r1 == r2 || c1 == c2 || (r1 / 3 == r2 / 3 && c1 / 3 == c2 / 3) {
            return true;
        }
        match self {
            Variant::Standard => false,
            Variant::AntiKnight => (r1 - r2).abs() + (c1 - c2).abs() == 3,
            Variant::SudokuX => (r1 == c1 && r2 == c2) || (r1 + c1 == 8 && r2 + c2 == 8),
            Variant::Offset => r1 % 3 == r2 % 3 && c1 % 3 == c2 % 3,
        }
    }
}

/// The identification program for a variant.
pub fn program(variant: Variant) -> String {
    format!("{PROGRAM}\n{}", variant.rules())
}

/// The identification program with rules it already implies (every row,
/// column and box holds every digit). The stable models are the same; the
/// extra rules spare the solver from counting arguments when a misread board
/// has no solution.
pub fn program_with_implied(variant: Variant) -> String {
    format!("{}\n{IMPLIED}", program(variant))
}

/// The program without the rule that fills empty cells, so it only checks
/// the identified digits.
pub fn program_without_fill(variant: Variant) -> String {
    program(variant).lines().filter(|l| !l.trim_start().starts_with("{a(")).collect::<Vec<_>>().join("\n")
}

/// The program for the solving network, which outputs a digit per cell.
pub fn solve_program() -> &'static str {
    SOLVE
}

fn peers(variant: Variant) -> Vec<Vec<usize>> {
    (0..81).map(|a| (0..81).filter(|&b| variant.conflict(a, b)).collect()).collect()
}

struct Search {
    peers: Vec<Vec<usize>>,
}

impl Search {
    fn candidates(&self, g: &Grid, cell: usize) -> u16 {
        let mut used = 0u16;
        for &p in &self.peers[cell] {
            used |= 1 << g[p];
        }
        !used & 0b11_1111_1110
    }

    /// The empty cell with the fewest candidates.
    fn pick(&self, g: &Grid) -> Option<(usize, u16)> {
        let mut best: Option<(usize, u16)> = None;
        for cell in (0..81).filter(|&c| g[c] == 0) {
            let cand = self.candidates(g, cell);
            if best.is_none_or(|(_, b)| cand.count_ones() < b.count_ones()) {
                best = Some((cell, cand));
                if cand.count_ones() <= 1 {
                    break;
                }
            }
        }
        best
    }

    fn count(&self, g: &mut Grid, limit: usize, found: &mut usize) {
        let Some((cell, cand)) = self.pick(g) else {
            *found += 1;
            return;
        };
        for d in 1..=9u8 {
            if cand & (1 << d) != 0 {
                g[cell] = d;
                self.count(g, limit, found);
                g[cell] = 0;
                if *found >= limit {
                    return;
                }
            }
        }
    }

    fn fill(&self, g: &mut Grid, rng: &mut ChaCha8Rng) -> bool {
        let Some((cell, cand)) = self.pick(g) else { return true };
        let mut digits: Vec<u8> = (1..=9).filter(|d| cand & (1 << d) != 0).collect();
        digits.shuffle(rng);
        for d in digits {
            g[cell] = d;
            if self.fill(g, rng) {
                return true;
            }
        }
        g[cell] = 0;
        false
    }
}

/// Number of solutions of a puzzle, counting at most `limit`.
pub fn count_solutions(puzzle: &Grid, variant: Variant, limit: usize) -> usize {
    let s = Search { peers: peers(variant) };
    if (0..81).any(|c| puzzle[c] != 0 && s.peers[c].iter().any(|&p| puzzle[p] == puzzle[c])) {
        return 0;
    }
    let mut g = *puzzle;
    let mut found = 0;
    s.count(&mut g, limit, &mut found);
    found
}

/// Whether a full grid satisfies every constraint of the variant.
pub fn is_valid_solution(g: &Grid, variant: Variant) -> bool {
    g.iter().all(|&d| (1..=9).contains(&d))
        && (0..81).all(|a| (a + 1..81).all(|b| !variant.conflict(a, b) || g[a] != g[b]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Board {
    pub variant: Variant,
    pub puzzle: Grid,
    pub solution: Grid,
}

impl Board {
    pub fn validate(&self) -> Result<(), Error> {
        if self.puzzle.iter().chain(&self.solution).any(|&d| d > 9) {
            return Err(Error::Experiment("board cell outside 0..9".into()));
        }
        Ok(())
    }

    pub fn clues(&self) -> usize {
        self.puzzle.iter().filter(|&&d| d != 0).count()
    }
}

/// Boards with unique solutions. Clues are removed in random order while
/// the solution stays unique, down to `min_clues`.
pub fn generate_boards(n: usize, variant: Variant, min_clues: usize, seed: u64) -> Vec<Board> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Search { peers: peers(variant) };
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut solution = [0u8; 81];
        if !s.fill(&mut solution, &mut rng) {
            continue;
        }
        let mut puzzle = solution;
        let mut cells: Vec<usize> = (0..81).collect();
        cells.shuffle(&mut rng);
        let mut clues = 81;
        for c in cells {
            if clues <= min_clues {
                break;
            }
            let d = puzzle[c];
            puzzle[c] = 0;
            if count_solutions(&puzzle, variant, 2) == 1 {
                clues -= 1;
            } else {
                puzzle[c] = d;
            }
        }
        out.push(Board { variant, puzzle, solution });
    }
    out
}

/// Number of stable models of the identification program when the
/// identification is fixed to the puzzle: 1 for a board with a unique
/// solution.
pub fn solver_solution_count(board: &Board) -> Result<usize, Error> {
    solution_models(&program(board.variant), board, 2).map(|m| m.len())
}

/// Stable models of `src` with the identification fixed to the puzzle,
/// as sorted atom names.
fn solution_models(src: &str, board: &Board, limit: usize) -> Result<Vec<Vec<String>>, Error> {
    let gp = compile(src)?;
    let obs: String = (0..81)
        .map(|p| {
            let v = if board.puzzle[p] == 0 { "empty".to_string() } else { board.puzzle[p].to_string() };
            format!(":- not identify({p},img,{v}).\n")
        })
        .collect();
    let obs = compile_observation(&gp, &obs)?;
    let models = enumerate_stable_models(&gp, Some(&obs), &SolveOptions { max_models: Some(limit), ..Default::default() })?;
    Ok(models
        .iter()
        .map(|m| {
            let mut names: Vec<String> =
                atoms_of(&gp, m, "a").iter().map(|a| format!("a({})", a.join(","))).collect();
            names.sort();
            names
        })
        .collect())
}

/// A perception matrix for a board (rows are cells, columns are empty and
/// 1..9). Each cell is confused with probability `rate`: a wrong digit gets
/// 0.55 and the true class 0.35. Otherwise the true class gets 0.9. The
/// remaining mass is spread evenly. Clues are never read as empty and
/// blanks are never read as their own solution digit, since either misread
/// can still lead to the right solution.
pub fn noisy_matrix(board: &Board, rate: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    board
        .puzzle
        .iter()
        .zip(&board.solution)
        .map(|(&t, &s)| {
            let t = t as usize;
            let mut row = vec![0.0; 10];
            if rng.gen_bool(rate) {
                let wrong = loop {
                    let w = rng.gen_range(1..10);
                    if w != t && w != s as usize {
                        break w;
                    }
                };
                row.iter_mut().for_each(|p| *p = 0.1 / 8.0);
                row[wrong] = 0.55;
                row[t] = 0.35;
            } else {
                row.iter_mut().for_each(|p| *p = 0.1 / 9.0);
                row[t] = 0.9;
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Argmax of each row.
    Network,
    /// The most probable identification satisfying the checks on the
    /// identified digits.
    WithoutFill,
    /// The most probable identification that can be completed to a
    /// solution, with the solution.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub identified: Grid,
    pub solution: Option<Grid>,
}

/// The grounded programs of one variant.
pub struct Pipeline {
    pub variant: Variant,
    full: GroundProgram,
    without_fill: GroundProgram,
}

impl Pipeline {
    pub fn new(variant: Variant) -> Result<Pipeline, Error> {
        Ok(Pipeline {
            variant,
            full: compile(&program_with_implied(variant))?,
            without_fill: compile(&program_without_fill(variant))?,
        })
    }

    pub fn predict(&self, matrix: &[Vec<f64>], mode: Mode) -> Result<Prediction, Error> {
        if matrix.len() != 81 || matrix.iter().any(|r| r.len() != 10) {
            return Err(Error::Experiment("perception matrix must be 81x10".into()));
        }
        let gp = match mode {
            Mode::Network => {
                let mut identified = [0u8; 81];
                for (cell, row) in matrix.iter().enumerate() {
                    identified[cell] = argmax(row) as u8;
                }
                return Ok(Prediction { identified, solution: None });
            }
            Mode::WithoutFill => &self.without_fill,
            Mode::Full => &self.full,
        };
        let assign =
            ProbabilityAssignment::new(gp, |_, _| Ok(OutputMatrix { network: "identify".into(), rows: matrix.to_vec() }))?;
        let model = map_inference(gp, None, &assign, MapStrategy::Optimize, &SolveOptions::default())?;
        let choice = TotalChoice::of(gp, &model).ok_or_else(|| Error::Experiment("model without a total choice".into()))?;
        let mut identified = [0u8; 81];
        for (cell, &o) in choice.0.iter().enumerate() {
            identified[cell] = o as u8;
        }
        let solution = (mode == Mode::Full).then(|| grid_of(&atoms_of(gp, &model, "a")));
        Ok(Prediction { identified, solution })
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |b, (i, &p)| if p > row[b] { i } else { b })
}

/// A grid from `a(R,C,N)` argument lists.
fn grid_of(atoms: &[Vec<String>]) -> Grid {
    let mut g = [0u8; 81];
    for a in atoms {
        if let [r, c, n] = a.as_slice() {
            if let (Ok(r), Ok(c), Ok(n)) = (r.parse::<usize>(), c.parse::<usize>(), n.parse::<u8>()) {
                if r < 9 && c < 9 {
                    g[r * 9 + c] = n;
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SudokuScores {
    /// Boards whose identification matches the puzzle in every cell.
    pub acc_identify: f64,
    /// Boards whose solution satisfies the constraints and keeps the clues.
    pub acc_sol: f64,
}

/// Whole-board accuracies of the predictions.
pub fn evaluate_sudoku(boards: &[Board], predictions: &[Prediction]) -> Result<SudokuScores, Error> {
    if boards.len() != predictions.len() {
        return Err(Error::Experiment(format!("{} boards but {} predictions", boards.len(), predictions.len())));
    }
    let n = boards.len().max(1) as f64;
    let (mut ident, mut sol) = (0usize, 0usize);
    for (b, p) in boards.iter().zip(predictions) {
        b.validate()?;
        if p.identified == b.puzzle {
            ident += 1;
        }
        if let Some(s) = &p.solution {
            let keeps_clues = (0..81).all(|c| b.puzzle[c] == 0 || b.puzzle[c] == s[c]);
            if keeps_clues && is_valid_solution(s, b.variant) {
                sol += 1;
            }
        }
    }
    Ok(SudokuScores { acc_identify: ident as f64 / n, acc_sol: sol as f64 / n })
}

/// Identification accuracy of the three modes and solution accuracy on
/// noised matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub network: f64,
    pub without_fill: f64,
    pub full: f64,
    pub acc_sol: f64,
    /// Boards identified correctly by the full pipeline whose solution
    /// fails the checks. Zero when solving is exact.
    pub identified_but_unsolved: usize,
}

pub fn noise_experiment(boards: &[Board], rate: f64, seed: u64) -> Result<NoiseReport, Error> {
    let variant = boards.first().map_or(Variant::Standard, |b| b.variant);
    let pipe = Pipeline::new(variant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices: Vec<Vec<Vec<f64>>> = boards.iter().map(|b| noisy_matrix(b, rate, &mut rng)).collect();
    let run = |mode| -> Result<Vec<Prediction>, Error> { matrices.iter().map(|m| pipe.predict(m, mode)).collect() };
    let network = evaluate_sudoku(boards, &run(Mode::Network)?)?;
    let without = evaluate_sudoku(boards, &run(Mode::WithoutFill)?)?;
    let full_preds = run(Mode::Full)?;
    let full = evaluate_sudoku(boards, &full_preds)?;
    let identified_but_unsolved = boards
        .iter()
        .zip(&full_preds)
        .filter(|(b, p)| p.identified == b.puzzle && (p.solution != Some(b.solution)))
        .count();
    Ok(NoiseReport {
        network: network.acc_identify,
        without_fill: without.acc_identify,
        full: full.acc_identify,
        acc_sol: full.acc_sol,
        identified_but_unsolved,
    })
}

/// Settings for training the solving network on clue observations.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub train: usize,
    pub test: usize,
    pub min_clues: usize,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> SolveConfig {
        SolveConfig { train: 30, test: 10, min_clues: 30, epochs: 5, lr: 0.01, hidden: vec![128], seed: 0 }
    }
}

/// One-hot encoding of a puzzle: 10 values per cell.
pub fn one_hot(puzzle: &Grid) -> Vec<f64> {
    let mut x = vec![0.0; 810];
    for (c, &d) in puzzle.iter().enumerate() {
        x[c * 10 + d as usize] = 1.0;
    }
    x
}

/// Grid-cell and whole-board accuracy of the network's argmax digits.
pub fn solve_accuracy(mlp: &Mlp, boards: &[Board]) -> Result<(f64, f64), Error> {
    let (mut cells, mut whole) = (0usize, 0usize);
    for b in boards {
        let (m, _) = mlp.forward(&one_hot(&b.puzzle))?;
        let right = m.rows.iter().enumerate().filter(|(c, row)| argmax(row) as u8 + 1 == b.solution[*c]).count();
        cells += right;
        whole += usize::from(right == 81);
    }
    let n = boards.len().max(1) as f64;
    Ok((cells as f64 / (81.0 * n), whole as f64 / n))
}

/// Trains the solving network on observations that only state the clues;
/// the program supplies the rules.
pub fn run_solve(cfg: &SolveConfig) -> Result<(Vec<MetricsRow>, Mlp), Error> {
    let boards = generate_boards(cfg.train + cfg.test, Variant::Standard, cfg.min_clues, cfg.seed);
    let (train_set, test_set) = boards.split_at(cfg.train);
    let gp = compile(SOLVE)?;
    let mut examples = Vec::new();
    for b in train_set {
        let obs: String = (0..81)
            .filter(|&c| b.puzzle[c] != 0)
            .map(|c| format!(":- not a({},{},{}).\n", c / 9, c % 9, b.puzzle[c]))
            .collect();
        let mut data = DataMap::default();
        data.insert("img", Binding::Input(one_hot(&b.puzzle)));
        examples.push(Example::new(compile_observation(&gp, &obs)?, BTreeMap::from([("sol".to_string(), data)])));
    }
    let mut nets = NetworkSet::default();
    nets.insert(Mlp::new(NetSpec::new("sol", 810, &cfg.hidden, 81, 9), cfg.seed)?);
    let run_id = "sudoku-solve";
    let mut rows = Vec::new();
    let record = |epoch: usize, mlp: &Mlp, rows: &mut Vec<MetricsRow>| -> Result<(), Error> {
        let (cell, board) = solve_accuracy(mlp, test_set)?;
        rows.push(MetricsRow::new(run_id, epoch, "grid_cell_acc", cell));
        rows.push(MetricsRow::new(run_id, epoch, "acc_sol", board));
        Ok(())
    };
    record(0, &nets.nets["sol"], &mut rows)?;
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        mode: LearnMode::Exact,
        seed: cfg.seed,
        optimizer: OptimizerKind::Adam,
        ..TrainConfig::default()
    };
    let mut failure = None;
    learn::train(&gp, &examples, &mut nets, &tc, |stats, nets| {
        rows.push(MetricsRow::new(run_id, stats.epoch, "log_likelihood", stats.mean_log_likelihood));
        if let Err(e) = record(stats.epoch, &nets.nets["sol"], &mut rows) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((rows, nets.nets.remove("sol").expect("trained network")))
}
