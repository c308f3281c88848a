//! Tabular one-step Q-learning and policy rollouts.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, Cell, GridSpec};

const QTABLE_MAGIC: &str = "qtable v1";

/// State-action values for every cell of a grid, four actions per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    height: usize,
    values: Vec<[f64; 4]>,
}

impl QTable {
    pub fn zeros(width: usize, height: usize) -> Self {
        QTable {
            width,
            height,
            values: vec![[0.0; 4]; width * height],
        }
    }

    pub fn for_grid(grid: &GridSpec) -> Self {
        QTable::zeros(grid.width(), grid.height())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn check_shape(&self, grid: &GridSpec) -> Result<()> {
        let want = (grid.width(), grid.height());
        if self.shape() != want {
            return Err(Error::ShapeMismatch {
                got: self.shape(),
                want,
            });
        }
        Ok(())
    }

    fn slot(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn values(&self, cell: Cell) -> [f64; 4] {
        self.values[self.slot(cell)]
    }

    pub fn get(&self, cell: Cell, action: Action) -> f64 {
        self.values[self.slot(cell)][action.index()]
    }

    pub fn set(&mut self, cell: Cell, action: Action, value: f64) {
        let slot = self.slot(cell);
        self.values[slot][action.index()] = value;
    }

    pub fn max_value(&self, cell: Cell) -> f64 {
        self.values(cell).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax with ties going to the earliest action in `Action::ALL`.
    pub fn greedy_action(&self, cell: Cell) -> Action {
        let vals = self.values(cell);
        let mut best = 0;
        for i in 1..4 {
            if vals[i] > vals[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }

    /// Flat text form: a header line, then `row col up down left right` per
    /// cell in row-major order with 12 decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{QTABLE_MAGIC} {} {}\n", self.width, self.height);
        for (i, vals) in self.values.iter().enumerate() {
            let _ = write!(out, "{} {}", i / self.width, i % self.width);
            for v in vals {
                let _ = write!(out, " {v:.12}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty q-table".into()))?;
        let dims = header
            .strip_prefix(QTABLE_MAGIC)
            .ok_or_else(|| Error::Parse(format!("bad q-table header {header:?}")))?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad dimension {s:?}"))))
            .collect::<Result<_>>()?;
        let [width, height] = dims[..] else {
            return Err(Error::Parse(format!("bad q-table header {header:?}")));
        };
        let mut table = QTable::zeros(width, height);
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::Parse(format!("bad q-table line {line:?}")));
            }
            let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad coordinate {s:?}")));
            let cell = Cell::new(parse_usize(fields[0])?, parse_usize(fields[1])?);
            if cell.row >= height || cell.col >= width {
                return Err(Error::OutOfBounds(cell, width, height));
            }
            for (a, s) in fields[2..].iter().enumerate() {
                let v = s.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {s:?}")))?;
                table.set(cell, Action::from_index(a), v);
            }
            seen += 1;
        }
        if seen != width * height {
            return Err(Error::Parse(format!("expected {} q-table rows, found {seen}", width * height)));
        }
        Ok(table)
    }
}

/// One-step Q-learning target: `value + lr * (reward + discount * max_next - value)`.
pub fn q_update(value: f64, reward: f64, max_next: f64, learning_rate: f64, discount: f64) -> f64 {
    value + learning_rate * (reward + discount * max_next - value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            learning_rate: 0.1,
            discount: 0.99,
            epsilon: 1.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.05,
            episodes: 5000,
            max_steps: 484,
            seed: 0,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("learning config: {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.epsilon_min) {
            return bad("epsilon and epsilon_min must lie in [0, 1]");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad("epsilon_decay must lie in (0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

/// Trains a fresh zero-initialised table with epsilon-greedy behaviour.
/// Bit-identical output for identical inputs.
pub fn train(grid: &GridSpec, config: &LearningConfig) -> Result<QTable> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut table = QTable::for_grid(grid);
    let mut epsilon = config.epsilon;
    for _ in 0..config.episodes {
        let mut state = grid.start();
        for _ in 0..config.max_steps {
            let action = if rng.gen::<f64>() < epsilon {
                Action::from_index(rng.gen_range(0..4))
            } else {
                table.greedy_action(state)
            };
            let out = grid.step(state, action)?;
            let max_next = if out.done { 0.0 } else { table.max_value(out.next_state) };
            let updated = q_update(
                table.get(state, action),
                out.reward,
                max_next,
                config.learning_rate,
                config.discount,
            );
            table.set(state, action, updated);
            state = out.next_state;
            if out.done {
                break;
            }
        }
        epsilon = (epsilon * config.epsilon_decay).max(config.epsilon_min);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub state: Cell,
    pub action: Action,
    pub reward: f64,
    pub collided: bool,
    pub next_state: Cell,
}

/// Step log of one episode. Totals are maintained by [`EpisodeTrace::push`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub total_reward: f64,
    pub path_length: usize,
    pub collision_count: usize,
    pub reached_goal: bool,
}

impl EpisodeTrace {
    pub fn push(&mut self, step: TraceStep, done: bool) {
        self.total_reward += step.reward;
        self.path_length += 1;
        self.collision_count += usize::from(step.collided);
        self.reached_goal |= done;
        self.steps.push(step);
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|s| s.action)
    }

    pub fn final_state(&self) -> Option<Cell> {
        self.steps.last().map(|s| s.next_state)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Greedy(&'a QTable),
    UniformRandom(u64),
}

/// Runs `policy` from the grid's start until the goal or `max_steps`.
pub fn run_policy(grid: &GridSpec, policy: Policy<'_>, max_steps: usize) -> Result<EpisodeTrace> {
    if let Policy::Greedy(table) = policy {
        table.check_shape(grid)?;
    }
    let mut rng = match policy {
        Policy::UniformRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Policy::Greedy(_) => None,
    };
    let mut trace = EpisodeTrace::default();
    let mut state = grid.start();
    while trace.path_length < max_steps {
        let action = match (&policy, rng.as_mut()) {
            (Policy::Greedy(table), _) => table.greedy_action(state),
            (_, Some(rng)) => Action::from_index(rng.gen_range(0..4)),
            (Policy::UniformRandom(_), None) => unreachable!(),
        };
        let out = grid.step(state, action)?;
        trace.push(
            TraceStep {
                state,
                action,
                reward: out.reward,
                collided: out.collided,
                next_state: out.next_state,
            },
            out.done,
        );
        state = out.next_state;
        if out.done {
            break;
        }
    }
    Ok(trace)
}

/// True when the greedy rollout reaches the goal in exactly the BFS length.
pub fn greedy_is_optimal(grid: &GridSpec, table: &QTable, max_steps: usize) -> Result<bool> {
    let trace = run_policy(grid, Policy::Greedy(table), max_steps)?;
    Ok(trace.reached_goal && trace.path_length == grid.optimal_path_length())
}

/// Fraction of free non-goal cells from which the greedy policy walks a
/// shortest path to the goal. `greedy_is_optimal` only checks the start.
pub fn greedy_coverage(grid: &GridSpec, table: &QTable) -> Result<f64> {
    table.check_shape(grid)?;
    let dist = grid.distances_to_goal();
    let dist_of = |c: Cell| dist[grid.index(c)];
    let mut total = 0usize;
    let mut optimal = 0usize;
    for cell in grid.cells().filter(|&c| c != grid.goal()) {
        let Some(mut d) = dist_of(cell) else { continue };
        total += 1;
        let mut state = cell;
        // every greedy move must bring the agent one step closer
        while d > 0 {
            match grid.target(state, table.greedy_action(state)) {
                Some(next) if dist_of(next) == Some(d - 1) => {
                    state = next;
                    d -= 1;
                }
                _ => break,
            }
        }
        optimal += usize::from(d == 0);
    }
    Ok(if total == 0 { 1.0 } else { optimal as f64 / total as f64 })
}
