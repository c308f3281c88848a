//! Deterministic grid-world MDP.
//!
//! Cells are addressed as `(row, col)` with row 0 at the top, so `Up`
//! decreases the row. Every move that does not land on the goal costs -1,
//! including blocked moves, which leave the agent in place.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STEP_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// Neighbouring cell in `action`'s direction, `None` when it would leave
    /// the non-negative quadrant. Upper bounds are the grid's business.
    pub fn offset(self, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order, also the argmax tie-break order.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
        }
    }

    pub fn from_char(c: char) -> Option<Action> {
        match c {
            'U' => Some(Action::Up),
            'D' => Some(Action::Down),
            'L' => Some(Action::Left),
            'R' => Some(Action::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: Cell,
    pub reward: f64,
    pub collided: bool,
    pub done: bool,
}

/// Validated grid: in-bounds start and goal, both free, goal reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    start: Cell,
    goal: Cell,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        obstacles: impl IntoIterator<Item = Cell>,
        start: Cell,
        goal: Cell,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("grid must be non-empty, got {width}x{height}")));
        }
        let mut blocked = vec![false; width * height];
        for cell in obstacles {
            if cell.row >= height || cell.col >= width {
                return Err(Error::OutOfBounds(cell, width, height));
            }
            blocked[cell.row * width + cell.col] = true;
        }
        let grid = GridSpec {
            width,
            height,
            blocked,
            start,
            goal,
        };
        for cell in [start, goal] {
            if !grid.in_bounds(cell) {
                return Err(Error::OutOfBounds(cell, width, height));
            }
            if grid.is_blocked(cell) {
                return Err(Error::BlockedCell(cell));
            }
        }
        if start == goal {
            return Err(Error::StartIsGoal(start));
        }
        if grid.distances_to_goal()[grid.index(start)].is_none() {
            return Err(Error::Unreachable { start, goal });
        }
        Ok(grid)
    }

    pub fn empty(width: usize, height: usize, start: Cell, goal: Cell) -> Result<Self> {
        GridSpec::new(width, height, [], start, goal)
    }

    /// Same bounds and obstacles, different endpoints.
    pub fn with_endpoints(&self, start: Cell, goal: Cell) -> Result<Self> {
        GridSpec::new(self.width, self.height, self.obstacles(), start, goal)
    }

    /// Same bounds and endpoints, different obstacles.
    pub fn with_obstacles(&self, obstacles: impl IntoIterator<Item = Cell>) -> Result<Self> {
        GridSpec::new(self.width, self.height, obstacles, self.start, self.goal)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.blocked[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.blocked[self.index(cell)]
    }

    pub fn has_obstacles(&self) -> bool {
        self.blocked.iter().any(|&b| b)
    }

    pub fn obstacles(&self) -> BTreeSet<Cell> {
        self.cells().filter(|&c| self.is_blocked(c)).collect()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at(i))
    }

    /// Where `action` leads from `state`, or `None` if the move is blocked.
    pub fn target(&self, state: Cell, action: Action) -> Option<Cell> {
        state.offset(action).filter(|&c| self.is_free(c))
    }

    pub fn step(&self, state: Cell, action: Action) -> Result<StepOutcome> {
        if !self.in_bounds(state) {
            return Err(Error::OutOfBounds(state, self.width, self.height));
        }
        if state == self.goal {
            return Err(Error::TerminalState(state));
        }
        Ok(match self.target(state, action) {
            Some(next) if next == self.goal => StepOutcome {
                next_state: next,
                reward: GOAL_REWARD,
                collided: false,
                done: true,
            },
            Some(next) => StepOutcome {
                next_state: next,
                reward: STEP_REWARD,
                collided: false,
                done: false,
            },
            None => StepOutcome {
                next_state: state,
                reward: STEP_REWARD,
                collided: true,
                done: false,
            },
        })
    }

    /// BFS step counts from every cell to the goal; `None` for blocked or
    /// disconnected cells. Moves are symmetric so this equals start-to-goal BFS.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cell_count()];
        let mut queue = VecDeque::new();
        dist[self.index(self.goal)] = Some(0);
        queue.push_back(self.goal);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].unwrap_or_default();
            for action in Action::ALL {
                if let Some(next) = self.target(cell, action) {
                    let slot = &mut dist[self.index(next)];
                    if slot.is_none() {
                        *slot = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        dist
    }

    /// Shortest start-to-goal step count avoiding obstacles.
    pub fn optimal_path_length(&self) -> usize {
        self.distances_to_goal()[self.index(self.start)]
            .expect("reachability is checked at construction")
    }

    /// Row-major ASCII rendering, handy in test failure messages.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let c = Cell::new(row, col);
                out.push(if c == self.start {
                    'S'
                } else if c == self.goal {
                    'G'
                } else if self.is_blocked(c) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}
