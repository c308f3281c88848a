use std::path::PathBuf;

use crate::grid::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cell {0} is outside the {1}x{2} grid")]
    OutOfBounds(Cell, usize, usize),
    #[error("cell {0} is an obstacle")]
    BlockedCell(Cell),
    #[error("start and goal coincide at {0}")]
    StartIsGoal(Cell),
    #[error("goal {goal} is unreachable from {start}")]
    Unreachable { start: Cell, goal: Cell },
    #[error("episode already terminal at goal {0}")]
    TerminalState(Cell),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("q-table shape {got:?} does not match grid {want:?}")]
    ShapeMismatch { got: (usize, usize), want: (usize, usize) },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no records for context {0} with macro {1}")]
    UnseenArm(String, String),
    #[error("agent length {l_agent} is shorter than optimal length {l_opt}")]
    ShorterThanOptimal { l_opt: usize, l_agent: usize },
    #[error("degenerate gap: P* OFPR {pstar} does not exceed Rand OFPR {rand}")]
    DegenerateGap { rand: f64, pstar: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
