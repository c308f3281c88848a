//! Recovery-action discovery.
//!
//! A frozen pre-trained agent walks a barrier grid greedily. The first
//! collision opens a record keyed by the collision context and hands control
//! to the exploration policy; every later non-colliding action extends the
//! open macro. A collision while recording closes the record and opens the
//! next one, and goal arrival closes the last.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, Cell, GridSpec};
use crate::qlearning::QTable;

/// Where the collision happened and which move was attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollisionContext {
    pub state: Cell,
    pub attempted: Action,
}

impl fmt::Display for CollisionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.state, self.attempted)
    }
}

/// Non-empty action sequence, written compactly as e.g. `"UULDR"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecoveryMacro(Vec<Action>);

impl RecoveryMacro {
    pub fn new(actions: Vec<Action>) -> Option<Self> {
        (!actions.is_empty()).then_some(RecoveryMacro(actions))
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for RecoveryMacro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|a| write!(f, "{a}"))
    }
}

impl FromStr for RecoveryMacro {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let actions = s
            .chars()
            .map(|c| Action::from_char(c).ok_or_else(|| Error::Parse(format!("bad action {c:?} in macro {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        RecoveryMacro::new(actions).ok_or_else(|| Error::Parse("empty macro".into()))
    }
}

/// How a record was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    ReachedGoal,
    NextCollision,
    /// Closed by the episode step cap or the macro length cap.
    Truncated,
}

impl Terminal {
    fn as_str(self) -> &'static str {
        match self {
            Terminal::ReachedGoal => "ReachedGoal",
            Terminal::NextCollision => "NextCollision",
            Terminal::Truncated => "Truncated",
        }
    }
}

impl FromStr for Terminal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ReachedGoal" => Ok(Terminal::ReachedGoal),
            "NextCollision" => Ok(Terminal::NextCollision),
            "Truncated" => Ok(Terminal::Truncated),
            _ => Err(Error::Parse(format!("bad terminal {s:?}"))),
        }
    }
}

/// One recovery experience.
///
/// Step accounting: `prior_path_length` counts steps strictly before the
/// colliding attempt; `residual_path_length` counts steps after it up to the
/// episode end, so `prior + 1 + residual = total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaExperience {
    pub context: CollisionContext,
    pub recovery: RecoveryMacro,
    pub residual_path_length: usize,
    pub total_path_length: usize,
    pub prior_path_length: usize,
    pub episode_id: usize,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Exploration {
    UniformRandom,
    /// Random with probability epsilon, else greedy on the frozen table;
    /// epsilon is annealed linearly from `start` to `end` across episodes.
    GreedyBlend { start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub episodes: usize,
    pub seed: u64,
    pub exploration: Exploration,
    pub macro_cap: usize,
    pub max_steps: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            episodes: 500,
            seed: 0,
            exploration: Exploration::UniformRandom,
            macro_cap: 100,
            max_steps: 484,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSummary {
    pub path_length: usize,
    pub collisions: usize,
    pub reached_goal: bool,
    /// Records closed before any non-colliding action; these carry no macro
    /// and are not saved.
    pub empty_records: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Discovery {
    pub experiences: Vec<RaExperience>,
    pub episodes: Vec<EpisodeSummary>,
}

struct OpenRecord {
    context: CollisionContext,
    actions: Vec<Action>,
    prior: usize,
}

struct ClosedRecord {
    context: CollisionContext,
    actions: Vec<Action>,
    prior: usize,
    terminal: Terminal,
}

impl OpenRecord {
    fn close(self, terminal: Terminal) -> ClosedRecord {
        ClosedRecord {
            context: self.context,
            actions: self.actions,
            prior: self.prior,
            terminal,
        }
    }
}

/// Runs the discovery loop and returns every non-empty record.
pub fn discover(grid: &GridSpec, pretrained: &QTable, config: &DiscoveryConfig) -> Result<Discovery> {
    pretrained.check_shape(grid)?;
    if config.episodes == 0 {
        return Err(Error::Config("discovery needs at least one episode".into()));
    }
    if config.macro_cap == 0 || config.max_steps == 0 {
        return Err(Error::Config("macro_cap and max_steps must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Discovery::default();

    for episode_id in 0..config.episodes {
        let epsilon = match config.exploration {
            Exploration::UniformRandom => 1.0,
            Exploration::GreedyBlend { start, end } => {
                let frac = if config.episodes > 1 {
                    episode_id as f64 / (config.episodes - 1) as f64
                } else {
                    0.0
                };
                start + (end - start) * frac
            }
        };

        let mut closed: Vec<ClosedRecord> = Vec::new();
        let mut open: Option<OpenRecord> = None;
        let mut state = grid.start();
        let mut steps = 0;
        let mut collisions = 0;
        let mut reached_goal = false;

        while steps < config.max_steps {
            let action = if open.is_some() && rng.gen::<f64>() < epsilon {
                Action::from_index(rng.gen_range(0..4))
            } else {
                pretrained.greedy_action(state)
            };
            let outcome = grid.step(state, action)?;
            steps += 1;
            if outcome.collided {
                collisions += 1;
                if let Some(rec) = open.take() {
                    closed.push(rec.close(Terminal::NextCollision));
                }
                open = Some(OpenRecord {
                    context: CollisionContext { state, attempted: action },
                    actions: Vec::new(),
                    prior: steps - 1,
                });
            } else if let Some(rec) = open.as_mut() {
                rec.actions.push(action);
                if outcome.done {
                    closed.push(open.take().unwrap().close(Terminal::ReachedGoal));
                } else if rec.actions.len() >= config.macro_cap {
                    closed.push(open.take().unwrap().close(Terminal::Truncated));
                }
            }
            state = outcome.next_state;
            if outcome.done {
                reached_goal = true;
                break;
            }
        }
        if let Some(rec) = open.take() {
            closed.push(rec.close(Terminal::Truncated));
        }

        let mut empty_records = 0;
        for rec in closed {
            let Some(recovery) = RecoveryMacro::new(rec.actions) else {
                empty_records += 1;
                continue;
            };
            out.experiences.push(RaExperience {
                context: rec.context,
                recovery,
                residual_path_length: steps - rec.prior - 1,
                total_path_length: steps,
                prior_path_length: rec.prior,
                episode_id,
                terminal: rec.terminal,
            });
        }
        out.episodes.push(EpisodeSummary {
            path_length: steps,
            collisions,
            reached_goal,
            empty_records,
        });
    }
    Ok(out)
}

const CSV_HEADER: [&str; 9] = [
    "episode_id",
    "row",
    "col",
    "direction",
    "macro",
    "residual_path_length",
    "total_path_length",
    "prior_path_length",
    "terminal",
];

pub fn write_experiences_csv<W: Write>(writer: W, records: &[RaExperience]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.episode_id.to_string(),
            r.context.state.row.to_string(),
            r.context.state.col.to_string(),
            r.context.attempted.to_string(),
            r.recovery.to_string(),
            r.residual_path_length.to_string(),
            r.total_path_length.to_string(),
            r.prior_path_length.to_string(),
            r.terminal.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<experience csv>", e))?;
    Ok(())
}

pub fn read_experiences_csv<R: Read>(reader: R) -> Result<Vec<RaExperience>> {
    let mut rd = csv::Reader::from_reader(reader);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected experience header {header:?}")));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let dir = row[3]
            .chars()
            .next()
            .and_then(Action::from_char)
            .ok_or_else(|| Error::Parse(format!("bad direction {:?}", &row[3])))?;
        out.push(RaExperience {
            episode_id: num(&row[0])?,
            context: CollisionContext {
                state: Cell::new(num(&row[1])?, num(&row[2])?),
                attempted: dir,
            },
            recovery: row[4].parse()?,
            residual_path_length: num(&row[5])?,
            total_path_length: num(&row[6])?,
            prior_path_length: num(&row[7])?,
            terminal: row[8].parse()?,
        });
    }
    Ok(out)
}
