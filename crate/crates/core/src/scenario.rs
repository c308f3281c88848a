//! Parameterised barrier generators.
//!
//! Every barrier is built from a horizontal segment. `ReverseU` hangs two
//! arms below the segment ends, `U` raises them above, and `Superposition`
//! is the union of the three.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    None,
    Wall,
    ReverseU,
    U,
    Superposition,
}

impl ScenarioKind {
    /// Difficulty order used on chart x-axes.
    pub const CURRICULUM: [ScenarioKind; 4] = [
        ScenarioKind::Wall,
        ScenarioKind::ReverseU,
        ScenarioKind::U,
        ScenarioKind::Superposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::None => "None",
            ScenarioKind::Wall => "Wall",
            ScenarioKind::ReverseU => "ReverseU",
            ScenarioKind::U => "U",
            ScenarioKind::Superposition => "Superposition",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ScenarioKind::None]
            .into_iter()
            .chain(ScenarioKind::CURRICULUM)
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown barrier kind {s:?}")))
    }
}

/// A horizontal segment of `length` cells starting at `anchor` (its
/// leftmost cell), with optional vertical arms of `arm_length` cells at
/// both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BarrierGeometry {
    pub anchor: Cell,
    pub length: usize,
    #[serde(default)]
    pub arm_length: usize,
}

impl BarrierGeometry {
    fn segment(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.length).map(move |i| Cell::new(self.anchor.row, self.anchor.col + i))
    }

    fn end_cols(&self) -> [usize; 2] {
        [self.anchor.col, self.anchor.col + self.length.saturating_sub(1)]
    }

    fn arms_below(&self) -> Vec<Cell> {
        self.end_cols()
            .into_iter()
            .flat_map(|col| (1..=self.arm_length).map(move |d| Cell::new(self.anchor.row + d, col)))
            .collect()
    }

    fn arms_above(&self) -> Result<Vec<Cell>> {
        if self.arm_length > self.anchor.row {
            return Err(Error::Geometry(format!(
                "arms of length {} above row {} leave the grid",
                self.arm_length, self.anchor.row
            )));
        }
        Ok(self
            .end_cols()
            .into_iter()
            .flat_map(|col| (1..=self.arm_length).map(move |d| Cell::new(self.anchor.row - d, col)))
            .collect())
    }
}

/// Geometry for each generated barrier kind; `Superposition` reuses all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometrySet {
    pub wall: BarrierGeometry,
    pub reverse_u: BarrierGeometry,
    pub u: BarrierGeometry,
}

impl GeometrySet {
    /// The bundled suite's geometry: a 7-cell segment on row 5, columns 2..8,
    /// with 2-cell arms.
    pub fn default_11x11() -> Self {
        let segment = |arm_length| BarrierGeometry {
            anchor: Cell::new(5, 2),
            length: 7,
            arm_length,
        };
        GeometrySet {
            wall: segment(0),
            reverse_u: segment(2),
            u: segment(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObstacleScenario {
    pub kind: ScenarioKind,
    pub cells: BTreeSet<Cell>,
    pub geometry: Vec<BarrierGeometry>,
}

impl ObstacleScenario {
    pub fn none() -> Self {
        ObstacleScenario {
            kind: ScenarioKind::None,
            cells: BTreeSet::new(),
            geometry: Vec::new(),
        }
    }

    /// The scenario's grid for one agent's endpoints.
    pub fn grid(&self, width: usize, height: usize, start: Cell, goal: Cell) -> Result<GridSpec> {
        GridSpec::new(width, height, self.cells.iter().copied(), start, goal)
    }
}

fn cells_for(kind: ScenarioKind, set: &GeometrySet) -> Result<(BTreeSet<Cell>, Vec<BarrierGeometry>)> {
    let mut cells = BTreeSet::new();
    let used = match kind {
        ScenarioKind::None => vec![],
        ScenarioKind::Wall => {
            cells.extend(set.wall.segment());
            vec![set.wall]
        }
        ScenarioKind::ReverseU => {
            cells.extend(set.reverse_u.segment());
            cells.extend(set.reverse_u.arms_below());
            vec![set.reverse_u]
        }
        ScenarioKind::U => {
            cells.extend(set.u.segment());
            cells.extend(set.u.arms_above()?);
            vec![set.u]
        }
        ScenarioKind::Superposition => {
            let mut used = Vec::new();
            for part in [ScenarioKind::Wall, ScenarioKind::ReverseU, ScenarioKind::U] {
                let (c, g) = cells_for(part, set)?;
                cells.extend(c);
                used.extend(g);
            }
            used
        }
    };
    Ok((cells, used))
}

/// Builds `kind` from `geometry` and checks it against every endpoint pair
/// of the suite: cells in bounds, no endpoint covered, each goal still
/// reachable from its start.
pub fn build_scenario(
    kind: ScenarioKind,
    geometry: &GeometrySet,
    width: usize,
    height: usize,
    endpoint_pairs: &[(Cell, Cell)],
) -> Result<ObstacleScenario> {
    let (cells, used) = cells_for(kind, geometry)?;
    if let Some(&c) = cells.iter().find(|c| c.row >= height || c.col >= width) {
        return Err(Error::Geometry(format!("{kind} cell {c} is outside the {width}x{height} grid")));
    }
    for &(start, goal) in endpoint_pairs {
        for endpoint in [start, goal] {
            if cells.contains(&endpoint) {
                return Err(Error::Geometry(format!("{kind} covers endpoint {endpoint}")));
            }
        }
        GridSpec::new(width, height, cells.iter().copied(), start, goal).map_err(|e| match e {
            Error::Unreachable { start, goal } => {
                Error::Geometry(format!("{kind} disconnects {start} from {goal}"))
            }
            other => other,
        })?;
    }
    Ok(ObstacleScenario {
        kind,
        cells,
        geometry: used,
    })
}
