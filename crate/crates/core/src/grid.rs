//! Grid city geometry: cells, shortest paths and vehicle motion.
//!
//! Cells are nodes of an unobstructed 4-connected lattice. Vehicles move along
//! shortest paths that resolve the row offset before the column offset, and
//! sub-block positions are tracked as exact fractions so that motion replays
//! bit-identically.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::Mutex;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact non-negative fraction of a block or of a round.
pub type Fraction = Ratio<u64>;

/// Discrete simulation time.
pub type Round = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub const fn new(row: u32, col: u32) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Immutable grid geometry plus the fleet-wide speed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    rows: u32,
    cols: u32,
    speed: Fraction,
}

impl Grid {
    pub fn new(rows: u32, cols: u32, speed: Fraction) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("grid must be non-empty, got {rows}x{cols}")));
        }
        if speed.is_zero() {
            return Err(Error::Config("speed must be positive".into()));
        }
        Ok(Grid { rows, cols, speed })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn speed(&self) -> Fraction {
        self.speed
    }

    pub fn center(&self) -> Cell {
        Cell::new(self.rows / 2, self.cols / 2)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn check(&self, cell: Cell) -> Result<Cell> {
        if self.contains(cell) {
            Ok(cell)
        } else {
            Err(Error::InputDomain(format!(
                "cell {cell} outside {}x{} grid",
                self.rows, self.cols
            )))
        }
    }

    /// Length of a minimal path between two in-bounds cells.
    pub fn shortest_distance(&self, a: Cell, b: Cell) -> Result<u32> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dist(a, b))
    }

    /// Unchecked shortest distance; on an unobstructed lattice this is the
    /// Manhattan distance, which [`PathCache`] cross-checks with A*.
    #[inline]
    pub fn dist(&self, a: Cell, b: Cell) -> u32 {
        a.manhattan(b)
    }

    /// The neighbour of `from` on the canonical path to `to` (rows first).
    pub fn next_step(&self, from: Cell, to: Cell) -> Cell {
        if from.row < to.row {
            Cell::new(from.row + 1, from.col)
        } else if from.row > to.row {
            Cell::new(from.row - 1, from.col)
        } else if from.col < to.col {
            Cell::new(from.row, from.col + 1)
        } else if from.col > to.col {
            Cell::new(from.row, from.col - 1)
        } else {
            from
        }
    }

    /// The cell a route is measured from and the fraction of a block still
    /// owed on the current edge.
    pub fn anchor(&self, pos: &RoutePosition) -> (Cell, Fraction) {
        match pos.heading {
            Some(next) if !pos.progress.is_zero() => (next, Fraction::one() - pos.progress),
            _ => (pos.at, Fraction::zero()),
        }
    }

    /// Distance from `pos` through `stops[..=upto]` in order.
    pub fn distance_along(&self, pos: &RoutePosition, stops: &[Cell], upto: usize) -> Fraction {
        let (mut cur, mut total) = self.anchor(pos);
        for &stop in &stops[..=upto] {
            total += Fraction::from_integer(u64::from(self.dist(cur, stop)));
            cur = stop;
        }
        total
    }

    /// Full remaining length of a route from `pos`.
    pub fn route_length(&self, pos: &RoutePosition, stops: &[Cell]) -> Fraction {
        if stops.is_empty() {
            return self.anchor(pos).1;
        }
        self.distance_along(pos, stops, stops.len() - 1)
    }

    /// Rounds needed to cover `distance` blocks, rounded up.
    pub fn rounds_for(&self, distance: Fraction) -> Round {
        let r = (distance / self.speed).ceil().to_integer();
        Round::try_from(r).unwrap_or(Round::MAX)
    }

    /// Rounds until the vehicle reaches `stops[target]`.
    pub fn path_eta(&self, pos: &RoutePosition, stops: &[Cell], target: usize) -> Result<Round> {
        if target >= stops.len() {
            return Err(Error::InputDomain(format!(
                "stop index {target} not on a route of {} stops",
                stops.len()
            )));
        }
        Ok(self.rounds_for(self.distance_along(pos, stops, target)))
    }

    /// Move a vehicle for `dt` rounds along `stops`.
    ///
    /// Stops are consumed in order as they are reached; motion halts at the
    /// last stop. A vehicle caught mid-edge always completes that edge first.
    pub fn advance(&self, pos: &RoutePosition, stops: &[Cell], dt: Round) -> Advance {
        let mut budget = self.speed * Fraction::from_integer(u64::from(dt));
        let mut p = *pos;
        let mut traveled = Fraction::zero();
        let mut reached = 0usize;
        loop {
            if p.progress.is_zero() {
                p.heading = None;
                while reached < stops.len() && stops[reached] == p.at {
                    reached += 1;
                }
                if reached == stops.len() || budget.is_zero() {
                    break;
                }
                p.heading = Some(self.next_step(p.at, stops[reached]));
            }
            let owed = Fraction::one() - p.progress;
            if budget >= owed {
                budget -= owed;
                traveled += owed;
                p.at = p.heading.expect("heading set while moving");
                p.progress = Fraction::zero();
            } else {
                p.progress += budget;
                traveled += budget;
                break;
            }
        }
        Advance { position: p, traveled, reached }
    }
}

/// A vehicle's location: a cell plus exact progress toward `heading`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoutePosition {
    pub at: Cell,
    pub heading: Option<Cell>,
    pub progress: Fraction,
}

impl RoutePosition {
    pub fn at(cell: Cell) -> Self {
        RoutePosition { at: cell, heading: None, progress: Fraction::zero() }
    }

    pub fn between(at: Cell, heading: Cell, progress: Fraction) -> Self {
        RoutePosition { at, heading: Some(heading), progress }
    }

    pub fn is_on_cell(&self) -> bool {
        self.progress.is_zero()
    }
}

/// Result of [`Grid::advance`].
#[derive(Clone, Debug, PartialEq)]
pub struct Advance {
    pub position: RoutePosition,
    pub traveled: Fraction,
    /// Number of leading stops reached during the move.
    pub reached: usize,
}

/// Memoized A* shortest-path distances on the lattice.
///
/// The simulator uses the closed form in [`Grid::dist`]; this table is the
/// search-based reference it is validated against.
#[derive(Debug)]
pub struct PathCache {
    grid: Grid,
    memo: Mutex<HashMap<(Cell, Cell), u32>>,
}

impl PathCache {
    pub fn new(grid: Grid) -> Self {
        PathCache { grid, memo: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.memo.lock().expect("memo poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance(&self, a: Cell, b: Cell) -> Result<u32> {
        self.grid.check(a)?;
        self.grid.check(b)?;
        let key = if a <= b { (a, b) } else { (b, a) };
        if let Some(&d) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(d);
        }
        let d = self.astar(key.0, key.1);
        self.memo.lock().expect("memo poisoned").insert(key, d);
        Ok(d)
    }

    fn astar(&self, start: Cell, goal: Cell) -> u32 {
        let mut best: HashMap<Cell, u32> = HashMap::new();
        let mut open = BinaryHeap::new();
        best.insert(start, 0);
        open.push(Reverse((start.manhattan(goal), 0u32, start)));
        while let Some(Reverse((_, g, cell))) = open.pop() {
            if cell == goal {
                return g;
            }
            if best.get(&cell).is_some_and(|&b| b < g) {
                continue;
            }
            for next in self.neighbours(cell) {
                let ng = g + 1;
                if best.get(&next).is_none_or(|&b| ng < b) {
                    best.insert(next, ng);
                    open.push(Reverse((ng + next.manhattan(goal), ng, next)));
                }
            }
        }
        unreachable!("lattice is connected")
    }

    fn neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> {
        let (rows, cols) = (self.grid.rows, self.grid.cols);
        [
            (c.row > 0).then(|| Cell::new(c.row - 1, c.col)),
            (c.row + 1 < rows).then(|| Cell::new(c.row + 1, c.col)),
            (c.col > 0).then(|| Cell::new(c.row, c.col - 1)),
            (c.col + 1 < cols).then(|| Cell::new(c.row, c.col + 1)),
        ]
        .into_iter()
        .flatten()
    }
}
