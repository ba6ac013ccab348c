//! Deterministic gridworlds built from ASCII maps.
//!
//! Map characters: `.` free, `#` wall, `S` start, `G` terminal. States are
//! the non-wall cells numbered row-major. Moving into a wall or off the
//! border keeps the agent in place; entering the terminal pays reward 1.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{StateDistribution, TabularMDP};

/// The shipped 4×6 map: 16 free cells, 8 walls, start lower-left, terminal
/// upper-right. Free cells form a tree, so every state has a unique optimal
/// action, and the bottom-right cell (state 15) lies on most optimal paths.
pub const DEFAULT_MAP: &str = "\
##.#.G
#...#.
.##.#.
S.....
";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (row delta, column delta)
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Wall,
    Start,
    Terminal,
}

impl Cell {
    fn from_char(c: char) -> Option<Cell> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Wall),
            'S' => Some(Cell::Start),
            'G' => Some(Cell::Terminal),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Wall => '#',
            Cell::Start => 'S',
            Cell::Terminal => 'G',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    /// Row-major cell index of each state.
    state_cells: Vec<usize>,
}

/// How the initial state distribution is laid out over the gridworld.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialDistMode {
    SingleStart,
    /// Uniform over every non-terminal state.
    UniformAll,
    /// Uniform over the listed states; terminal indices are dropped.
    UniformSubset(Vec<usize>),
}

impl GridSpec {
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<Cell>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Structure("grid has no cells".into()));
        }
        if cells.len() != rows * cols {
            return Err(Error::Structure(format!(
                "expected {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        let terminals = cells.iter().filter(|c| **c == Cell::Terminal).count();
        if terminals != 1 {
            return Err(Error::Structure(format!(
                "grid must have exactly one terminal cell, found {terminals}"
            )));
        }
        let starts = cells.iter().filter(|c| **c == Cell::Start).count();
        if starts > 1 {
            return Err(Error::Structure(format!(
                "grid has {starts} start cells, at most one allowed"
            )));
        }
        let state_cells: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] != Cell::Wall).collect();
        let spec = Self {
            rows,
            cols,
            cells,
            state_cells,
        };
        let reached = spec.reachable_from(spec.state_cells[0]);
        if reached.len() != spec.state_cells.len() {
            let cut: Vec<(usize, usize)> = spec
                .state_cells
                .iter()
                .filter(|c| !reached.contains(c))
                .map(|&c| (c / cols, c % cols))
                .collect();
            return Err(Error::Structure(format!(
                "free region is disconnected; cells {cut:?} are unreachable"
            )));
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::Structure("empty grid map".into()));
        }
        let cols = lines[0].chars().count();
        let mut cells = Vec::with_capacity(lines.len() * cols);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Structure(format!(
                    "ragged map: row {r} has {} columns, expected {cols}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                cells.push(Cell::from_char(ch).ok_or_else(|| {
                    Error::Structure(format!("unknown map character {ch:?} at row {r}, column {c}"))
                })?);
            }
        }
        Self::from_cells(lines.len(), cols, cells)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn default_map() -> Self {
        Self::parse(DEFAULT_MAP).expect("shipped map is valid")
    }

    /// Random connected map with one start and one terminal. Resamples until the
    /// free region is connected.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, n_walls: usize, rng: &mut R) -> Result<Self> {
        let total = rows * cols;
        if n_walls + 2 > total {
            return Err(Error::input("too many walls for the grid size"));
        }
        for _ in 0..10_000 {
            let mut cells = vec![Cell::Free; total];
            let mut idx: Vec<usize> = (0..total).collect();
            for i in 0..(n_walls + 2) {
                let j = rng.random_range(i..total);
                idx.swap(i, j);
            }
            for &i in &idx[..n_walls] {
                cells[i] = Cell::Wall;
            }
            cells[idx[n_walls]] = Cell::Start;
            cells[idx[n_walls + 1]] = Cell::Terminal;
            if let Ok(spec) = Self::from_cells(rows, cols, cells) {
                return Ok(spec);
            }
        }
        Err(Error::Structure("could not sample a connected map".into()))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn n_states(&self) -> usize {
        self.state_cells.len()
    }

    /// (row, col) of a state index.
    pub fn state_position(&self, s: usize) -> (usize, usize) {
        let c = self.state_cells[s];
        (c / self.cols, c % self.cols)
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.state_cells.binary_search(&(row * self.cols + col)).ok()
    }

    pub fn terminal_state(&self) -> usize {
        self.state_cells
            .iter()
            .position(|&c| self.cells[c] == Cell::Terminal)
            .expect("validated")
    }

    pub fn start_state(&self) -> Option<usize> {
        self.state_cells.iter().position(|&c| self.cells[c] == Cell::Start)
    }

    /// Successor state of a deterministic move; walls and borders keep the agent in place.
    pub fn step(&self, s: usize, action: Action) -> usize {
        let (r, c) = self.state_position(s);
        let (dr, dc) = action.delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            return s;
        }
        self.state_at(nr as usize, nc as usize).unwrap_or(s)
    }

    /// Breadth-first step counts to the terminal (terminal itself is 0).
    pub fn shortest_path_lengths(&self) -> Vec<usize> {
        let n = self.n_states();
        let goal = self.terminal_state();
        let mut dist = vec![usize::MAX; n];
        dist[goal] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(s) = queue.pop_front() {
            for a in Action::ALL {
                let t = self.step(s, a);
                if t != s && dist[t] == usize::MAX {
                    dist[t] = dist[s] + 1;
                    queue.push_back(t);
                }
            }
        }
        dist
    }

    fn reachable_from(&self, cell: usize) -> Vec<usize> {
        let mut seen = vec![false; self.cells.len()];
        let mut out = Vec::new();
        let mut stack = vec![cell];
        seen[cell] = true;
        while let Some(c) = stack.pop() {
            out.push(c);
            let (r, col) = (c / self.cols, c % self.cols);
            let mut nbrs = Vec::with_capacity(4);
            if r > 0 {
                nbrs.push(c - self.cols);
            }
            if r + 1 < self.rows {
                nbrs.push(c + self.cols);
            }
            if col > 0 {
                nbrs.push(c - 1);
            }
            if col + 1 < self.cols {
                nbrs.push(c + 1);
            }
            for nb in nbrs {
                if !seen[nb] && self.cells[nb] != Cell::Wall {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        out
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                write!(f, "{}", self.cell(r, c).to_char())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

pub fn initial_distribution(spec: &GridSpec, mode: &InitialDistMode) -> Result<StateDistribution> {
    let n = spec.n_states();
    let goal = spec.terminal_state();
    match mode {
        InitialDistMode::SingleStart => {
            let s = spec
                .start_state()
                .ok_or_else(|| Error::Structure("map has no start cell".into()))?;
            StateDistribution::point(n, s)
        }
        InitialDistMode::UniformAll => {
            let support: Vec<usize> = (0..n).filter(|&s| s != goal).collect();
            StateDistribution::uniform_over(n, &support)
        }
        InitialDistMode::UniformSubset(states) => {
            if let Some(bad) = states.iter().find(|&&s| s >= n) {
                return Err(Error::input(format!("state {bad} out of range 0..{n}")));
            }
            let support: Vec<usize> = states.iter().copied().filter(|&s| s != goal).collect();
            StateDistribution::uniform_over(n, &support)
        }
    }
}

pub fn build_gridworld(spec: &GridSpec, discount: f64, mode: &InitialDistMode) -> Result<TabularMDP> {
    let n = spec.n_states();
    let n_actions = Action::ALL.len();
    let goal = spec.terminal_state();
    let mut transition = vec![0.0; n * n_actions * n];
    let mut reward = vec![0.0; n * n_actions * n];
    for s in 0..n {
        for a in Action::ALL {
            let base = (s * n_actions + a.index()) * n;
            if s == goal {
                transition[base + s] = 1.0;
                continue;
            }
            let next = spec.step(s, a);
            transition[base + next] = 1.0;
            if next == goal {
                reward[base + next] = 1.0;
            }
        }
    }
    let d0 = initial_distribution(spec, mode)?;
    TabularMDP::new(n, n_actions, transition, reward, d0, discount, vec![goal])
}
