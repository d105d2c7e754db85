//! Grid-world compiler and the two-state toy MDP.
//!
//! Grid coordinates put x = 0 at the left column and y = 0 at the bottom row;
//! the `rows` strings are written top row first. States are the non-wall
//! cells ordered top to bottom, left to right.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_discount, FiniteMdp, Policy, RewardTable, TransitionKernel};

pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(i64, i64); 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

pub fn grid_action_index(name: &str) -> Option<usize> {
    GRID_ACTIONS.iter().position(|a| *a == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Wall,
    White,
    Gray,
    Start,
    Terminal(char),
}

impl CellKind {
    fn parse(c: char) -> Option<Self> {
        match c {
            '#' => Some(CellKind::Wall),
            '.' => Some(CellKind::White),
            'g' => Some(CellKind::Gray),
            'S' => Some(CellKind::Start),
            'A'..='Z' => Some(CellKind::Terminal(c)),
            _ => None,
        }
    }
}

/// One step of an attacker-designated path: in cell (x, y) take `action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub x: usize,
    pub y: usize,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<String>,
    pub terminal_rewards: BTreeMap<String, f64>,
    pub step_reward: f64,
    pub gray_reward: f64,
    pub discount: f64,
    /// Optional target path; states not on it keep their clean greedy action.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target_path: Vec<PathStep>,
}

impl GridWorldSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Shipped transcription of the 7×6 single-goal grid.
    pub fn grid_a() -> Self {
        Self::from_json(include_str!("../data/grid_2a.json")).expect("shipped grid is valid")
    }

    /// Shipped transcription of the 6×6 two-goal grid.
    pub fn grid_b() -> Self {
        Self::from_json(include_str!("../data/grid_2b.json")).expect("shipped grid is valid")
    }

    pub fn cell(&self, x: usize, y: usize) -> CellKind {
        let row = &self.rows[self.height - 1 - y];
        CellKind::parse(row.chars().nth(x).unwrap_or('#')).unwrap_or(CellKind::Wall)
    }

    fn validate(&self) -> Result<()> {
        check_discount(self.discount)?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::arg("grid dimensions must be positive"));
        }
        if self.rows.len() != self.height {
            return Err(Error::arg(format!(
                "grid has {} rows, height is {}",
                self.rows.len(),
                self.height
            )));
        }
        let mut starts = 0;
        let mut terminals = 0;
        for (r, row) in self.rows.iter().enumerate() {
            if row.chars().count() != self.width {
                return Err(Error::arg(format!("row {r} does not have width {}", self.width)));
            }
            for c in row.chars() {
                match CellKind::parse(c) {
                    None => return Err(Error::arg(format!("unknown cell character '{c}'"))),
                    Some(CellKind::Start) => starts += 1,
                    Some(CellKind::Terminal(t)) => {
                        terminals += 1;
                        if !self.terminal_rewards.contains_key(&t.to_string()) {
                            return Err(Error::arg(format!("terminal '{t}' has no reward")));
                        }
                    }
                    Some(_) => {}
                }
            }
        }
        if terminals == 0 {
            return Err(Error::arg("grid needs at least one terminal"));
        }
        if starts > 1 {
            return Err(Error::arg("grid has more than one start cell"));
        }
        let values = self
            .terminal_rewards
            .values()
            .chain([&self.step_reward, &self.gray_reward]);
        if values.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("rewards must be finite"));
        }
        Ok(())
    }
}

/// A compiled grid world: the MDP plus the cell geometry of every state.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub mdp: FiniteMdp,
    pub cells: Vec<(usize, usize)>,
    pub labels: Vec<String>,
    pub start: Option<usize>,
    pub terminals: Vec<usize>,
    width: usize,
    height: usize,
    index: Vec<Option<usize>>,
}

impl GridWorld {
    pub fn state_at(&self, x: usize, y: usize) -> Option<usize> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.index[y * self.width + x]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals.contains(&s)
    }

    pub fn action_labels(&self) -> Vec<String> {
        GRID_ACTIONS.iter().map(|a| a.to_string()).collect()
    }

    /// States visited by following `policy` from `from` until a terminal is
    /// reached, a state repeats, or `max_steps` moves are made.
    pub fn rollout(&self, policy: &Policy, from: usize, max_steps: usize) -> Vec<usize> {
        let mut path = vec![from];
        let mut s = from;
        for _ in 0..max_steps {
            if self.is_terminal(s) {
                break;
            }
            let next = self
                .mdp
                .transition
                .deterministic_successor(s, policy.action(s))
                .expect("grid dynamics are deterministic");
            if path.contains(&next) {
                path.push(next);
                break;
            }
            path.push(next);
            s = next;
        }
        path
    }

    /// Applies path overrides on top of a base policy.
    pub fn policy_with_path(&self, base: &Policy, path: &[PathStep]) -> Result<Policy> {
        let mut policy = base.clone();
        for step in path {
            let s = self.state_at(step.x, step.y).ok_or_else(|| {
                Error::arg(format!("path cell ({}, {}) is not a state", step.x, step.y))
            })?;
            let a = grid_action_index(&step.action)
                .ok_or_else(|| Error::arg(format!("unknown action '{}'", step.action)))?;
            policy.set(s, a);
        }
        Ok(policy)
    }
}

pub fn compile_gridworld(spec: &GridWorldSpec) -> Result<GridWorld> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut index = vec![None; w * h];
    let mut cells = Vec::new();
    for y in (0..h).rev() {
        for x in 0..w {
            if spec.cell(x, y) != CellKind::Wall {
                index[y * w + x] = Some(cells.len());
                cells.push((x, y));
            }
        }
    }
    let ns = cells.len();
    let mut next = vec![vec![0usize; 4]; ns];
    let mut reward = RewardTable::zeros(ns, 4);
    let mut start = None;
    let mut terminals = Vec::new();
    for (s, &(x, y)) in cells.iter().enumerate() {
        let kind = spec.cell(x, y);
        match kind {
            CellKind::Start => start = Some(s),
            CellKind::Terminal(_) => terminals.push(s),
            _ => {}
        }
        for (a, (dx, dy)) in MOVES.iter().enumerate() {
            if let CellKind::Terminal(_) = kind {
                next[s][a] = s;
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            let dest = if nx < 0 || ny < 0 {
                None
            } else {
                index
                    .get(ny as usize * w + nx as usize)
                    .filter(|_| (nx as usize) < w && (ny as usize) < h)
                    .copied()
                    .flatten()
            }
            .unwrap_or(s);
            next[s][a] = dest;
            let (dxc, dyc) = cells[dest];
            let r = match spec.cell(dxc, dyc) {
                CellKind::Terminal(t) => spec.terminal_rewards[&t.to_string()],
                CellKind::Gray if dest != s => spec.gray_reward,
                _ => spec.step_reward,
            };
            reward.set(s, a, r);
        }
    }
    let transition = TransitionKernel::deterministic(ns, &next)?;
    let mdp = FiniteMdp::new(transition, reward, spec.discount)?;
    let labels = cells.iter().map(|(x, y)| format!("x{x}y{y}")).collect();
    Ok(GridWorld {
        mdp,
        cells,
        labels,
        start,
        terminals,
        width: w,
        height: h,
        index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateSpec {
    pub stay_reward: f64,
    pub move_reward: f64,
    pub discount: f64,
}

pub const TWO_STATE_LABELS: [&str; 2] = ["A", "B"];
pub const TWO_STATE_ACTIONS: [&str; 2] = ["stay", "move"];

/// Two states A and B; `stay` self-loops, `move` switches state.
pub fn two_state_mdp(spec: &TwoStateSpec) -> Result<FiniteMdp> {
    let transition = TransitionKernel::deterministic(2, &[vec![0, 1], vec![1, 0]])?;
    let reward = RewardTable::from_rows(&[
        vec![spec.stay_reward, spec.move_reward],
        vec![spec.stay_reward, spec.move_reward],
    ])?;
    FiniteMdp::new(transition, reward, spec.discount)
}
