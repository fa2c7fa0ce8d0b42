//! Four-room gridworld.
//!
//! A square grid of odd side split into four rooms by a wall along the middle
//! row and the middle column, with one door per wall segment. Cells are
//! numbered row-major, `state = row * side + col`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Dims, EpisodicMdp, Kernel};

pub const STAY: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
pub const RIGHT: usize = 4;
pub const NUM_ACTIONS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridworldConfig {
    pub side: usize,
    /// Door cells as `(row, col)`; `None` puts one door at the midpoint of
    /// each wall segment.
    pub doors: Option<Vec<(usize, usize)>>,
    pub noise: f64,
    pub horizon: usize,
    pub initial_cell: (usize, usize),
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            side: 11,
            doors: None,
            noise: 0.1,
            horizon: 40,
            initial_cell: (0, 0),
        }
    }
}

/// Cell layout derived from a validated config.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    side: usize,
    walls: Vec<bool>,
}

impl Layout {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.side + col
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        (state / self.side, state % self.side)
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.walls[self.state(row, col)]
    }

    fn step(&self, (r, c): (usize, usize), action: usize) -> Option<(usize, usize)> {
        let next = match action {
            STAY => Some((r, c)),
            UP => r.checked_sub(1).map(|r| (r, c)),
            DOWN => (r + 1 < self.side).then_some((r + 1, c)),
            LEFT => c.checked_sub(1).map(|c| (r, c)),
            RIGHT => (c + 1 < self.side).then_some((r, c + 1)),
            _ => None,
        }?;
        (!self.is_wall(next.0, next.1)).then_some(next)
    }

    /// Accessible 4-neighbours of a cell.
    pub fn neighbours(&self, cell: (usize, usize)) -> Vec<(usize, usize)> {
        [UP, DOWN, LEFT, RIGHT]
            .into_iter()
            .filter_map(|a| self.step(cell, a))
            .collect()
    }

    /// Centres of the four rooms, ordered top-left, top-right, bottom-left,
    /// bottom-right.
    pub fn room_centres(&self) -> [(usize, usize); 4] {
        let mid = self.side / 2;
        let lo = mid / 2;
        let hi = mid + 1 + lo;
        [(lo, lo), (lo, hi), (hi, lo), (hi, hi)]
    }
}

fn default_doors(side: usize) -> Vec<(usize, usize)> {
    let mid = side / 2;
    let lo = mid / 2;
    let hi = mid + 1 + lo;
    vec![(lo, mid), (hi, mid), (mid, lo), (mid, hi)]
}

impl GridworldConfig {
    pub fn doors(&self) -> Vec<(usize, usize)> {
        self.doors.clone().unwrap_or_else(|| default_doors(self.side))
    }

    pub fn layout(&self) -> Result<Layout> {
        let side = self.side;
        if side < 3 || side % 2 == 0 {
            return Err(Error::InvalidGridworld(format!(
                "side must be odd and at least 3, got {side}"
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidGridworld(format!(
                "noise must lie in [0, 1], got {}",
                self.noise
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidGridworld("horizon must be positive".into()));
        }
        let mid = side / 2;
        let mut walls = vec![false; side * side];
        for i in 0..side {
            walls[mid * side + i] = true;
            walls[i * side + mid] = true;
        }
        for (r, c) in self.doors() {
            if r >= side || c >= side || (r != mid && c != mid) || (r == mid && c == mid) {
                return Err(Error::InvalidGridworld(format!(
                    "door ({r}, {c}) does not lie on an interior wall"
                )));
            }
            walls[r * side + c] = false;
        }
        let (r0, c0) = self.initial_cell;
        if r0 >= side || c0 >= side || walls[r0 * side + c0] {
            return Err(Error::InvalidGridworld(format!(
                "initial cell ({r0}, {c0}) is outside the grid or inside a wall"
            )));
        }
        Ok(Layout { side, walls })
    }
}

/// Builds the gridworld MDP. An intended move into a wall or off the grid
/// resolves to staying put; afterwards, with probability `noise`, the agent is
/// displaced to a uniformly random accessible neighbour of the intended cell.
pub fn build_four_room_gridworld(cfg: &GridworldConfig) -> Result<EpisodicMdp> {
    let layout = cfg.layout()?;
    let side = layout.side;
    let s = side * side;
    let dims = Dims::new(cfg.horizon, s, NUM_ACTIONS)?;
    let mut rows = vec![0.0; s * NUM_ACTIONS * s];
    for x in 0..s {
        let cell = layout.cell(x);
        for a in 0..NUM_ACTIONS {
            let row = &mut rows[(x * NUM_ACTIONS + a) * s..(x * NUM_ACTIONS + a + 1) * s];
            if layout.walls[x] {
                row[x] = 1.0;
                continue;
            }
            let target = layout.step(cell, a).unwrap_or(cell);
            let nbrs = layout.neighbours(target);
            let t = layout.state(target.0, target.1);
            if nbrs.is_empty() {
                row[t] = 1.0;
                continue;
            }
            row[t] += 1.0 - cfg.noise;
            let share = cfg.noise / nbrs.len() as f64;
            for (r, c) in nbrs {
                row[layout.state(r, c)] += share;
            }
        }
    }
    let kernel = Kernel::stationary(dims, &rows)?;
    let mut mu0 = vec![0.0; dims.sa()];
    mu0[layout.state(cfg.initial_cell.0, cfg.initial_cell.1) * NUM_ACTIONS + STAY] = 1.0;
    EpisodicMdp::new(kernel, mu0)
}
