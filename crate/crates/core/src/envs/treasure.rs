//! Deep-sea-treasure style grid: deeper treasures are worth more but take
//! longer to reach, which costs survival reward.

use rand_chacha::ChaCha8Rng;

use super::{EnvSpec, EnvState, Inner, TREASURE};
use crate::error::{Error, Result};
use crate::metrics::pareto_filter;
use crate::momdp::{dot, Preference, VectorReturn};

/// Committed grid definition.
pub const TREASURE_GRID: &str = include_str!("../../data/treasure_grid.txt");

const HORIZON: usize = 24;
/// Survival reward per remaining step, paid when a treasure is reached.
const ALIVE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Free,
    Wall,
    Treasure(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreasureGrid {
    pub rows: usize,
    pub cols: usize,
    cells: Vec<Cell>,
}

impl TreasureGrid {
    /// Parses a whitespace-separated table of `.`, `#` and decimal values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<Cell> = line
                .split_whitespace()
                .map(|tok| match tok {
                    "." => Ok(Cell::Free),
                    "#" => Ok(Cell::Wall),
                    v => v
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x > 0.0)
                        .map(Cell::Treasure)
                        .ok_or_else(|| Error::Parse {
                            line: i + 1,
                            message: format!("bad grid cell `{v}`"),
                        }),
                })
                .collect::<Result<_>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("row has {} cells, expected {c}", row.len()),
                    })
                }
                _ => {}
            }
            cells.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or(Error::Parse {
            line: 1,
            message: "empty grid".into(),
        })?;
        if cells[0] != Cell::Free {
            return Err(Error::Parse {
                line: 1,
                message: "start cell (0, 0) must be free".into(),
            });
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn treasures(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if let Cell::Treasure(v) = self.cell(r, c) {
                    out.push((r, c, v));
                }
            }
        }
        out
    }
}

/// The four moves in tie-break order, with their canonical action vectors.
pub(crate) const MOVES: [([f64; 2], (isize, isize)); 4] = [
    ([1.0, 0.0], (0, 1)),   // right
    ([0.0, 1.0], (1, 0)),   // down
    ([-1.0, 0.0], (0, -1)), // left
    ([0.0, -1.0], (-1, 0)), // up
];

/// Decodes a continuous 2-vector into a move index by its dominant axis.
pub fn decode_action(action: &[f64]) -> usize {
    let (ax, ay) = (action[0], action[1]);
    if ax.abs() >= ay.abs() {
        if ax >= 0.0 {
            0
        } else {
            2
        }
    } else if ay >= 0.0 {
        1
    } else {
        3
    }
}

#[derive(Clone, Debug)]
pub struct Treasure {
    spec: EnvSpec,
    grid: TreasureGrid,
}

impl Treasure {
    pub fn new(grid: TreasureGrid) -> Self {
        let max_value = grid
            .treasures()
            .iter()
            .map(|t| t.2)
            .fold(0.0, f64::max);
        Self {
            spec: EnvSpec {
                name: TREASURE.to_string(),
                n_objectives: 2,
                state_dim: 3,
                action_dim: 2,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
                horizon: HORIZON,
                reward_bounds: vec![(0.0, max_value), (0.0, ALIVE * HORIZON as f64)],
            },
            grid,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TreasureGrid {
        &self.grid
    }

    fn observe(&self, row: usize, col: usize, step: usize) -> Vec<f64> {
        vec![
            row as f64 / (self.grid.rows - 1) as f64,
            col as f64 / (self.grid.cols - 1) as f64,
            (HORIZON - step) as f64 / HORIZON as f64,
        ]
    }

    pub(super) fn reset(&self, rng: ChaCha8Rng) -> EnvState {
        EnvState {
            observation: self.observe(0, 0, 0),
            step_count: 0,
            terminal: false,
            rng,
            inner: Inner::Grid { row: 0, col: 0 },
        }
    }

    /// Cell reached from `(row, col)` by move `m`; blocked moves stay put.
    fn target(&self, row: usize, col: usize, m: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[m].1;
        let (r, c) = (row as isize + dr, col as isize + dc);
        if r < 0 || c < 0 || r >= self.grid.rows as isize || c >= self.grid.cols as isize {
            return (row, col);
        }
        let (r, c) = (r as usize, c as usize);
        if self.grid.cell(r, c) == Cell::Wall {
            (row, col)
        } else {
            (r, c)
        }
    }

    /// Reward for arriving at `(row, col)` on step `step` (1-based), and whether it ends the episode.
    fn arrive(&self, row: usize, col: usize, step: usize) -> ([f64; 2], bool) {
        match self.grid.cell(row, col) {
            Cell::Treasure(v) => ([v, ALIVE * (HORIZON - step + 1) as f64], true),
            _ => ([0.0, 0.0], step >= HORIZON),
        }
    }

    pub(super) fn step(&self, state: &EnvState, action: &[f64]) -> (EnvState, VectorReturn) {
        let Inner::Grid { row, col } = state.inner else {
            unreachable!("treasure state expected")
        };
        let (r, c) = self.target(row, col, decode_action(action));
        let step = state.step_count + 1;
        let (reward, terminal) = self.arrive(r, c, step);
        let next = EnvState {
            observation: self.observe(r, c, step),
            step_count: step,
            terminal: terminal || step >= HORIZON,
            rng: state.rng.clone(),
            inner: Inner::Grid { row: r, col: c },
        };
        (next, VectorReturn::new(reward.to_vec()))
    }

    /// Best move for `pref` from the given state, by backward induction over
    /// (cell, step). Ties go to the earliest move in [`MOVES`] order.
    pub fn expert_move(&self, pref: &Preference, state: &EnvState) -> usize {
        let Inner::Grid { row, col } = state.inner else {
            unreachable!("treasure state expected")
        };
        let n = self.grid.rows * self.grid.cols;
        let w = pref.weights();
        // value[cell] at step t holds the best scalarized return-to-go.
        let mut value = vec![0.0; n];
        for t in (state.step_count..HORIZON).rev() {
            let mut next_value = vec![0.0; n];
            let mut best_move = vec![0usize; n];
            for r in 0..self.grid.rows {
                for c in 0..self.grid.cols {
                    if self.grid.cell(r, c) != Cell::Free {
                        continue;
                    }
                    let mut best = f64::NEG_INFINITY;
                    for m in 0..MOVES.len() {
                        let (nr, nc) = self.target(r, c, m);
                        let (rew, done) = self.arrive(nr, nc, t + 1);
                        let mut q = dot(w, &rew);
                        if !done {
                            q += value[nr * self.grid.cols + nc];
                        }
                        if q > best {
                            best = q;
                            best_move[r * self.grid.cols + c] = m;
                        }
                    }
                    next_value[r * self.grid.cols + c] = best;
                }
            }
            if t == state.step_count {
                return best_move[row * self.grid.cols + col];
            }
            value = next_value;
        }
        0
    }

    /// Pareto-set dynamic programming over (cell, step) with dominance pruning.
    pub fn oracle_front(&self) -> Vec<VectorReturn> {
        let n = self.grid.rows * self.grid.cols;
        let mut fronts: Vec<Vec<VectorReturn>> = vec![vec![VectorReturn::zeros(2)]; n];
        for t in (0..HORIZON).rev() {
            let mut next: Vec<Vec<VectorReturn>> = vec![Vec::new(); n];
            for r in 0..self.grid.rows {
                for c in 0..self.grid.cols {
                    if self.grid.cell(r, c) != Cell::Free {
                        continue;
                    }
                    let mut cands = Vec::new();
                    for m in 0..MOVES.len() {
                        let (nr, nc) = self.target(r, c, m);
                        let (rew, done) = self.arrive(nr, nc, t + 1);
                        if done {
                            cands.push(VectorReturn::new(rew.to_vec()));
                        } else {
                            cands.extend(fronts[nr * self.grid.cols + nc].iter().cloned());
                        }
                    }
                    next[r * self.grid.cols + c] = pareto_filter(&cands);
                }
            }
            fronts = next;
        }
        let mut front = fronts.swap_remove(0);
        front.sort_by(|a, b| b[0].total_cmp(&a[0]));
        front
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, Env};

    #[test]
    fn grid_file_parses() {
        let g = TreasureGrid::parse(TREASURE_GRID).unwrap();
        assert_eq!((g.rows, g.cols), (9, 8));
        let t = g.treasures();
        assert_eq!(t.len(), 8);
        for w in t.windows(2) {
            assert!(w[1].0 > w[0].0, "depth strictly increasing");
            assert!(w[1].2 > w[0].2, "value strictly increasing");
        }
        assert!(matches!(
            TreasureGrid::parse(". .\n. x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            TreasureGrid::parse(". .\n.\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn start_cell_and_treasure_entry() {
        let (env, s) = make_env(TREASURE, 7).unwrap();
        assert_eq!(s.inner, Inner::Grid { row: 0, col: 0 });
        assert_eq!(s.observation, vec![0.0, 0.0, 1.0]);
        // The first treasure sits directly below the start.
        let (n, r, done) = env.step(&s, &[0.0, 1.0]).unwrap();
        assert!(done && n.terminal);
        let g = TreasureGrid::parse(TREASURE_GRID).unwrap();
        let Cell::Treasure(v) = g.cell(1, 0) else { panic!() };
        assert_eq!(r.values(), &[v, ALIVE * HORIZON as f64]);
    }

    #[test]
    fn walls_and_edges_block() {
        let (env, s) = make_env(TREASURE, 0).unwrap();
        let (n, r, _) = env.step(&s, &[0.0, -1.0]).unwrap();
        assert_eq!(n.inner, Inner::Grid { row: 0, col: 0 });
        assert_eq!(r.values(), &[0.0, 0.0]);
        let (n, _, _) = env.step(&s, &[-0.9, 0.3]).unwrap();
        assert_eq!(n.inner, Inner::Grid { row: 0, col: 0 });
    }

    #[test]
    fn decoding_by_dominant_axis() {
        assert_eq!(decode_action(&[0.6, 0.5]), 0);
        assert_eq!(decode_action(&[0.1, -0.5]), 3);
        assert_eq!(decode_action(&[-0.7, 0.5]), 2);
        assert_eq!(decode_action(&[0.0, 0.2]), 1);
        for (m, (v, _)) in MOVES.iter().enumerate() {
            assert_eq!(decode_action(v), m);
        }
    }

    #[test]
    fn oracle_has_eight_points_matching_shortest_paths() {
        let env = Env::by_name(TREASURE).unwrap();
        let front = env.oracle_pareto_front().unwrap();
        assert_eq!(front.len(), 8);
        let g = TreasureGrid::parse(TREASURE_GRID).unwrap();
        for (r, c, v) in g.treasures() {
            // Shortest path is c moves right and r moves down.
            let steps = r + c;
            let expected = [v, ALIVE * (HORIZON - steps + 1) as f64];
            assert!(front.iter().any(|p| p.values() == expected), "missing {expected:?}");
        }
    }
}
