//! Finite-horizon semi-Markov decision solver on the reduced state space.
//!
//! The value function depends on the ask price and the carried fill only
//! through an exact affine shift, so tables are solved at a reference price
//! with zero carried fill and translated on demand. States are
//! `(direction, v_b, v_a, inventory)` crossed with a uniform grid of times
//! to maturity.

pub mod iterate;
pub mod solution;

use thiserror::Error;

use crate::kernel::{KernelEntry, KernelTables};
use crate::model::{
    admissible_actions, Action, Direction, ModelParams, ReducedRaceKey, SystemState,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("{0}")]
    Config(String),
    #[error("value iteration hit the update cap ({updates} point updates) at residual {residual:e}")]
    MaxIterations { updates: u64, residual: f64 },
    #[error("policy returned inadmissible action ({0},{1})")]
    InadmissiblePolicy(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMode {
    /// Exhaustive ordered sweeps in increasing time to maturity.
    Deterministic,
    /// Uniformly random point updates (epochs of one table size), the
    /// asynchronous scheme; retained for fidelity experiments.
    Randomized { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Child order size; inventory lives in `0..=chi`.
    pub chi: u32,
    /// Trading horizon in seconds.
    pub horizon: f64,
    /// Number of maturity grid points on `[0, horizon]`.
    pub lambda_points: usize,
    /// Sup-norm stopping tolerance.
    pub tol: f64,
    /// Update damping in (0, 1]; 1 replaces outright.
    pub gamma: f64,
    pub m_max: u32,
    pub l_max: u32,
    pub max_point_updates: u64,
    pub sweep: SweepMode,
    /// Reference ask price of the stored tables (smallest value keeping
    /// the bid positive).
    pub p_ref: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            chi: 2,
            horizon: 10.0,
            lambda_points: 101,
            tol: 1e-3,
            gamma: 1.0,
            m_max: 2,
            l_max: 2,
            max_point_updates: 10_000_000,
            sweep: SweepMode::Deterministic,
            p_ref: 2,
        }
    }
}

/// Exact price/fill translation of the value function:
/// `V(p, z) = V(p_ref, z_ref) + rho (p - p_ref)(y + z) + rho (z - z_ref)(p_ref - j)`.
pub fn translate_value(
    v_ref: f64,
    p: u32,
    p_ref: u32,
    z: u32,
    z_ref: u32,
    j: Direction,
    y: u32,
    rho: f64,
) -> f64 {
    v_ref
        + rho * (p as i64 - p_ref as i64) as f64 * (y + z) as f64
        + rho * (z as i64 - z_ref as i64) as f64 * (p_ref as i64 - j.sign()) as f64
}

/// Flat layout of the reduced tables.
#[derive(Debug, Clone, Copy)]
pub struct ReducedIndexer {
    pub n: u32,
    pub chi: u32,
    pub lambda_len: usize,
}

impl ReducedIndexer {
    pub fn state_count(&self) -> usize {
        2 * (self.n as usize) * (self.n as usize) * (self.chi as usize + 1)
    }

    pub fn table_len(&self) -> usize {
        self.state_count() * self.lambda_len
    }

    pub fn dir_idx(dir: Direction) -> usize {
        match dir {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }

    pub fn state_idx(&self, dir: Direction, v_b: u32, v_a: u32, y: u32) -> usize {
        let n = self.n as usize;
        ((Self::dir_idx(dir) * n + (v_b as usize - 1)) * n + (v_a as usize - 1)) * (self.chi as usize + 1)
            + y as usize
    }

    pub fn flat(&self, state_idx: usize, lambda_idx: usize) -> usize {
        state_idx * self.lambda_len + lambda_idx
    }

    pub fn states(&self) -> impl Iterator<Item = (Direction, u32, u32, u32)> + '_ {
        let n = self.n;
        let chi = self.chi;
        Direction::BOTH.into_iter().flat_map(move |dir| {
            (1..=n).flat_map(move |v_b| {
                (1..=n).flat_map(move |v_a| (0..=chi).map(move |y| (dir, v_b, v_a, y)))
            })
        })
    }
}

/// One admissible action at a state, with its kernel data resolved.
pub(crate) struct ActionChoice {
    pub(crate) action: Action,
    /// Index into the solver's entry arena.
    entry: usize,
}

/// Kernel data in sweep-friendly form: per outcome, the per-cell kernel
/// increments on the maturity grid.
struct SolverEntry {
    l: u32,
    outcomes: Vec<OutcomeCells>,
    /// `terminal[k * (l+1) + z]`.
    terminal: Vec<f64>,
}

struct OutcomeCells {
    dir_idx: usize,
    fill: u32,
    /// `delta[c]` is the kernel mass on cell `(c dt, (c+1) dt]`.
    delta: Vec<f64>,
}

pub struct Solver<'a> {
    pub params: &'a ModelParams,
    pub cfg: SolverConfig,
    pub idx: ReducedIndexer,
    pub lambda_step: f64,
    entries: Vec<SolverEntry>,
    /// Per state, the admissible actions with resolved kernel entries.
    actions: Vec<Vec<ActionChoice>>,
}

impl<'a> Solver<'a> {
    pub fn new(params: &'a ModelParams, tables: &KernelTables, cfg: SolverConfig) -> Result<Self, SolverError> {
        if (tables.lambda_step * (cfg.lambda_points as f64 - 1.0) - cfg.horizon).abs() > 1e-9 {
            return Err(SolverError::Config(format!(
                "lambda grid mismatch: {} points of step {} do not span the horizon {}",
                cfg.lambda_points, tables.lambda_step, cfg.horizon
            )));
        }
        if cfg.lambda_points > tables.lambda_len {
            return Err(SolverError::Config(
                "kernel tables do not cover the requested horizon".into(),
            ));
        }
        if cfg.m_max > tables.m_max || cfg.l_max > tables.l_max {
            return Err(SolverError::Config(
                "kernel tables were built with smaller action bounds".into(),
            ));
        }
        if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
            return Err(SolverError::Config(format!("gamma must lie in (0, 1], got {}", cfg.gamma)));
        }
        if cfg.p_ref < 2 {
            return Err(SolverError::Config("p_ref must keep the bid price positive".into()));
        }

        let idx = ReducedIndexer { n: tables.n, chi: cfg.chi, lambda_len: cfg.lambda_points };
        let mut entries = Vec::new();
        let mut entry_of_key = std::collections::HashMap::new();
        let mut actions = Vec::with_capacity(idx.state_count());

        for (dir, v_b, v_a, y) in idx.states() {
            let state = SystemState { j: dir, v_b, v_a, p: cfg.p_ref, z: 0, y };
            let mut choices = Vec::new();
            for action in admissible_actions(&state, cfg.m_max, cfg.l_max) {
                let key = ReducedRaceKey::for_state_action(&state, action).expect("admissible");
                let entry = *entry_of_key.entry(key).or_insert_with(|| {
                    let e = tables.entry(&key).expect("kernel tables cover every admissible key");
                    entries.push(make_entry(e, cfg.lambda_points));
                    entries.len() - 1
                });
                choices.push(ActionChoice { action, entry });
            }
            actions.push(choices);
        }

        Ok(Solver { params, cfg, idx, lambda_step: tables.lambda_step, entries, actions })
    }

    /// Initial table: immediate-liquidation book value plus a linear bonus
    /// in time to maturity.
    pub fn initial_table(&self) -> Vec<f64> {
        let rho = self.params.rho();
        let p1 = (self.cfg.p_ref - 1) as f64;
        let mut v = vec![0.0; self.idx.table_len()];
        for (si, (_, _, _, y)) in self.idx.states().enumerate() {
            for k in 0..self.idx.lambda_len {
                let lambda = k as f64 * self.lambda_step;
                v[self.idx.flat(si, k)] =
                    rho * p1 * y as f64 + lambda * rho * y as f64 / self.cfg.horizon;
            }
        }
        v
    }

    /// Volume-averaged continuation table consistent with `v`:
    /// `ubar[(dir, y, k)] = sum_w f_dir(w) v[(dir, w, y, k)]`.
    pub fn ubar_from(&self, v: &[f64]) -> Vec<f64> {
        let mut ubar = vec![0.0; 2 * (self.idx.chi as usize + 1) * self.idx.lambda_len];
        for dir in Direction::BOTH {
            let f = self.params.vol_dist(dir);
            for y in 0..=self.idx.chi {
                for (v_b, v_a, mass) in f.support() {
                    let si = self.idx.state_idx(dir, v_b, v_a, y);
                    let base = self.ubar_idx(ReducedIndexer::dir_idx(dir), y, 0);
                    for k in 0..self.idx.lambda_len {
                        ubar[base + k] += mass * v[self.idx.flat(si, k)];
                    }
                }
            }
        }
        ubar
    }

    #[inline]
    pub fn ubar_idx(&self, dir_idx: usize, y: u32, k: usize) -> usize {
        (dir_idx * (self.idx.chi as usize + 1) + y as usize) * self.idx.lambda_len + k
    }

    /// Terminal-reward factor `w(e, action, z)` at the reference price.
    #[inline]
    fn terminal_reward_ref(&self, y: u32, m: u32, z: u32) -> f64 {
        let rho = self.params.rho();
        let left = (y - m) as f64;
        let p1 = (self.cfg.p_ref - 1) as f64;
        rho * (p1 * left + z as f64) - rho * (left - z as f64) / self.params.v_bar() as f64
    }

    /// Bellman right-hand side for one tabulated state and action, reading
    /// continuation values from `ubar`.
    fn rhs_choice(&self, ubar: &[f64], y: u32, lambda_idx: usize, choice: &ActionChoice) -> f64 {
        let entry = &self.entries[choice.entry];
        let action = choice.action;
        let rho = self.params.rho();
        let mut total = rho * action.m as f64 * (self.cfg.p_ref - 1) as f64;

        // Terminal part: the race outlasts maturity with some fill.
        let lrow = lambda_idx * (entry.l as usize + 1);
        for z in 0..=entry.l.min(y - action.m) {
            total += self.terminal_reward_ref(y, action.m, z) * entry.terminal[lrow + z as usize];
        }

        // Continuation: midpoint Stieltjes sum against the kernel cells,
        // with the value linearly interpolated in maturity (midpoints fall
        // exactly between nodes).
        let p_ref = self.cfg.p_ref as i64;
        for o in &entry.outcomes {
            let y_next = y - action.m - o.fill;
            let jt = if o.dir_idx == 0 { 1i64 } else { -1 };
            let shift = rho * ((jt * (y_next + o.fill) as i64) + o.fill as i64 * (p_ref - jt)) as f64;
            let row = self.ubar_idx(o.dir_idx, y_next, 0);
            let mut cont = 0.0;
            let mut mass = 0.0;
            for c in 0..lambda_idx {
                let dq = o.delta[c];
                // Cell c covers (c dt, (c+1) dt]; its midpoint sits between
                // maturity nodes lambda_idx - c - 1 and lambda_idx - c.
                let hi = lambda_idx - c;
                cont += dq * 0.5 * (ubar[row + hi] + ubar[row + hi - 1]);
                mass += dq;
            }
            total += cont + mass * shift;
        }
        total
    }

    /// Bellman right-hand side for an arbitrary full state (any price and
    /// carried fill) against a reduced value table.
    pub fn bellman_rhs(&self, v: &[f64], state: &SystemState, lambda_idx: usize, action: Action) -> f64 {
        let ubar = self.ubar_from(v);
        self.bellman_rhs_with_ubar(&ubar, state, lambda_idx, action)
    }

    pub(crate) fn bellman_rhs_with_ubar(
        &self,
        ubar: &[f64],
        state: &SystemState,
        lambda_idx: usize,
        action: Action,
    ) -> f64 {
        let rho = self.params.rho();
        let p = state.p as i64;
        let choice = self.actions[self.idx.state_idx(state.j, state.v_b, state.v_a, state.y)]
            .iter()
            .find(|c| c.action == action)
            .expect("action admissible for state");
        let entry = &self.entries[choice.entry];

        let mut total = crate::model::periodic_reward(state, action, rho);
        let lrow = lambda_idx * (entry.l as usize + 1);
        for z in 0..=entry.l.min(state.y - action.m) {
            let w = crate::model::terminal_reward(state, action, z, rho, self.params.v_bar())
                .expect("fill within posting");
            total += w * entry.terminal[lrow + z as usize];
        }
        let p_ref = self.cfg.p_ref as i64;
        for o in &entry.outcomes {
            let y_next = state.y - action.m - o.fill;
            let jt = if o.dir_idx == 0 { 1i64 } else { -1 };
            // Continuation state price is p + jt; translate from the
            // reference-price, zero-fill table.
            let shift = rho
                * ((p + jt - p_ref) as f64 * (y_next + o.fill) as f64
                    + o.fill as f64 * (p_ref - jt) as f64);
            let row = self.ubar_idx(o.dir_idx, y_next, 0);
            let mut cont = 0.0;
            let mut mass = 0.0;
            for c in 0..lambda_idx {
                let dq = o.delta[c];
                let hi = lambda_idx - c;
                cont += dq * 0.5 * (ubar[row + hi] + ubar[row + hi - 1]);
                mass += dq;
            }
            total += cont + mass * shift;
        }
        total
    }

    /// One synchronous application of the optimality operator to an
    /// arbitrary table (no projection, no in-place reuse).
    pub fn apply_bellman(&self, v: &[f64]) -> Vec<f64> {
        let ubar = self.ubar_from(v);
        let mut out = vec![0.0; v.len()];
        for (si, choices) in self.actions.iter().enumerate() {
            let y = (si % (self.idx.chi as usize + 1)) as u32;
            for k in 0..self.idx.lambda_len {
                let best = choices
                    .iter()
                    .map(|c| self.rhs_choice(&ubar, y, k, c))
                    .fold(f64::NEG_INFINITY, f64::max);
                out[self.idx.flat(si, k)] = best;
            }
        }
        out
    }
}

fn make_entry(e: &KernelEntry, lambda_points: usize) -> SolverEntry {
    let outcomes = e
        .outcomes
        .iter()
        .map(|o| OutcomeCells {
            dir_idx: ReducedIndexer::dir_idx(o.dir),
            fill: o.fill,
            delta: (1..lambda_points).map(|i| o.cdf[i] - o.cdf[i - 1]).collect(),
        })
        .collect();
    let terminal = (0..lambda_points)
        .flat_map(|k| (0..=e.key.l as usize).map(move |z| e.terminal_prob(k, z as u32)))
        .collect();
    SolverEntry { l: e.key.l, outcomes, terminal }
}

pub use iterate::{evaluate_policy_value, extract_policy, value_iteration};
pub use solution::{Convergence, Solution};
