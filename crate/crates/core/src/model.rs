//! Domain types, parameters, admissibility rules and reward functions.
//!
//! Everything else in the crate depends only on this module. All types are
//! immutable value objects and all operations are pure functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("executed limit size {z_exec} exceeds posted size {posted}")]
    ExecutionExceedsPosting { z_exec: u32, posted: u32 },
}

/// Book side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ask,
    Bid,
}

/// Direction of the most recent one-tick price move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Up, Direction::Down];

    /// +1 for an up move, -1 for a down move.
    pub fn sign(self) -> i64 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// Poisson intensities of one (side, direction) order-flow regime.
///
/// `mu` is the market-order arrival rate, `kappa` the limit-order arrival
/// rate, `theta` the per-unit cancellation rate, all in events per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl RateTriple {
    pub fn new(mu: f64, kappa: f64, theta: f64) -> Self {
        RateTriple { mu, kappa, theta }
    }

    fn validate(&self, label: &str) -> Result<(), ModelError> {
        for (name, v) in [("mu", self.mu), ("kappa", self.kappa), ("theta", self.theta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParams(format!(
                    "{label}.{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SideRates {
    up: RateTriple,
    down: RateTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct AllRates {
    ask: SideRates,
    bid: SideRates,
}

/// Joint pmf of the post-move best (bid, ask) volumes on `{1..N}^2`,
/// stored dense row-major with row index `v_b - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDist {
    n: usize,
    pmf: Vec<f64>,
}

impl VolumeDist {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = rows.len();
        if n == 0 {
            return Err(ModelError::InvalidParams("volume distribution is empty".into()));
        }
        let mut pmf = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::InvalidParams(format!(
                    "volume distribution row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            pmf.extend_from_slice(row);
        }
        let dist = VolumeDist { n, pmf };
        dist.validate()?;
        Ok(dist)
    }

    /// Point mass at a single `(v_b, v_a)` pair.
    pub fn point_mass(n: usize, v_b: u32, v_a: u32) -> Result<Self, ModelError> {
        let mut pmf = vec![0.0; n * n];
        if v_b < 1 || v_a < 1 || v_b as usize > n || v_a as usize > n {
            return Err(ModelError::InvalidParams(format!(
                "point mass ({v_b},{v_a}) outside {{1..{n}}}^2"
            )));
        }
        pmf[(v_b as usize - 1) * n + (v_a as usize - 1)] = 1.0;
        Ok(VolumeDist { n, pmf })
    }

    /// Product of two independent marginals over `{1..n}` (normalised).
    pub fn product(bid_marginal: &[f64], ask_marginal: &[f64]) -> Result<Self, ModelError> {
        let n = bid_marginal.len();
        if n == 0 || ask_marginal.len() != n {
            return Err(ModelError::InvalidParams("marginal lengths differ or empty".into()));
        }
        let sb: f64 = bid_marginal.iter().sum();
        let sa: f64 = ask_marginal.iter().sum();
        if !(sb > 0.0) || !(sa > 0.0) {
            return Err(ModelError::InvalidParams("marginals must have positive mass".into()));
        }
        let mut pmf = Vec::with_capacity(n * n);
        for &b in bid_marginal {
            for &a in ask_marginal {
                pmf.push((b / sb) * (a / sa));
            }
        }
        Ok(VolumeDist { n, pmf })
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.pmf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(ModelError::InvalidParams("volume distribution has a negative or non-finite mass".into()));
        }
        let total: f64 = self.pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidParams(format!(
                "volume distribution sums to {total}, expected 1 within 1e-9"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mass at `(v_b, v_a)`, both in `{1..n}`.
    pub fn prob(&self, v_b: u32, v_a: u32) -> f64 {
        debug_assert!(v_b >= 1 && v_a >= 1);
        self.pmf[(v_b as usize - 1) * self.n + (v_a as usize - 1)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.pmf.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// Iterate `(v_b, v_a, mass)` over entries with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        let n = self.n;
        self.pmf.iter().enumerate().filter(|(_, &p)| p > 0.0).map(move |(i, &p)| {
            ((i / n) as u32 + 1, (i % n) as u32 + 1, p)
        })
    }

    /// Inverse-CDF sample on the flattened pmf; `u` uniform in [0,1).
    pub fn sample(&self, u: f64) -> (u32, u32) {
        let mut acc = 0.0;
        for (i, &p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return ((i / self.n) as u32 + 1, (i % self.n) as u32 + 1);
            }
        }
        (self.n as u32, self.n as u32)
    }
}

/// Full parameter set of the stylised order book.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    rates: AllRates,
    vol_dist_up: VolumeDist,
    vol_dist_down: VolumeDist,
    /// Volume truncation bound N: queues live on `{1..N}`.
    n_max: u32,
    /// Cash value of one unit moving one tick, `rho = tick * lot`.
    rho: f64,
    /// Average bid-side depth used by the terminal market-impact function.
    v_bar: u32,
}

impl ModelParams {
    pub fn new(
        rates: [(Side, Direction, RateTriple); 4],
        vol_dist_up: VolumeDist,
        vol_dist_down: VolumeDist,
        rho: f64,
        v_bar: u32,
    ) -> Result<Self, ModelError> {
        let pick = |side, dir| {
            rates
                .iter()
                .find(|(s, d, _)| *s == side && *d == dir)
                .map(|(_, _, r)| *r)
                .ok_or_else(|| ModelError::InvalidParams(format!("missing rates for {side:?}/{dir:?}")))
        };
        let all = AllRates {
            ask: SideRates { up: pick(Side::Ask, Direction::Up)?, down: pick(Side::Ask, Direction::Down)? },
            bid: SideRates { up: pick(Side::Bid, Direction::Up)?, down: pick(Side::Bid, Direction::Down)? },
        };
        let n_max = vol_dist_up.n() as u32;
        let params = ModelParams { rates: all, vol_dist_up, vol_dist_down, n_max, rho, v_bar };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.rates.ask.up.validate("rates.ask.up")?;
        self.rates.ask.down.validate("rates.ask.down")?;
        self.rates.bid.up.validate("rates.bid.up")?;
        self.rates.bid.down.validate("rates.bid.down")?;
        self.vol_dist_up.validate()?;
        self.vol_dist_down.validate()?;
        if self.vol_dist_up.n() != self.vol_dist_down.n() {
            return Err(ModelError::InvalidParams("vol_dist_up and vol_dist_down have different N".into()));
        }
        if self.n_max < 1 {
            return Err(ModelError::InvalidParams("N must be >= 1".into()));
        }
        if self.v_bar < 1 {
            return Err(ModelError::InvalidParams("v_bar must be >= 1".into()));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(ModelError::InvalidParams(format!("rho must be > 0, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn rates(&self, side: Side, dir: Direction) -> &RateTriple {
        match (side, dir) {
            (Side::Ask, Direction::Up) => &self.rates.ask.up,
            (Side::Ask, Direction::Down) => &self.rates.ask.down,
            (Side::Bid, Direction::Up) => &self.rates.bid.up,
            (Side::Bid, Direction::Down) => &self.rates.bid.down,
        }
    }

    pub fn vol_dist(&self, dir: Direction) -> &VolumeDist {
        match dir {
            Direction::Up => &self.vol_dist_up,
            Direction::Down => &self.vol_dist_down,
        }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn v_bar(&self) -> u32 {
        self.v_bar
    }

    /// Largest `mu + theta` over sides and directions; the regularity
    /// constant behind the kernel-mass bound and contraction estimates.
    pub fn iota(&self) -> f64 {
        [self.rates.ask.up, self.rates.ask.down, self.rates.bid.up, self.rates.bid.down]
            .iter()
            .map(|r| r.mu + r.theta)
            .fold(f64::MIN, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ParamsJson::from(self)).expect("params serialise")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let raw: ParamsJson =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidParams(format!("bad params JSON: {e}")))?;
        raw.try_into()
    }
}

/// Wire schema for [`ModelParams`].
#[derive(Serialize, Deserialize)]
struct ParamsJson {
    rates: AllRates,
    vol_dist_up: Vec<Vec<f64>>,
    vol_dist_down: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    n: u32,
    rho: f64,
    v_bar: u32,
}

impl From<&ModelParams> for ParamsJson {
    fn from(p: &ModelParams) -> Self {
        ParamsJson {
            rates: p.rates,
            vol_dist_up: p.vol_dist_up.rows(),
            vol_dist_down: p.vol_dist_down.rows(),
            n: p.n_max,
            rho: p.rho,
            v_bar: p.v_bar,
        }
    }
}

impl TryFrom<ParamsJson> for ModelParams {
    type Error = ModelError;

    fn try_from(raw: ParamsJson) -> Result<Self, ModelError> {
        let vol_dist_up = VolumeDist::from_rows(raw.vol_dist_up)?;
        let vol_dist_down = VolumeDist::from_rows(raw.vol_dist_down)?;
        if vol_dist_up.n() != raw.n as usize {
            return Err(ModelError::InvalidParams(format!(
                "N = {} does not match volume distribution size {}",
                raw.n,
                vol_dist_up.n()
            )));
        }
        let params = ModelParams {
            rates: raw.rates,
            vol_dist_up,
            vol_dist_down,
            n_max: raw.n,
            rho: raw.rho,
            v_bar: raw.v_bar,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Pre-decision state observed at a price-change epoch.
///
/// `j` is the direction of the move that opened the epoch, `v_b`/`v_a` the
/// best-queue volumes, `p` the ask price in ticks, `z` the executed part of
/// the limit order posted at the previous epoch and `y` the remaining
/// inventory, all in unit size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub j: Direction,
    pub v_b: u32,
    pub v_a: u32,
    pub p: u32,
    pub z: u32,
    pub y: u32,
}

impl SystemState {
    pub fn validate(&self, chi: u32) -> Result<(), ModelError> {
        if self.v_b < 1 || self.v_a < 1 {
            return Err(ModelError::InvalidState(format!(
                "queues are never observed empty at a decision epoch: v_b={}, v_a={}",
                self.v_b, self.v_a
            )));
        }
        if self.p < 1 {
            return Err(ModelError::InvalidState("ask price must be positive".into()));
        }
        if self.z + self.y > chi {
            return Err(ModelError::InvalidState(format!(
                "z + y = {} exceeds the child order size {chi}",
                self.z + self.y
            )));
        }
        Ok(())
    }
}

/// Pair (market-order size, limit-order size) chosen at an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub m: u32,
    pub l: u32,
}

impl Action {
    pub const WAIT: Action = Action { m: 0, l: 0 };

    pub fn new(m: u32, l: u32) -> Self {
        Action { m, l }
    }
}

/// The coordinates of a queueing race that the transition law actually
/// depends on: direction, post-action queue volumes and the agent's order
/// sizes. `m < v_b` always (the agent never sweeps the bid queue).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReducedRaceKey {
    pub j: Direction,
    pub v_b: u32,
    pub v_a: u32,
    pub m: u32,
    pub l: u32,
}

impl ReducedRaceKey {
    pub fn new(j: Direction, v_b: u32, v_a: u32, m: u32, l: u32) -> Result<Self, ModelError> {
        if v_b < 1 || v_a < 1 {
            return Err(ModelError::InvalidState(format!("race starts with empty queue: v_b={v_b}, v_a={v_a}")));
        }
        if m >= v_b {
            return Err(ModelError::InvalidState(format!(
                "market order m={m} must leave at least one unit on the bid (v_b={v_b})"
            )));
        }
        Ok(ReducedRaceKey { j, v_b, v_a, m, l })
    }

    pub fn for_state_action(state: &SystemState, action: Action) -> Result<Self, ModelError> {
        ReducedRaceKey::new(state.j, state.v_b, state.v_a, action.m, action.l)
    }
}

/// All actions `(m, l)` with `0 <= m <= m_max`, `0 <= l <= l_max`,
/// `m < v_b` and `m + l <= y`, in ascending `(m, l)` order.
///
/// Never empty: `(0, 0)` is always admissible.
pub fn admissible_actions(state: &SystemState, m_max: u32, l_max: u32) -> Vec<Action> {
    let mut out = Vec::new();
    for m in 0..=m_max.min(state.v_b.saturating_sub(1)).min(state.y) {
        for l in 0..=l_max.min(state.y - m) {
            out.push(Action::new(m, l));
        }
    }
    out
}

/// Lump-sum payoff collected at a decision epoch:
/// `rho * [m (p - 1) + z (p - j)]`.
///
/// The `m (p - 1)` part is the market order hitting the bid at `p - 1`; the
/// `z (p - j)` part is the previous epoch's matched limit order at the old
/// ask `p - j`, allocated to this epoch.
pub fn periodic_reward(state: &SystemState, action: Action, rho: f64) -> f64 {
    let p = state.p as i64;
    let units = action.m as i64 * (p - 1) + state.z as i64 * (p - state.j.sign());
    rho * units as f64
}

/// Lump-sum payoff at maturity: `rho [(p-1)(y-m) + z_exec] - g(y-m-z_exec)`
/// with linear impact `g(x) = rho x / v_bar`.
///
/// `z_exec` is the part of the limit order matched between the last epoch
/// and maturity; it cannot exceed the posted size.
pub fn terminal_reward(
    state: &SystemState,
    action: Action,
    z_exec: u32,
    rho: f64,
    v_bar: u32,
) -> Result<f64, ModelError> {
    if z_exec > action.l {
        return Err(ModelError::ExecutionExceedsPosting { z_exec, posted: action.l });
    }
    let p = state.p as i64;
    let left = state.y as i64 - action.m as i64;
    debug_assert!(left >= z_exec as i64, "m + z_exec must not exceed y");
    let gross = (p - 1) * left + z_exec as i64;
    let residual = left - z_exec as i64;
    Ok(rho * gross as f64 - rho * residual as f64 / v_bar as f64)
}
