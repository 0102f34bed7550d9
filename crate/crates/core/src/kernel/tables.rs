//! Tabulated kernels for the solver: per race key, the outcome-resolved
//! sub-distributions sampled on the solver's time resolution, the outcome
//! masses accumulated to the far end of the cache grid, and the terminal
//! kernel on the maturity grid.

use std::io::Write;

use rayon::prelude::*;

use crate::fpt::{FptCache, GridSpec};
use crate::model::{Action, Direction, ModelParams, ReducedRaceKey, SystemState};

use super::scenarios::assemble_outcomes;
use super::terminal::terminal_probs;
use super::KernelError;

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub m_max: u32,
    pub l_max: u32,
    /// Time-to-maturity horizon; the terminal kernel is tabulated on
    /// `[0, horizon]`.
    pub horizon: f64,
    /// Step of both the stored kernel curves and the terminal grid.
    pub lambda_step: f64,
    /// End of the stored kernel curves (diagnostics read beyond the
    /// horizon, e.g. late duration buckets).
    pub table_end: f64,
    pub grid: GridSpec,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            m_max: 2,
            l_max: 2,
            horizon: 10.0,
            lambda_step: 0.1,
            table_end: 25.0,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelOutcome {
    pub dir: Direction,
    pub fill: u32,
    /// CDF samples at `t = i * lambda_step`, `i = 0..=table_len`.
    pub cdf: Vec<f64>,
    /// CDF value at the far end of the cache grid.
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct KernelEntry {
    pub key: ReducedRaceKey,
    pub outcomes: Vec<KernelOutcome>,
    /// `terminal[i * (l + 1) + z] = P(fill = z | lambda_i)`.
    pub terminal: Vec<f64>,
}

impl KernelEntry {
    pub fn outcome(&self, dir: Direction, fill: u32) -> Option<&KernelOutcome> {
        self.outcomes.iter().find(|o| o.dir == dir && o.fill == fill)
    }

    /// Total outcome mass at the far grid end; 1 up to the unresolved-race
    /// residual.
    pub fn normalization(&self) -> f64 {
        self.outcomes.iter().map(|o| o.mass).sum()
    }

    pub fn terminal_prob(&self, lambda_idx: usize, fill: u32) -> f64 {
        let l = self.key.l as usize;
        if fill as usize > l {
            return 0.0;
        }
        self.terminal[lambda_idx * (l + 1) + fill as usize]
    }
}

pub struct KernelTables {
    pub n: u32,
    pub m_max: u32,
    pub l_max: u32,
    pub lambda_step: f64,
    /// Stored-curve sample count (including t = 0).
    pub table_len: usize,
    /// Terminal-grid sample count (including lambda = 0).
    pub lambda_len: usize,
    pub t_max: f64,
    entries: Vec<Option<KernelEntry>>,
    pub warnings: Vec<String>,
}

impl KernelTables {
    fn slot(&self, key: &ReducedRaceKey) -> usize {
        let dir = match key.j {
            Direction::Up => 0usize,
            Direction::Down => 1,
        };
        let n = self.n as usize;
        (((dir * n + (key.v_b as usize - 1)) * n + (key.v_a as usize - 1)) * (self.m_max as usize + 1)
            + key.m as usize)
            * (self.l_max as usize + 1)
            + key.l as usize
    }

    pub fn entry(&self, key: &ReducedRaceKey) -> Option<&KernelEntry> {
        self.entries.get(self.slot(key)).and_then(|e| e.as_ref())
    }

    pub fn keys(&self) -> impl Iterator<Item = &ReducedRaceKey> {
        self.entries.iter().flatten().map(|e| &e.key)
    }

    /// `Q(t, dir, fill | key)` with linear interpolation on the stored
    /// curve; beyond the curve the value relaxes linearly to the far-end
    /// mass (only diagnostics read there).
    pub fn reduced_cdf(&self, key: &ReducedRaceKey, dir: Direction, fill: u32, t: f64) -> f64 {
        let Some(entry) = self.entry(key) else { return 0.0 };
        let Some(o) = entry.outcome(dir, fill) else { return 0.0 };
        if t <= 0.0 {
            return 0.0;
        }
        let end = (o.cdf.len() - 1) as f64 * self.lambda_step;
        if t >= self.t_max {
            return o.mass;
        }
        if t >= end {
            let w = (t - end) / (self.t_max - end);
            return o.cdf[o.cdf.len() - 1] * (1.0 - w) + o.mass * w;
        }
        let x = t / self.lambda_step;
        let i = x.floor() as usize;
        let frac = x - i as f64;
        o.cdf[i] * (1.0 - frac) + o.cdf[i + 1] * frac
    }

    /// Mass of `Q(t, . | key)` summed over outcomes.
    pub fn total_mass_at(&self, key: &ReducedRaceKey, t: f64) -> f64 {
        self.entry(key)
            .map(|e| e.outcomes.iter().map(|o| self.reduced_cdf(key, o.dir, o.fill, t)).sum())
            .unwrap_or(0.0)
    }

    /// Shifts one entry's first outcome upward; negative-control hook for
    /// the simulator cross-check.
    #[doc(hidden)]
    pub fn corrupt_for_test(&mut self, key: &ReducedRaceKey, shift: f64) {
        let slot = self.slot(key);
        let entry = self.entries[slot].as_mut().expect("key exists");
        for v in entry.outcomes[0].cdf.iter_mut().skip(1) {
            *v = (*v + shift).min(1.0);
        }
        entry.outcomes[0].mass = (entry.outcomes[0].mass + shift).min(1.0);
    }

    /// Audit dump: `key, dir, fill, t, value` rows for every stored sample.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "j,v_b,v_a,m,l,outcome_dir,outcome_fill,t,value")?;
        for e in self.entries.iter().flatten() {
            let k = &e.key;
            for o in &e.outcomes {
                for (i, v) in o.cdf.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        k.j.sign(),
                        k.v_b,
                        k.v_a,
                        k.m,
                        k.l,
                        o.dir.sign(),
                        o.fill,
                        i as f64 * self.lambda_step,
                        v
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Builds kernel tables for every race key with `v_b, v_a <= N`,
/// `m <= min(m_max, v_b - 1)`, `l <= l_max`. Deterministic given inputs.
pub fn build_tables(params: &ModelParams, cfg: &KernelConfig) -> Result<KernelTables, KernelError> {
    let step_ratio = cfg.lambda_step / cfg.grid.fine_step;
    if (step_ratio - step_ratio.round()).abs() > 1e-9 || step_ratio < 1.0 {
        return Err(KernelError::Config(format!(
            "lambda_step {} must be a positive multiple of the fine grid step {}",
            cfg.lambda_step, cfg.grid.fine_step
        )));
    }
    if cfg.table_end > cfg.grid.fine_end || cfg.horizon > cfg.grid.fine_end {
        return Err(KernelError::Config(
            "stored curves and the maturity horizon must fit inside the fine grid segment".into(),
        ));
    }

    let cache = FptCache::build(params, cfg.l_max, &cfg.grid)?;
    let mut warnings = cache.warnings.clone();
    let n = params.n_max();
    let table_len = (cfg.table_end / cfg.lambda_step).round() as usize + 1;
    let lambda_len = (cfg.horizon / cfg.lambda_step).round() as usize + 1;
    let stride = cfg.grid.fine_step;
    let _ = stride;

    let mut all_keys = Vec::new();
    for dir in Direction::BOTH {
        for v_b in 1..=n {
            for v_a in 1..=n {
                for m in 0..=cfg.m_max.min(v_b - 1) {
                    for l in 0..=cfg.l_max {
                        all_keys.push(ReducedRaceKey::new(dir, v_b, v_a, m, l).unwrap());
                    }
                }
            }
        }
    }

    let built: Vec<(ReducedRaceKey, KernelEntry, f64)> = all_keys
        .par_iter()
        .map(|key| {
            let curves = cache.dir(key.j);
            let (raw, worst) = assemble_outcomes(&cache.grid, curves, key);
            let outcomes: Vec<KernelOutcome> = raw
                .into_iter()
                .map(|r| {
                    let cdf: Vec<f64> = (0..table_len)
                        .map(|i| {
                            let k = cache
                                .grid
                                .fine_index(i as f64 * cfg.lambda_step)
                                .expect("table times lie on the fine grid");
                            r.cdf[k]
                        })
                        .collect();
                    let mass = *r.cdf.last().unwrap();
                    KernelOutcome { dir: r.dir, fill: r.fill, cdf, mass }
                })
                .collect();

            let mut terminal = Vec::with_capacity(lambda_len * (key.l as usize + 1));
            for i in 0..lambda_len {
                terminal.extend(terminal_probs(&cache.grid, curves, key, i as f64 * cfg.lambda_step));
            }
            (*key, KernelEntry { key: *key, outcomes, terminal }, worst)
        })
        .collect();

    let worst_monotone = built.iter().map(|(_, _, w)| *w).fold(0.0, f64::max);
    if worst_monotone > 1e-4 {
        warnings.push(format!(
            "largest raw kernel monotonicity violation {worst_monotone:.2e} (re-monotonized)"
        ));
    }

    let mut failures: Vec<(ReducedRaceKey, f64)> = built
        .iter()
        .filter_map(|(k, e, _)| {
            let mass = e.normalization();
            (mass < 1.0 - 5e-3).then_some((*k, mass))
        })
        .collect();
    if !failures.is_empty() {
        failures.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (worst_key, worst_mass) = failures[0];
        return Err(KernelError::GridTooShort { failures, worst_key, worst_mass });
    }

    let mut tables = KernelTables {
        n,
        m_max: cfg.m_max,
        l_max: cfg.l_max,
        lambda_step: cfg.lambda_step,
        table_len,
        lambda_len,
        t_max: cache.grid.t_max(),
        entries: vec![
            None;
            2 * n as usize * n as usize * (cfg.m_max as usize + 1) * (cfg.l_max as usize + 1)
        ],
        warnings,
    };
    for (key, entry, _) in built {
        let slot = tables.slot(&key);
        tables.entries[slot] = Some(entry);
    }
    Ok(tables)
}

/// Full-state transition kernel `Q(t, e~ | e, action)`: the reduced race
/// law times the post-move volume draw, with the price and inventory moves
/// forced by consistency.
pub fn full_kernel(
    tables: &KernelTables,
    params: &ModelParams,
    state: &SystemState,
    action: Action,
    t: f64,
    next: &SystemState,
) -> f64 {
    let price_ok = next.p as i64 == state.p as i64 + next.j.sign();
    let inv_ok = next.y as i64 == state.y as i64 - action.m as i64 - next.z as i64;
    if !price_ok || !inv_ok {
        return 0.0;
    }
    let Ok(key) = ReducedRaceKey::for_state_action(state, action) else {
        return 0.0;
    };
    tables.reduced_cdf(&key, next.j, next.z, t) * params.vol_dist(next.j).prob(next.v_b, next.v_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RateTriple, Side, VolumeDist};

    fn tiny_params(n: usize) -> ModelParams {
        let thin = vec![0.6, 0.3, 0.1];
        let deep = vec![0.2, 0.3, 0.5];
        let up = VolumeDist::product(&thin[..n], &deep[..n]).unwrap();
        let down = VolumeDist::product(&deep[..n], &thin[..n]).unwrap();
        ModelParams::new(
            [
                (Side::Ask, Direction::Up, RateTriple::new(0.8, 1.2, 0.9)),
                (Side::Bid, Direction::Up, RateTriple::new(0.9, 1.0, 0.8)),
                (Side::Ask, Direction::Down, RateTriple::new(0.85, 1.1, 0.85)),
                (Side::Bid, Direction::Down, RateTriple::new(0.75, 1.3, 0.7)),
            ],
            up,
            down,
            1.0,
            9,
        )
        .unwrap()
    }

    fn tiny_config() -> KernelConfig {
        KernelConfig {
            m_max: 1,
            l_max: 1,
            horizon: 5.0,
            table_end: 20.0,
            grid: GridSpec { fine_end: 60.0, t_max: Some(400.0), ..GridSpec::default() },
            ..KernelConfig::default()
        }
    }

    #[test]
    fn tables_normalize_and_start_at_zero() {
        let params = tiny_params(3);
        let tables = build_tables(&params, &tiny_config()).unwrap();
        let mut count = 0;
        for key in tables.keys() {
            let e = tables.entry(key).unwrap();
            let mass = e.normalization();
            assert!((mass - 1.0).abs() < 1e-3, "normalization {mass} at {key:?}");
            for o in &e.outcomes {
                assert_eq!(o.cdf[0], 0.0, "kernel starts at zero");
                assert!(o.cdf.windows(2).all(|w| w[1] >= w[0]), "monotone CDF");
            }
            count += 1;
        }
        // 2 dirs x 3 v_b x 3 v_a x (m,l) combos: v_b=1 -> 2, else 4.
        assert_eq!(count, 2 * 3 * (2 + 4 + 4));
    }

    #[test]
    fn symmetric_race_splits_evenly() {
        // l = 0, equal rate triples on both sides, equal starting queues.
        let r = RateTriple::new(0.7, 1.0, 0.6);
        let d = VolumeDist::point_mass(2, 1, 1).unwrap();
        let params = ModelParams::new(
            [
                (Side::Ask, Direction::Up, r),
                (Side::Bid, Direction::Up, r),
                (Side::Ask, Direction::Down, r),
                (Side::Bid, Direction::Down, r),
            ],
            d.clone(),
            d,
            1.0,
            9,
        )
        .unwrap();
        let cfg = KernelConfig {
            m_max: 1,
            l_max: 0,
            horizon: 5.0,
            table_end: 20.0,
            grid: GridSpec { fine_end: 60.0, t_max: Some(500.0), ..GridSpec::default() },
            ..KernelConfig::default()
        };
        let tables = build_tables(&params, &cfg).unwrap();
        for (v, m) in [(1u32, 0u32), (2, 0)] {
            let key = ReducedRaceKey::new(Direction::Up, v + m, v, m, 0).unwrap();
            let e = tables.entry(&key).unwrap();
            let up = e.outcome(Direction::Up, 0).unwrap().mass;
            let down = e.outcome(Direction::Down, 0).unwrap().mass;
            assert!((up - 0.5).abs() < 1e-3, "up mass {up}");
            assert!((down - 0.5).abs() < 1e-3, "down mass {down}");
        }
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let params = tiny_params(2);
        let cfg = KernelConfig { m_max: 1, l_max: 1, horizon: 3.0, table_end: 10.0,
            grid: GridSpec { fine_end: 40.0, t_max: Some(300.0), ..GridSpec::default() },
            ..KernelConfig::default() };
        let a = build_tables(&params, &cfg).unwrap();
        let b = build_tables(&params, &cfg).unwrap();
        for key in a.keys() {
            let (ea, eb) = (a.entry(key).unwrap(), b.entry(key).unwrap());
            assert_eq!(ea.terminal, eb.terminal);
            for (oa, ob) in ea.outcomes.iter().zip(&eb.outcomes) {
                assert_eq!(oa.cdf, ob.cdf);
                assert_eq!(oa.mass, ob.mass);
            }
        }
    }

    #[test]
    fn q_p_consistency_identity() {
        // Terminal kernel mass plus kernel mass is one at every lambda.
        let params = tiny_params(3);
        let tables = build_tables(&params, &tiny_config()).unwrap();
        for key in tables.keys() {
            let e = tables.entry(key).unwrap();
            for i in 0..tables.lambda_len {
                let lambda = i as f64 * tables.lambda_step;
                let p_sum: f64 = (0..=key.l).map(|z| e.terminal_prob(i, z)).sum();
                let q_sum = tables.total_mass_at(key, lambda);
                assert!(
                    (p_sum + q_sum - 1.0).abs() < 2e-3,
                    "Q/P identity off by {} at {key:?}, lambda {lambda}",
                    (p_sum + q_sum - 1.0).abs()
                );
            }
        }
    }

    #[test]
    fn scenario_partition_is_exhaustive() {
        let params = tiny_params(2);
        let cfg = KernelConfig { m_max: 1, l_max: 1, horizon: 3.0, table_end: 10.0,
            grid: GridSpec { fine_end: 40.0, t_max: Some(300.0), ..GridSpec::default() },
            ..KernelConfig::default() };
        let tables = build_tables(&params, &cfg).unwrap();
        let key = ReducedRaceKey::new(Direction::Up, 2, 2, 0, 1).unwrap();
        let e = tables.entry(&key).unwrap();
        // l = 1: up carries only the full fill, down carries 0 and 1.
        assert!(e.outcome(Direction::Up, 1).is_some());
        assert!(e.outcome(Direction::Up, 0).is_none());
        assert!(e.outcome(Direction::Down, 0).is_some());
        assert!(e.outcome(Direction::Down, 1).is_some());
        assert_eq!(tables.reduced_cdf(&key, Direction::Up, 0, 5.0), 0.0);
    }

    #[test]
    fn full_kernel_enforces_indicators_and_marginalizes() {
        let params = tiny_params(3);
        let tables = build_tables(&params, &tiny_config()).unwrap();
        let state = SystemState { j: Direction::Up, v_b: 2, v_a: 2, p: 50, z: 0, y: 2 };
        let action = Action::new(1, 1);

        let good = SystemState { j: Direction::Up, v_b: 1, v_a: 1, p: 51, z: 1, y: 0 };
        assert!(full_kernel(&tables, &params, &state, action, 5.0, &good) > 0.0);

        let bad_price = SystemState { p: 52, ..good };
        assert_eq!(full_kernel(&tables, &params, &state, action, 5.0, &bad_price), 0.0);
        let bad_inventory = SystemState { y: 1, ..good };
        assert_eq!(full_kernel(&tables, &params, &state, action, 5.0, &bad_inventory), 0.0);

        // Marginalizing the full kernel at the far horizon recovers the
        // race normalization.
        let mut total = 0.0;
        for j in Direction::BOTH {
            for v_b in 1..=3u32 {
                for v_a in 1..=3u32 {
                    for z in 0..=action.l {
                        let p = if j == Direction::Up { state.p + 1 } else { state.p - 1 };
                        let next = SystemState { j, v_b, v_a, p, z, y: state.y - action.m - z };
                        total += full_kernel(&tables, &params, &state, action, tables.t_max, &next);
                    }
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "marginal mass {total}");
    }
}
