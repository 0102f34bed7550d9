//! Monte Carlo cross-validation of the kernel tables against the event
//! simulator: joint (duration bucket, direction, fill) frequencies from
//! simulated races are compared cell by cell at a multiplicity-adjusted
//! z-threshold.

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::{Direction, ModelParams, ReducedRaceKey};
use crate::sim::race::{simulate_race_capped, RaceProgress};
use crate::sim::derive_rng;

use super::tables::KernelTables;

#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub keys: usize,
    /// When set, validate exactly these keys instead of sampling.
    pub explicit_keys: Option<Vec<ReducedRaceKey>>,
    pub races_per_key: usize,
    pub seed: u64,
    /// Duration bucket edges; a final open bucket collects races that
    /// outlast the largest edge.
    pub time_points: Vec<f64>,
    /// Base per-cell significance expressed in sigmas (Bonferroni-adjusted
    /// across all cells).
    pub sigma: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            keys: 20,
            explicit_keys: None,
            races_per_key: 100_000,
            seed: 7,
            time_points: vec![1.0, 5.0, 20.0],
            sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CellReport {
    pub key: String,
    pub bucket: String,
    pub outcome: String,
    pub table_prob: f64,
    pub mc_prob: f64,
    pub z: f64,
}

#[derive(Debug, serde::Serialize)]
pub struct ValidationReport {
    pub cells: Vec<CellReport>,
    pub threshold: f64,
    pub races_per_key: usize,
    pub seed: u64,
    pub pass: bool,
    pub worst_z: f64,
}

/// Draws `keys` race keys uniformly from the table's key set (seeded) and
/// compares per-cell probabilities at `sigma` standard errors with a
/// Bonferroni adjustment over all compared cells.
pub fn validate_against_simulator(
    tables: &KernelTables,
    params: &ModelParams,
    cfg: &ValidationConfig,
) -> ValidationReport {
    let chosen: Vec<ReducedRaceKey> = match &cfg.explicit_keys {
        Some(keys) => keys.clone(),
        None => {
            let all_keys: Vec<ReducedRaceKey> = tables.keys().copied().collect();
            let mut rng = derive_rng(cfg.seed, &[0x7a11da7e]);
            (0..cfg.keys).map(|_| all_keys[rng.gen_range(0..all_keys.len())]).collect()
        }
    };

    let t_cap = *cfg.time_points.last().expect("at least one time point");
    let per_key: Vec<Vec<CellReport>> = chosen
        .par_iter()
        .enumerate()
        .map(|(ki, key)| {
            // Outcome cells: every (bucket, dir, fill) plus the open bucket.
            let outcomes = outcome_set(key);
            let n_buckets = cfg.time_points.len();
            let mut counts = vec![0u64; n_buckets * outcomes.len()];
            let mut survived = 0u64;
            for r in 0..cfg.races_per_key {
                let mut rng = derive_rng(cfg.seed, &[1 + ki as u64, r as u64]);
                match simulate_race_capped(key, params, &mut rng, t_cap) {
                    RaceProgress::Ended(out) => {
                        let b = cfg.time_points.iter().position(|&tp| out.duration <= tp).unwrap();
                        let o = outcomes
                            .iter()
                            .position(|&(d, f)| d == out.direction && f == out.executed_limit)
                            .expect("simulated outcome outside the kernel support");
                        counts[b * outcomes.len() + o] += 1;
                    }
                    RaceProgress::Survived { .. } => survived += 1,
                }
            }

            let n = cfg.races_per_key as f64;
            let mut cells = Vec::new();
            for (b, edges) in cfg.time_points.iter().enumerate() {
                let lo = if b == 0 { 0.0 } else { cfg.time_points[b - 1] };
                for (o, &(dir, fill)) in outcomes.iter().enumerate() {
                    let p = tables.reduced_cdf(key, dir, fill, *edges)
                        - tables.reduced_cdf(key, dir, fill, lo);
                    let p_hat = counts[b * outcomes.len() + o] as f64 / n;
                    cells.push(CellReport {
                        key: format!("{key:?}"),
                        bucket: format!("({lo},{edges}]"),
                        outcome: format!("j={},z={fill}", dir.sign()),
                        table_prob: p,
                        mc_prob: p_hat,
                        z: z_score(p, p_hat, n),
                    });
                }
            }
            let p_surv = 1.0 - tables.total_mass_at(key, t_cap);
            cells.push(CellReport {
                key: format!("{key:?}"),
                bucket: format!("({t_cap},inf)"),
                outcome: "any".into(),
                table_prob: p_surv,
                mc_prob: survived as f64 / n,
                z: z_score(p_surv, survived as f64 / n, n),
            });
            cells
        })
        .collect();

    let cells: Vec<CellReport> = per_key.into_iter().flatten().collect();
    let n_cells = cells.len().max(1);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let base_alpha = 2.0 * (1.0 - normal.cdf(cfg.sigma));
    let threshold = normal.inverse_cdf(1.0 - base_alpha / (2.0 * n_cells as f64));
    let worst_z = cells.iter().map(|c| c.z).fold(0.0, f64::max);
    ValidationReport { pass: worst_z <= threshold, threshold, races_per_key: cfg.races_per_key, seed: cfg.seed, cells, worst_z }
}

fn outcome_set(key: &ReducedRaceKey) -> Vec<(Direction, u32)> {
    if key.l == 0 {
        vec![(Direction::Up, 0), (Direction::Down, 0)]
    } else {
        let mut v = vec![(Direction::Up, key.l)];
        v.extend((0..=key.l).map(|z| (Direction::Down, z)));
        v
    }
}

fn z_score(p: f64, p_hat: f64, n: f64) -> f64 {
    if p <= 0.0 {
        // The table says impossible; any observation is a hard failure.
        return if p_hat > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let se = (p * (1.0 - p) / n).sqrt();
    (p_hat - p).abs() / se
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpt::GridSpec;
    use crate::kernel::tables::{build_tables, KernelConfig};
    use crate::model::{RateTriple, Side, VolumeDist};

    fn params() -> ModelParams {
        let thin = vec![0.6, 0.3, 0.1];
        let deep = vec![0.2, 0.3, 0.5];
        let up = VolumeDist::product(&thin, &deep).unwrap();
        let down = VolumeDist::product(&deep, &thin).unwrap();
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

    fn config() -> KernelConfig {
        KernelConfig {
            m_max: 1,
            l_max: 2,
            horizon: 5.0,
            table_end: 20.0,
            grid: GridSpec { fine_end: 60.0, t_max: Some(400.0), ..GridSpec::default() },
            ..KernelConfig::default()
        }
    }

    #[test]
    fn sampled_keys_agree_with_simulator() {
        let params = params();
        let tables = build_tables(&params, &config()).unwrap();
        let report = validate_against_simulator(
            &tables,
            &params,
            &ValidationConfig { keys: 8, races_per_key: 20_000, seed: 3, ..ValidationConfig::default() },
        );
        assert!(
            report.pass,
            "worst z {} over threshold {}; first offenders: {:?}",
            report.worst_z,
            report.threshold,
            report
                .cells
                .iter()
                .filter(|c| c.z > report.threshold)
                .take(3)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn corrupted_table_is_flagged() {
        let params = params();
        let mut tables = build_tables(&params, &config()).unwrap();
        // Corrupt one entry's first outcome curve, then validate a key set
        // that includes it.
        let key = ReducedRaceKey::new(Direction::Up, 2, 2, 0, 1).unwrap();
        let others = [
            ReducedRaceKey::new(Direction::Up, 1, 1, 0, 0).unwrap(),
            ReducedRaceKey::new(Direction::Down, 3, 2, 1, 0).unwrap(),
        ];
        tables.corrupt_for_test(&key, 0.2);
        let report = validate_against_simulator(
            &tables,
            &params,
            &ValidationConfig {
                explicit_keys: Some(vec![key, others[0], others[1]]),
                races_per_key: 5_000,
                seed: 5,
                ..ValidationConfig::default()
            },
        );
        assert!(!report.pass, "corruption must be detected");
        let offender = report.cells.iter().max_by(|a, b| a.z.total_cmp(&b.z)).unwrap();
        assert!(offender.key.contains("v_b: 2") && offender.key.contains("l: 1"), "offender: {}", offender.key);
    }

    #[test]
    fn seed_change_same_verdict() {
        let params = params();
        let tables = build_tables(&params, &config()).unwrap();
        for seed in [11, 12] {
            let report = validate_against_simulator(
                &tables,
                &params,
                &ValidationConfig { keys: 5, races_per_key: 10_000, seed, ..ValidationConfig::default() },
            );
            assert!(report.pass, "seed {seed}: worst z {}", report.worst_z);
        }
    }
}
