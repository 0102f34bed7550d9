//! Converged solution tables and their on-disk form.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Action, Direction, SystemState};
use crate::sim::Policy;

use super::ReducedIndexer;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Convergence {
    pub sweeps: usize,
    pub point_updates: u64,
    /// Largest point change in the last sweep.
    pub sweep_residual: f64,
    /// Synchronous operator residual of the final table.
    pub bellman_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub n: u32,
    pub chi: u32,
    pub p_ref: u32,
    pub lambda_step: f64,
    pub lambda_points: usize,
    pub horizon: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Flat value table over (direction, v_b, v_a, y) x maturity nodes.
    pub value: Vec<f64>,
    pub policy: Vec<Action>,
    pub meta: Convergence,
}

#[derive(Serialize, Deserialize)]
struct MetaJson {
    n: u32,
    chi: u32,
    p_ref: u32,
    lambda_step: f64,
    lambda_points: usize,
    horizon: f64,
    gamma: f64,
    tol: f64,
    convergence: Convergence,
}

impl Solution {
    pub fn indexer(&self) -> ReducedIndexer {
        ReducedIndexer { n: self.n, chi: self.chi, lambda_len: self.lambda_points }
    }

    pub fn value_at(&self, dir: Direction, v_b: u32, v_a: u32, y: u32, k: usize) -> f64 {
        let idx = self.indexer();
        self.value[idx.flat(idx.state_idx(dir, v_b, v_a, y), k)]
    }

    pub fn policy_at(&self, dir: Direction, v_b: u32, v_a: u32, y: u32, k: usize) -> Action {
        let idx = self.indexer();
        self.policy[idx.flat(idx.state_idx(dir, v_b, v_a, y), k)]
    }

    /// Greedy policy as a simulation rule. The optimal action is invariant
    /// to the ask price and carried fill, so only the reduced coordinates
    /// are read; maturities snap to the nearest grid node.
    pub fn policy_fn(&self) -> SolutionPolicy<'_> {
        SolutionPolicy { solution: self }
    }

    /// Both tables as CSV, one row per (state, maturity) node. Lines
    /// starting with `#` are headers/provenance.
    pub fn write_csv<W: Write>(&self, mut w: W, provenance: &[String]) -> std::io::Result<()> {
        for line in provenance {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "j,v_b,v_a,y,lambda,value,m,l")?;
        let idx = self.indexer();
        for (dir, v_b, v_a, y) in idx.states() {
            let si = idx.state_idx(dir, v_b, v_a, y);
            for k in 0..self.lambda_points {
                let f = idx.flat(si, k);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    dir.sign(),
                    v_b,
                    v_a,
                    y,
                    k as f64 * self.lambda_step,
                    self.value[f],
                    self.policy[f].m,
                    self.policy[f].l
                )?;
            }
        }
        Ok(())
    }

    pub fn meta_json(&self) -> String {
        serde_json::to_string_pretty(&MetaJson {
            n: self.n,
            chi: self.chi,
            p_ref: self.p_ref,
            lambda_step: self.lambda_step,
            lambda_points: self.lambda_points,
            horizon: self.horizon,
            gamma: self.gamma,
            tol: self.tol,
            convergence: self.meta,
        })
        .expect("meta serialises")
    }

    /// Writes `solution.csv` and `meta.json` into a directory.
    pub fn write_dir(&self, dir: &Path, provenance: &[String]) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join("solution.csv"))?;
        self.write_csv(std::io::BufWriter::new(f), provenance)?;
        std::fs::write(dir.join("meta.json"), self.meta_json())?;
        Ok(())
    }

    /// Reads a solution directory written by [`Solution::write_dir`].
    pub fn read_dir(dir: &Path) -> std::io::Result<Self> {
        let meta: MetaJson = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        let idx = ReducedIndexer { n: meta.n, chi: meta.chi, lambda_len: meta.lambda_points };
        let mut value = vec![0.0; idx.table_len()];
        let mut policy = vec![Action::WAIT; idx.table_len()];

        let file = std::fs::File::open(dir.join("solution.csv"))?;
        let mut saw_header = false;
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if !saw_header {
                saw_header = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad row: {line}"));
            if cols.len() != 8 {
                return Err(bad());
            }
            let j: i64 = cols[0].parse().map_err(|_| bad())?;
            let dir = if j >= 0 { Direction::Up } else { Direction::Down };
            let v_b: u32 = cols[1].parse().map_err(|_| bad())?;
            let v_a: u32 = cols[2].parse().map_err(|_| bad())?;
            let y: u32 = cols[3].parse().map_err(|_| bad())?;
            let lambda: f64 = cols[4].parse().map_err(|_| bad())?;
            let k = (lambda / meta.lambda_step).round() as usize;
            let f = idx.flat(idx.state_idx(dir, v_b, v_a, y), k);
            value[f] = cols[5].parse().map_err(|_| bad())?;
            policy[f] = Action::new(cols[6].parse().map_err(|_| bad())?, cols[7].parse().map_err(|_| bad())?);
        }

        Ok(Solution {
            n: meta.n,
            chi: meta.chi,
            p_ref: meta.p_ref,
            lambda_step: meta.lambda_step,
            lambda_points: meta.lambda_points,
            horizon: meta.horizon,
            gamma: meta.gamma,
            tol: meta.tol,
            value,
            policy,
            meta: meta.convergence,
        })
    }
}

pub struct SolutionPolicy<'a> {
    solution: &'a Solution,
}

impl Policy for SolutionPolicy<'_> {
    fn action(&self, state: &SystemState, lambda: f64) -> Action {
        let s = self.solution;
        let k = ((lambda / s.lambda_step).round() as usize).min(s.lambda_points - 1);
        let a = s.policy_at(state.j, state.v_b.min(s.n), state.v_a.min(s.n), state.y, k);
        // Guard admissibility against states outside the tabulated range.
        Action::new(a.m.min(state.v_b.saturating_sub(1)).min(state.y), a.l.min(state.y - a.m.min(state.y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let idx = ReducedIndexer { n: 2, chi: 1, lambda_len: 3 };
        let sol = Solution {
            n: 2,
            chi: 1,
            p_ref: 2,
            lambda_step: 0.5,
            lambda_points: 3,
            horizon: 1.0,
            gamma: 1.0,
            tol: 1e-3,
            value: (0..idx.table_len()).map(|i| i as f64 * 0.25).collect(),
            policy: (0..idx.table_len()).map(|i| Action::new((i % 2) as u32, 0)).collect(),
            meta: Convergence { sweeps: 3, point_updates: 10, sweep_residual: 1e-4, bellman_residual: 2e-4 },
        };
        let dir = tempfile::tempdir().unwrap();
        sol.write_dir(dir.path(), &["config_hash=abc".into()]).unwrap();
        let back = Solution::read_dir(dir.path()).unwrap();
        assert_eq!(back.value, sol.value);
        assert_eq!(back.policy, sol.policy);
        assert_eq!(back.lambda_points, 3);
    }
}
