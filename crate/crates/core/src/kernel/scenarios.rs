//! Assembly of the reduced kernel `Q(t, j~, z~)` for one race key out of
//! the cached first-passage curves, one scenario case per outcome:
//!
//! - price up, no limit order: the plain two-queue race;
//! - price up with a limit order: the full ask process beats the bid, and
//!   the order necessarily filled in full;
//! - price down, no fill: the bid beats even the first head-of-queue unit;
//! - price down, partial fill `1 <= z~ < l`: the bid dies between the
//!   depletion of `z~` head units and the exponential service of the next,
//!   an exponentially tilted double integral;
//! - price down, full fill: the complement within the down outcomes.

use crate::fpt::{Curve, DirCurves, TimeGrid};
use crate::model::{Direction, ReducedRaceKey};

/// Cumulative integral of sampled `w` along the composite grid with an
/// Euler-Maclaurin endpoint correction per uniform segment; plain
/// trapezoid error on the fastest integrands is at the kernel tolerance,
/// the gradient correction buys two orders back.
pub fn cum_integral(grid: &TimeGrid, w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), grid.len());
    let mut out = vec![0.0; w.len()];
    let segments: [(usize, usize, f64); 2] = [
        (0, grid.fine_len - 1, grid.fine_step),
        (grid.fine_len - 1, grid.len() - 1, grid.tail_step),
    ];
    let mut base = 0.0;
    for &(a, b, h) in &segments {
        if b <= a {
            continue;
        }
        let deriv = |k: usize| -> f64 {
            if k == a {
                if b - a >= 2 {
                    (-3.0 * w[a] + 4.0 * w[a + 1] - w[a + 2]) / (2.0 * h)
                } else {
                    (w[a + 1] - w[a]) / h
                }
            } else if k == b {
                if b - a >= 2 {
                    (3.0 * w[b] - 4.0 * w[b - 1] + w[b - 2]) / (2.0 * h)
                } else {
                    (w[b] - w[b - 1]) / h
                }
            } else {
                (w[k + 1] - w[k - 1]) / (2.0 * h)
            }
        };
        let d0 = deriv(a);
        let corr = h * h / 12.0;
        let mut trap = 0.0;
        for k in a + 1..=b {
            trap += 0.5 * (w[k - 1] + w[k]) * h;
            out[k] = base + trap - corr * (deriv(k) - d0);
        }
        base = out[b];
    }
    out
}

/// One `(j~, z~)` outcome with its sub-distribution on the composite grid.
pub struct RawOutcome {
    pub dir: Direction,
    pub fill: u32,
    pub cdf: Vec<f64>,
}

/// Builds all outcome sub-distributions for `key` on the cache grid.
/// Entries are re-monotonized; anything beyond noise level is reported as
/// the second return value (largest raw monotonicity violation).
pub fn assemble_outcomes(grid: &TimeGrid, curves: &DirCurves, key: &ReducedRaceKey) -> (Vec<RawOutcome>, f64) {
    let n = grid.len();
    let bid = &curves.bid_b[(key.v_b - key.m) as usize - 1];
    let mut out = Vec::new();

    if key.l == 0 {
        let ask: &Curve = &curves.ask_b[key.v_a as usize - 1];
        // Up: ask depletes first.
        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        let i_up = cum_integral(grid, &product(&ask.pdf, &bid.cdf));
        let i_down = cum_integral(grid, &product(&bid.pdf, &ask.cdf));
        for k in 0..n {
            up[k] = ask.cdf[k] - i_up[k];
            down[k] = bid.cdf[k] - i_down[k];
        }
        out.push(RawOutcome { dir: Direction::Up, fill: 0, cdf: up });
        out.push(RawOutcome { dir: Direction::Down, fill: 0, cdf: down });
    } else {
        let l = key.l as usize;
        let a_l = &curves.a[l - 1][key.v_a as usize - 1];
        let c_1 = &curves.c[0][key.v_a as usize - 1];

        // Up: the whole ask queue (priority units, the agent's order, the
        // rear) depletes before the bid; the order filled completely.
        let i_up = cum_integral(grid, &product(&a_l.pdf, &bid.cdf));
        let up: Vec<f64> = (0..n).map(|k| a_l.cdf[k] - i_up[k]).collect();
        out.push(RawOutcome { dir: Direction::Up, fill: key.l, cdf: up });

        // Down with no fill: bid dies before one head unit clears.
        let i_c1 = cum_integral(grid, &product(&bid.pdf, &c_1.cdf));
        let down0: Vec<f64> = (0..n).map(|k| bid.cdf[k] - i_c1[k]).collect();
        out.push(RawOutcome { dir: Direction::Down, fill: 0, cdf: down0 });

        // Down with partial fill z~: exponentially tilted double integral;
        // the tilt pairs the bid density with the head-of-queue prefix.
        let mu_a = curves.mu_a;
        let mut partial_sum = vec![0.0; n];
        for z in 1..l {
            let h_z = &curves.h_tilt[z - 1][key.v_a as usize - 1];
            let integrand: Vec<f64> = (0..n)
                .map(|k| (-mu_a * grid.t(k)).exp() * bid.pdf[k].max(0.0) * h_z[k])
                .collect();
            let s5 = cum_integral(grid, &integrand);
            for k in 0..n {
                partial_sum[k] += s5[k];
            }
            out.push(RawOutcome { dir: Direction::Down, fill: z as u32, cdf: s5 });
        }

        // Down with full fill: complement of the down outcomes against the
        // bid-beats-full-queue probability.
        let i_al = cum_integral(grid, &product(&bid.pdf, &a_l.cdf));
        let full: Vec<f64> = (0..n)
            .map(|k| (i_c1[k] - i_al[k]) - partial_sum[k])
            .collect();
        out.push(RawOutcome { dir: Direction::Down, fill: key.l, cdf: full });
    }

    // Sub-distributions start at zero and are non-decreasing; quadrature
    // noise can dent that at the 1e-9 level, genuine violations are a grid
    // problem and get surfaced.
    let mut worst = 0.0f64;
    for o in out.iter_mut() {
        let mut run = 0.0f64;
        for x in o.cdf.iter_mut() {
            if *x < run {
                worst = worst.max(run - *x);
            }
            run = run.max(*x);
            *x = run;
        }
    }
    (out, worst)
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.max(0.0) * y).collect()
}
