//! Precomputed first-passage curves for every process the transition kernel
//! consumes, on one shared composite time grid.
//!
//! Queue passage times under crowd-scale rates have a fast transient and a
//! very slow quasi-stationary exponential tail (the queues hover around
//! their equilibrium depth long before either empties). The grid therefore
//! pairs a fine uniform segment, which carries all of the integrand
//! curvature and everything the solver reads, with a coarse uniform tail
//! that exists purely so race outcome masses can be accumulated to
//! near-certainty.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::model::{Direction, ModelParams, Side};

use super::euler::{euler_sum, EulerParams};
use super::grid::{Curve, TimeGrid};
use super::process_a::{a_curve, ADiagnostics};
use super::transforms::{laplace_fpt_b_prefix, occupancy_truncation};
use super::FptError;

#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Step of the fine segment; must divide the solver's lambda step.
    pub fine_step: f64,
    /// End of the fine segment.
    pub fine_end: f64,
    /// Minimum step of the coarse tail segment.
    pub tail_step: f64,
    /// Grid horizon. `None` probes the race survival and extends the grid
    /// until the slowest race is nearly certain to have resolved.
    pub t_max: Option<f64>,
    /// Residual race-survival mass the probe aims for at `t_max`.
    pub mass_target: f64,
    pub euler: EulerParams,
    /// Occupancy-series truncation tolerance for the rear-queue mixture.
    pub series_tol: f64,
    /// Hard cap on the occupancy series depth.
    pub j_cap: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            fine_step: 0.05,
            fine_end: 150.0,
            tail_step: 2.0,
            t_max: None,
            mass_target: 2e-4,
            euler: EulerParams::default(),
            series_tol: 1e-8,
            j_cap: 80,
        }
    }
}

/// Curves for one price-move direction.
pub struct DirCurves {
    /// Bid-queue race `B[v, bid rates]`, index `v - 1`, full grid.
    pub bid_b: Vec<Curve>,
    /// Ask-queue race without the agent, `B[v, ask rates]`, index `v - 1`.
    pub ask_b: Vec<Curve>,
    /// Head-of-queue phase `C[v, z]`, indexed `[z - 1][v - 1]`.
    pub c: Vec<Vec<Curve>>,
    /// Full ask-queue process `A[v, z]`, indexed `[z - 1][v - 1]`.
    pub a: Vec<Vec<Curve>>,
    /// Prefix integrals `H(t) = int_0^t e^{mu_a u} f_{C[v,z]}(u) du`,
    /// indexed `[z - 1][v - 1]`; the exponential tilt that pairs with
    /// `e^{-mu_a t}` factors in the partial-fill scenarios.
    pub h_tilt: Vec<Vec<Vec<f64>>>,
    pub a_diag: Vec<Vec<ADiagnostics>>,
    /// Ask-side market-order rate, the tilt parameter.
    pub mu_a: f64,
}

pub struct FptCache {
    pub grid: Arc<TimeGrid>,
    up: DirCurves,
    down: DirCurves,
    pub warnings: Vec<String>,
}

impl FptCache {
    pub fn dir(&self, dir: Direction) -> &DirCurves {
        match dir {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        }
    }

    /// Builds every curve needed for keys with `v <= N` and `l <= l_max`.
    pub fn build(params: &ModelParams, l_max: u32, spec: &GridSpec) -> Result<Self, FptError> {
        let n = params.n_max() as usize;
        let t_max = match spec.t_max {
            Some(t) => t,
            None => probe_t_max(params, l_max, spec)?,
        };
        // Keep the tail at or below ~3000 points regardless of horizon.
        let tail_step = spec.tail_step.max((t_max - spec.fine_end) / 3000.0);
        let grid = Arc::new(TimeGrid::new(spec.fine_step, spec.fine_end, tail_step, t_max));

        let mut warnings = Vec::new();
        let mut build_dir = |dir: Direction| -> Result<DirCurves, FptError> {
            let bid = params.rates(Side::Bid, dir);
            let ask = params.rates(Side::Ask, dir);

            let (bid_b, _) = invert_b_family(bid.kappa, bid.mu, bid.theta, n, 0, &grid, &spec.euler)?;

            // The rear-queue mixture needs B[j, ask] densities up to the
            // occupancy truncation depth; fine segment only.
            let mean_inf = ask.kappa / ask.theta;
            let (j_needed, capped) = occupancy_truncation(mean_inf, spec.series_tol, spec.j_cap);
            if capped {
                warnings.push(format!(
                    "occupancy series capped at {} terms for direction {dir:?} (mean {mean_inf:.2})",
                    spec.j_cap
                ));
            }
            let fine_extra = j_needed.saturating_sub(n);
            let (ask_b, ask_fine_extra) =
                invert_b_family(ask.kappa, ask.mu, ask.theta, n, fine_extra, &grid, &spec.euler)?;

            // Aux densities j = 1..=j_needed on the fine segment.
            let fine_len = grid.fine_len;
            let b_aux: Vec<Vec<f64>> = (0..j_needed)
                .map(|i| {
                    if i < n {
                        ask_b[i].pdf[..fine_len].to_vec()
                    } else {
                        ask_fine_extra[i - n].clone()
                    }
                })
                .collect();

            let c = invert_c_family(ask.mu, ask.theta, n, l_max as usize, &grid, &spec.euler)?;

            let a: Vec<Vec<(Curve, ADiagnostics)>> = (1..=l_max as usize)
                .map(|z| {
                    (1..=n)
                        .into_par_iter()
                        .map(|v| {
                            a_curve(
                                &grid,
                                &c[z - 1][v - 1].pdf[..fine_len],
                                &b_aux,
                                ask.kappa,
                                ask.theta,
                                spec.series_tol,
                                spec.j_cap,
                            )
                        })
                        .collect()
                })
                .collect();

            let mut a_curves = Vec::with_capacity(l_max as usize);
            let mut a_diag = Vec::with_capacity(l_max as usize);
            for per_z in a {
                let (cs, ds): (Vec<_>, Vec<_>) = per_z.into_iter().unzip();
                a_curves.push(cs);
                a_diag.push(ds);
            }

            let h_tilt = (1..=l_max as usize)
                .map(|z| (1..=n).map(|v| tilted_prefix(&grid, &c[z - 1][v - 1].pdf, ask.mu)).collect())
                .collect();

            Ok(DirCurves { bid_b, ask_b, c, a: a_curves, h_tilt, a_diag, mu_a: ask.mu })
        };

        let up = build_dir(Direction::Up)?;
        let down = build_dir(Direction::Down)?;

        for dir in Direction::BOTH {
            let curves = match dir {
                Direction::Up => &up,
                Direction::Down => &down,
            };
            for (zi, per_z) in curves.a_diag.iter().enumerate() {
                for (vi, d) in per_z.iter().enumerate() {
                    if d.series_capped {
                        warnings.push(format!(
                            "A[v={}, l={}] {dir:?}: occupancy series capped at {} terms",
                            vi + 1,
                            zi + 1,
                            d.j_used
                        ));
                    }
                }
            }
        }

        Ok(FptCache { grid, up, down, warnings })
    }
}

/// `int_0^t e^{mu u} f(u) du` along the grid, frozen once the exponent
/// would overflow (those increments can only pair with a dead `e^{-mu t}`).
fn tilted_prefix(grid: &TimeGrid, pdf: &[f64], mu: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    out.push(0.0);
    let mut acc = 0.0;
    let lim = 700.0 / mu;
    let tilt = |t: f64, f: f64| if t < lim { (mu * t).exp() * f } else { 0.0 };
    let mut prev = tilt(0.0, pdf[0]);
    for k in 1..grid.len() {
        let cur = tilt(grid.t(k), pdf[k].max(0.0));
        acc += 0.5 * (prev + cur) * grid.step_before(k);
        out.push(acc);
        prev = cur;
    }
    out
}

/// Inverts the `B[v]` family for `v = 1..=v_full` on the whole grid, plus
/// `v = v_full+1..=v_full+v_fine_extra` densities on the fine segment only.
///
/// One transform evaluation per node yields every initial state at once:
/// the per-stage continued fractions are evaluated by a single deep Lentz
/// call and a backward recurrence, and prefix products walk the family.
fn invert_b_family(
    kappa: f64,
    mu: f64,
    theta: f64,
    v_full: usize,
    v_fine_extra: usize,
    grid: &TimeGrid,
    euler: &EulerParams,
) -> Result<(Vec<Curve>, Vec<Vec<f64>>), FptError> {
    let v_fine = v_full + v_fine_extra;
    let nodes = euler.nodes();

    struct PointOut {
        pdf: Vec<f64>,
        cdf: Vec<f64>,
        osc: f64,
    }

    let per_point: Vec<PointOut> = (1..grid.len())
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            let v_eval = if k < grid.fine_len { v_fine } else { v_full };
            let mut transforms = vec![Complex64::new(0.0, 0.0); v_eval];
            let mut pdf_series = vec![0.0; v_eval * nodes];
            let mut cdf_series = vec![0.0; v_full * nodes];
            for (ki, s) in euler.s_nodes(t).enumerate() {
                laplace_fpt_b_prefix(v_eval as u32, kappa, mu, theta, s, &mut transforms)?;
                for v in 0..v_eval {
                    pdf_series[v * nodes + ki] = transforms[v].re;
                }
                for v in 0..v_full {
                    cdf_series[v * nodes + ki] = (transforms[v] / s).re;
                }
            }
            let mut pdf = Vec::with_capacity(v_eval);
            let mut cdf = Vec::with_capacity(v_full);
            let mut osc = 0.0f64;
            for v in 0..v_eval {
                let (val, o) = euler_sum(&pdf_series[v * nodes..(v + 1) * nodes], t, euler);
                pdf.push(val.max(0.0));
                osc = osc.max(o);
            }
            for v in 0..v_full {
                let (val, o) = euler_sum(&cdf_series[v * nodes..(v + 1) * nodes], t, euler);
                cdf.push(val.clamp(0.0, 1.0));
                osc = osc.max(o);
            }
            Ok(PointOut { pdf, cdf, osc })
        })
        .collect::<Result<_, FptError>>()?;

    let worst = per_point.iter().map(|p| p.osc).fold(0.0, f64::max);
    if worst > euler.osc_tol {
        let k = per_point.iter().position(|p| p.osc == worst).unwrap() + 1;
        return Err(FptError::AccuracyLoss { t: grid.t(k), estimate: worst });
    }

    let mut curves: Vec<Curve> = (0..v_full)
        .map(|v| {
            let mut pdf = Vec::with_capacity(grid.len());
            let mut cdf = Vec::with_capacity(grid.len());
            pdf.push(if v == 0 { mu + theta } else { 0.0 });
            cdf.push(0.0);
            for p in &per_point {
                pdf.push(p.pdf[v]);
                cdf.push(p.cdf[v]);
            }
            Curve { pdf, cdf }
        })
        .collect();
    // Re-monotonize the CDFs (inversion noise is ~1e-9).
    for c in curves.iter_mut() {
        let mut run = 0.0f64;
        for x in c.cdf.iter_mut() {
            run = run.max(*x);
            *x = run;
        }
    }

    let extra: Vec<Vec<f64>> = (v_full..v_fine)
        .map(|v| {
            let mut pdf = Vec::with_capacity(grid.fine_len);
            pdf.push(0.0);
            for p in per_point.iter().take(grid.fine_len - 1) {
                pdf.push(p.pdf[v]);
            }
            pdf
        })
        .collect();

    Ok((curves, extra))
}

/// Inverts the closed-form `C[v, z]` family for `v = 1..=n`, `z = 1..=l_max`
/// on the whole grid, sharing transform evaluations across the family.
fn invert_c_family(
    mu: f64,
    theta: f64,
    n: usize,
    l_max: usize,
    grid: &TimeGrid,
    euler: &EulerParams,
) -> Result<Vec<Vec<Curve>>, FptError> {
    if l_max == 0 {
        return Ok(Vec::new());
    }
    let nodes = euler.nodes();
    let fam = n * l_max;

    struct PointOut {
        pdf: Vec<f64>,
        cdf: Vec<f64>,
        osc: f64,
    }

    let per_point: Vec<PointOut> = (1..grid.len())
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            let mut pdf_series = vec![0.0; fam * nodes];
            let mut cdf_series = vec![0.0; fam * nodes];
            for (ki, s) in euler.s_nodes(t).enumerate() {
                let base = Complex64::new(mu, 0.0) / (s + mu);
                let mut zpow = Complex64::new(1.0, 0.0);
                for z in 1..=l_max {
                    zpow *= base;
                    let mut prod = zpow;
                    for v in 1..=n {
                        let rate = mu + v as f64 * theta;
                        prod *= Complex64::new(rate, 0.0) / (s + rate);
                        let idx = ((z - 1) * n + (v - 1)) * nodes + ki;
                        pdf_series[idx] = prod.re;
                        cdf_series[idx] = (prod / s).re;
                    }
                }
            }
            let mut pdf = Vec::with_capacity(fam);
            let mut cdf = Vec::with_capacity(fam);
            let mut osc = 0.0f64;
            for i in 0..fam {
                let (vp, op) = euler_sum(&pdf_series[i * nodes..(i + 1) * nodes], t, euler);
                let (vc, oc) = euler_sum(&cdf_series[i * nodes..(i + 1) * nodes], t, euler);
                pdf.push(vp.max(0.0));
                cdf.push(vc.clamp(0.0, 1.0));
                osc = osc.max(op.max(oc));
            }
            Ok(PointOut { pdf, cdf, osc })
        })
        .collect::<Result<_, FptError>>()?;

    let worst = per_point.iter().map(|p| p.osc).fold(0.0, f64::max);
    if worst > euler.osc_tol {
        let k = per_point.iter().position(|p| p.osc == worst).unwrap() + 1;
        return Err(FptError::AccuracyLoss { t: grid.t(k), estimate: worst });
    }

    let mut out = Vec::with_capacity(l_max);
    for z in 1..=l_max {
        let mut per_v = Vec::with_capacity(n);
        for v in 1..=n {
            let i = (z - 1) * n + (v - 1);
            let mut pdf = Vec::with_capacity(grid.len());
            let mut cdf = Vec::with_capacity(grid.len());
            pdf.push(0.0); // initial state z + v >= 2
            cdf.push(0.0);
            for p in &per_point {
                pdf.push(p.pdf[i]);
                cdf.push(p.cdf[i]);
            }
            let mut run = 0.0f64;
            for x in cdf.iter_mut() {
                run = run.max(*x);
                *x = run;
            }
            per_v.push(Curve { pdf, cdf });
        }
        out.push(per_v);
    }
    Ok(out)
}

/// Doubling search for a horizon by which the slowest tabulated race has
/// resolved with probability `1 - mass_target/4`, using the deepest
/// bid-against-ask queue pair as a proxy; a 1.5x margin absorbs the bias
/// of proxying the agent-inclusive ask process by a plain queue.
fn probe_t_max(params: &ModelParams, l_max: u32, spec: &GridSpec) -> Result<f64, FptError> {
    let n = params.n_max();
    let survival = |kappa: f64, mu: f64, theta: f64, v: u32, t: f64| -> Result<f64, FptError> {
        let f = super::euler::invert_at(
            |s| {
                let mut out = vec![Complex64::new(0.0, 0.0); v as usize];
                match laplace_fpt_b_prefix(v, kappa, mu, theta, s, &mut out) {
                    Ok(()) => out[v as usize - 1] / s,
                    Err(_) => Complex64::new(0.0, 0.0),
                }
            },
            t,
            &spec.euler,
        )?;
        Ok((1.0 - f).clamp(0.0, 1.0))
    };

    let mut t = (spec.fine_end * 2.0).max(400.0);
    loop {
        let mut worst: f64 = 0.0;
        for dir in Direction::BOTH {
            let bid = params.rates(Side::Bid, dir);
            let ask = params.rates(Side::Ask, dir);
            let sb = survival(bid.kappa, bid.mu, bid.theta, n, t)?;
            let sa = survival(ask.kappa, ask.mu, ask.theta, n + l_max, t)?;
            worst = worst.max(sb * sa);
        }
        if worst <= spec.mass_target / 4.0 || t >= 1e5 {
            return Ok(t * 1.5);
        }
        t *= 2.0;
    }
}
