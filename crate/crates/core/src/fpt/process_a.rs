//! Passage time of the two-phase ask-queue process `A[v, l, ...]`: the pure
//! death phase `C` (orders at or ahead of the agent) followed by the
//! birth-death remainder `G` (orders that queued up behind her).
//!
//! The density mixes the `C` passage density against the M/M/infinity
//! occupancy of the rear queue at the switch time:
//! `f_A(t) = f_C(t) R_0(t) + int_0^t sum_j f_{B^j}(t-u) f_C(u) R_j(u) du`.

use super::grid::{Curve, FptGrid, TimeGrid, UniformGrid};
use super::transforms::{occupancy_truncation, occupancy_weights};
use super::FptError;

#[derive(Debug, Clone, Default)]
pub struct ADiagnostics {
    /// Series truncation depth actually used.
    pub j_used: usize,
    /// True when the occupancy series hit the hard cap.
    pub series_capped: bool,
    /// Fitted tail decay rate (0 when no tail was needed).
    pub tail_rate: f64,
    /// Residual mass carried by the exponential tail.
    pub tail_mass: f64,
}

/// Convolution on the uniform fine segment: `b_aux[j-1]` holds the density
/// of `B[j, kappa, mu, theta]` sampled on the same segment.
fn convolve_fine(
    fine_step: f64,
    f_c: &[f64],
    b_aux: &[Vec<f64>],
    kappa: f64,
    theta: f64,
    j_used: usize,
) -> Vec<f64> {
    let k_len = f_c.len();
    // R_j(u) on the fine segment, laid out per j for contiguous access.
    let mut weights = vec![vec![0.0; k_len]; j_used + 1];
    for i in 0..k_len {
        let w = occupancy_weights(i as f64 * fine_step, kappa, theta, j_used);
        for (j, row) in weights.iter_mut().enumerate() {
            row[i] = w.probs[j];
        }
    }

    // Inversion noise can leave ~1e-12 negative density samples; floor them
    // so the mixture stays a density.
    let f_c: Vec<f64> = f_c.iter().map(|&x| x.max(0.0)).collect();
    let b_clamped: Vec<Vec<f64>> = b_aux
        .iter()
        .take(j_used)
        .map(|row| row.iter().map(|&x| x.max(0.0)).collect())
        .collect();

    let mut f_a: Vec<f64> = (0..k_len).map(|k| f_c[k] * weights[0][k]).collect();
    let mut m_j = vec![0.0; k_len];
    for j in 1..=j_used {
        let w = &weights[j];
        for i in 0..k_len {
            m_j[i] = f_c[i] * w[i];
        }
        // Skip the leading stretch where R_j has no mass yet.
        let lo = match m_j.iter().position(|&x| x > 1e-300) {
            Some(i) => i,
            None => continue,
        };
        let b = &b_clamped[j - 1];
        for k in lo..k_len {
            let mut acc = 0.5 * (b[k - lo] * m_j[lo] + b[0] * m_j[k]);
            for i in lo + 1..k {
                acc += b[k - i] * m_j[i];
            }
            f_a[k] += acc * fine_step;
        }
    }
    f_a
}

/// Extends the fine-segment density over the coarse tail with the
/// asymptotic exponential mode, mass-consistent with the remaining
/// probability. Returns `(tail_rate, tail_pdf, tail_cdf)`.
fn exponential_tail(
    grid: &TimeGrid,
    fine_pdf: &[f64],
    cdf_at_fine_end: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let remaining = 1.0 - cdf_at_fine_end;
    if grid.tail_len == 0 {
        return (0.0, Vec::new(), Vec::new());
    }
    if remaining < 1e-9 {
        return (0.0, vec![0.0; grid.tail_len], vec![cdf_at_fine_end; grid.tail_len]);
    }

    // Log-linear fit of the density over the last quarter of the fine window.
    let k_len = grid.fine_len;
    let start = k_len - (k_len / 4).max(2);
    let pts: Vec<(f64, f64)> = (start..k_len)
        .filter(|&k| fine_pdf[k] > 0.0)
        .map(|k| (grid.t(k), fine_pdf[k].ln()))
        .collect();
    let rate = if pts.len() >= 8 {
        let n = pts.len() as f64;
        let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / n, sy / n);
        let (sxx, sxy) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.0 - mx), a.1 + (p.0 - mx) * (p.1 - my)));
        (-(sxy / sxx)).max(1e-12)
    } else {
        // Degenerate window; fall back on the density-to-mass ratio.
        (fine_pdf[k_len - 1] / remaining).max(1e-12)
    };

    let t0 = grid.fine_end();
    let mut pdf = Vec::with_capacity(grid.tail_len);
    let mut cdf = Vec::with_capacity(grid.tail_len);
    for k in grid.fine_len..grid.len() {
        let dt = grid.t(k) - t0;
        pdf.push(rate * remaining * (-rate * dt).exp());
        cdf.push(cdf_at_fine_end + remaining * (1.0 - (-rate * dt).exp()));
    }
    (rate, pdf, cdf)
}

/// Builds the `A[v, l, ...]` curve on the composite grid from the matching
/// `C[v, l, ...]` density and the rear-queue auxiliary densities.
pub fn a_curve(
    grid: &TimeGrid,
    f_c_fine: &[f64],
    b_aux_fine: &[Vec<f64>],
    kappa: f64,
    theta: f64,
    series_tol: f64,
    j_cap: usize,
) -> (Curve, ADiagnostics) {
    let mean_inf = kappa / theta * (-(-theta * grid.fine_end()).exp_m1());
    let (j_used, series_capped) = occupancy_truncation(mean_inf, series_tol, j_cap.min(b_aux_fine.len()));

    let mut fine_pdf = convolve_fine(grid.fine_step, f_c_fine, b_aux_fine, kappa, theta, j_used);

    // CDF on the fine segment by cumulative trapezoid. Quadrature can
    // overshoot total mass one by O(h^2); renormalize in that case (the
    // passage time is a proper distribution).
    let mut cdf = Vec::with_capacity(grid.len());
    cdf.push(0.0);
    let mut acc = 0.0;
    for k in 1..grid.fine_len {
        acc += 0.5 * (fine_pdf[k - 1] + fine_pdf[k]) * grid.fine_step;
        cdf.push(acc);
    }
    if acc > 1.0 {
        for x in fine_pdf.iter_mut() {
            *x /= acc;
        }
        for x in cdf.iter_mut() {
            *x /= acc;
        }
    }

    let (tail_rate, tail_pdf, tail_cdf) = exponential_tail(grid, &fine_pdf, *cdf.last().unwrap());
    let tail_mass = 1.0 - cdf.last().unwrap();

    let mut pdf = fine_pdf;
    pdf.extend_from_slice(&tail_pdf);
    cdf.extend_from_slice(&tail_cdf);

    (
        Curve { pdf, cdf },
        ADiagnostics { j_used, series_capped, tail_rate, tail_mass: tail_mass.max(0.0) },
    )
}

/// Standalone density/CDF of `tau_A` on a uniform grid, per the published
/// mixture formula. Builds its own `C` and rear-queue densities.
pub fn density_fpt_a(
    v: u32,
    l: u32,
    kappa: f64,
    mu: f64,
    theta: f64,
    grid: UniformGrid,
    euler: &super::euler::EulerParams,
    series_tol: f64,
    j_cap: usize,
) -> Result<(FptGrid, ADiagnostics), FptError> {
    assert!(l >= 1, "the full-queue process is only needed when a limit order is posted");
    let c_grid = super::grid::invert_to_grid(
        |s| super::transforms::laplace_fpt_c(v, l, mu, theta, s),
        grid,
        euler,
        Some(if v + l == 1 { mu + theta } else { 0.0 }),
    )?;

    let mean_inf = kappa / theta * (-(-theta * grid.t_max()).exp_m1());
    let (j_used, series_capped) = occupancy_truncation(mean_inf, series_tol, j_cap);
    let b_aux: Vec<Vec<f64>> = (1..=j_used as u32)
        .map(|j| {
            super::grid::invert_to_grid(
                |s| super::transforms::laplace_fpt_b(j, kappa, mu, theta, s).unwrap_or_default(),
                grid,
                euler,
                Some(if j == 1 { mu + theta } else { 0.0 }),
            )
            .map(|g| g.pdf)
        })
        .collect::<Result<_, _>>()?;

    let mut pdf = convolve_fine(grid.step, &c_grid.pdf, &b_aux, kappa, theta, j_used);
    let mut cdf = Vec::with_capacity(grid.len);
    cdf.push(0.0);
    let mut acc = 0.0;
    for k in 1..grid.len {
        acc += 0.5 * (pdf[k - 1] + pdf[k]) * grid.step;
        cdf.push(acc);
    }
    if acc > 1.0 {
        for x in pdf.iter_mut() {
            *x /= acc;
        }
        for x in cdf.iter_mut() {
            *x /= acc;
        }
    }
    let diag = ADiagnostics { j_used, series_capped, tail_rate: 0.0, tail_mass: 1.0 - cdf.last().unwrap() };
    Ok((FptGrid { grid, pdf, cdf }, diag))
}
