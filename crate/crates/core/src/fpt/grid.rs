//! Time grids and sampled density/CDF pairs.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use super::euler::{euler_sum, EulerParams};
use super::FptError;

/// Uniform grid `t_k = k * step`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(t_max: f64, points: usize) -> Self {
        assert!(points >= 2 && t_max > 0.0);
        UniformGrid { step: t_max / (points - 1) as f64, len: points }
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.t(k))
    }
}

/// First-passage density and CDF sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct FptGrid {
    pub grid: UniformGrid,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl FptGrid {
    /// Grid-level sanity: CDF starts at zero, is monotone, stays near [0,1],
    /// and is consistent with the trapezoidal integral of the density.
    pub fn check_invariants(&self) -> Result<(), FptError> {
        if self.cdf[0] != 0.0 {
            return Err(FptError::InvalidGrid("cdf[0] must be 0".into()));
        }
        if self.cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(FptError::InvalidGrid("cdf must be non-decreasing".into()));
        }
        let last = *self.cdf.last().unwrap();
        if last > 1.0 + 1e-6 {
            return Err(FptError::InvalidGrid(format!("cdf end {last} exceeds 1 + 1e-6")));
        }
        let mut integ = 0.0;
        for k in 1..self.grid.len {
            integ += 0.5 * (self.pdf[k - 1] + self.pdf[k]) * self.grid.step;
        }
        if (integ - last).abs() > 1e-4 {
            return Err(FptError::InvalidGrid(format!(
                "trapezoidal pdf mass {integ} disagrees with cdf end {last}"
            )));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,pdf,cdf")?;
        for k in 0..self.grid.len {
            writeln!(w, "{},{},{}", self.grid.t(k), self.pdf[k], self.cdf[k])?;
        }
        Ok(())
    }
}

/// Inverts a transform to a density/CDF pair on a uniform grid.
///
/// The density comes from Euler summation of `f_hat` at each `t > 0`; the
/// CDF from inverting `f_hat(s)/s` at the same nodes (one transform
/// evaluation serves both). The `t = 0` density sample is `pdf_at_zero`
/// when the caller knows the analytic limit, else quadratic extrapolation
/// from the first interior samples; the CDF is clipped to [0,1] and
/// re-monotonized by running maximum.
pub fn invert_to_grid(
    f_hat: impl Fn(Complex64) -> Complex64 + Sync,
    grid: UniformGrid,
    p: &EulerParams,
    pdf_at_zero: Option<f64>,
) -> Result<FptGrid, FptError> {
    let interior: Vec<(f64, f64, f64)> = (1..grid.len)
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            let mut pdf_vals = Vec::with_capacity(p.nodes());
            let mut cdf_vals = Vec::with_capacity(p.nodes());
            for s in p.s_nodes(t) {
                let fh = f_hat(s);
                pdf_vals.push(fh.re);
                cdf_vals.push((fh / s).re);
            }
            let (pdf, osc_p) = euler_sum(&pdf_vals, t, p);
            let (cdf, osc_c) = euler_sum(&cdf_vals, t, p);
            (pdf, cdf, osc_p.max(osc_c))
        })
        .collect();

    if let Some(&(_, _, osc)) = interior.iter().max_by(|a, b| a.2.total_cmp(&b.2)) {
        if osc > p.osc_tol {
            let k = interior.iter().position(|v| v.2 == osc).unwrap() + 1;
            return Err(FptError::AccuracyLoss { t: grid.t(k), estimate: osc });
        }
    }

    let mut pdf = Vec::with_capacity(grid.len);
    let mut cdf = Vec::with_capacity(grid.len);
    pdf.push(0.0);
    cdf.push(0.0);
    for &(d, c, _) in &interior {
        pdf.push(d);
        cdf.push(c.clamp(0.0, 1.0));
    }
    pdf[0] = match pdf_at_zero {
        Some(v) => v,
        // Quadratic extrapolation through the first three interior samples.
        None if grid.len >= 4 => (3.0 * (pdf[1] - pdf[2]) + pdf[3]).max(0.0),
        None => pdf.get(1).copied().unwrap_or(0.0),
    };
    let mut run = 0.0f64;
    for c in cdf.iter_mut() {
        run = run.max(*c);
        *c = run;
    }
    Ok(FptGrid { grid, pdf, cdf })
}

/// Piecewise-uniform grid: a fine segment `[0, fine_end]` for the scale on
/// which the kernel integrands vary, then a coarse segment out to `t_max`
/// for the slow quasi-stationary tails of the queue passage times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub fine_step: f64,
    /// Number of fine points (indices `0..fine_len`, last at `fine_end`).
    pub fine_len: usize,
    pub tail_step: f64,
    /// Number of tail points strictly after `fine_end`.
    pub tail_len: usize,
}

impl TimeGrid {
    pub fn new(fine_step: f64, fine_end: f64, tail_step: f64, t_max: f64) -> Self {
        assert!(fine_step > 0.0 && fine_end > fine_step);
        let fine_len = (fine_end / fine_step).round() as usize + 1;
        assert!(
            ((fine_len - 1) as f64 * fine_step - fine_end).abs() < 1e-9 * fine_end,
            "fine_step must divide fine_end"
        );
        let tail_len = if t_max > fine_end {
            assert!(tail_step > 0.0);
            ((t_max - fine_end) / tail_step).ceil() as usize
        } else {
            0
        };
        TimeGrid { fine_step, fine_len, tail_step, tail_len }
    }

    pub fn len(&self) -> usize {
        self.fine_len + self.tail_len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fine_end(&self) -> f64 {
        (self.fine_len - 1) as f64 * self.fine_step
    }

    pub fn t(&self, k: usize) -> f64 {
        if k < self.fine_len {
            k as f64 * self.fine_step
        } else {
            self.fine_end() + (k - self.fine_len + 1) as f64 * self.tail_step
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.len() - 1)
    }

    /// Step of the interval ending at index `k` (k >= 1).
    pub fn step_before(&self, k: usize) -> f64 {
        if k < self.fine_len {
            self.fine_step
        } else {
            self.tail_step
        }
    }

    /// Index of a fine-segment time that is an exact multiple of the fine
    /// step (used to address solver-grid times).
    pub fn fine_index(&self, t: f64) -> Option<usize> {
        let k = (t / self.fine_step).round() as usize;
        if k < self.fine_len && (self.t(k) - t).abs() <= 1e-9 * self.fine_step.max(t) {
            Some(k)
        } else {
            None
        }
    }

    /// Cumulative trapezoidal integral of `f` along the grid.
    pub fn cum_trapz(&self, f: &[f64]) -> Vec<f64> {
        debug_assert_eq!(f.len(), self.len());
        let mut out = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..f.len() {
            acc += 0.5 * (f[k - 1] + f[k]) * self.step_before(k);
            out.push(acc);
        }
        out
    }
}

/// Density/CDF pair sampled on the shared composite grid.
#[derive(Debug, Clone)]
pub struct Curve {
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl Curve {
    pub fn survival(&self, k: usize) -> f64 {
        1.0 - self.cdf[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpt::transforms::laplace_fpt_c;
    use approx::assert_relative_eq;

    #[test]
    fn invert_exponential_to_grid() {
        let grid = UniformGrid::new(10.0, 401);
        let g = invert_to_grid(|s| (s + 1.0).inv(), grid, &EulerParams::default(), Some(1.0)).unwrap();
        g.check_invariants().unwrap();
        for k in 0..grid.len {
            let t = grid.t(k);
            assert!((g.pdf[k] - (-t).exp()).abs() < 1e-8);
            assert!((g.cdf[k] - (1.0 - (-t).exp())).abs() < 1e-7);
        }
    }

    #[test]
    fn hypoexponential_matches_partial_fraction_oracle() {
        // C[v=2, l=1, mu=1, theta=1]: stages Exp(1), Exp(2), Exp(3).
        // Partial fractions: f(t) = 3e^{-t} - 6e^{-2t} + 3e^{-3t}.
        let grid = UniformGrid::new(12.0, 481);
        let g = invert_to_grid(
            |s| laplace_fpt_c(2, 1, 1.0, 1.0, s),
            grid,
            &EulerParams::default(),
            Some(0.0),
        )
        .unwrap();
        g.check_invariants().unwrap();
        let oracle = |t: f64| 3.0 * (-t).exp() - 6.0 * (-2.0 * t).exp() + 3.0 * (-3.0 * t).exp();
        let sup = (0..grid.len)
            .map(|k| (g.pdf[k] - oracle(grid.t(k))).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "sup-norm against the partial-fraction oracle: {sup}");
    }

    #[test]
    fn quadratic_extrapolation_at_origin() {
        // Erlang-2 density: f(0) = 0, f'(0) = 1; extrapolation should land
        // near zero without the analytic hint.
        let grid = UniformGrid::new(5.0, 501);
        let g = invert_to_grid(|s| ((s + 1.0) * (s + 1.0)).inv(), grid, &EulerParams::default(), None).unwrap();
        assert!(g.pdf[0].abs() < 1e-4);
    }

    #[test]
    fn laplace_round_trip_recovers_transform() {
        // Re-transforming the inverted grid recovers f_hat_C at real s.
        let grid = UniformGrid::new(30.0, 1201);
        let g = invert_to_grid(
            |s| laplace_fpt_c(2, 1, 1.0, 1.0, s),
            grid,
            &EulerParams::default(),
            Some(0.0),
        )
        .unwrap();
        for &s in &[1.0, 2.0, 5.0] {
            let mut integ = 0.0;
            for k in 1..grid.len {
                let (t0, t1) = (grid.t(k - 1), grid.t(k));
                integ += 0.5
                    * ((-s * t0).exp() * g.pdf[k - 1] + (-s * t1).exp() * g.pdf[k])
                    * grid.step;
            }
            let want = laplace_fpt_c(2, 1, 1.0, 1.0, num_complex::Complex64::new(s, 0.0)).re;
            assert_relative_eq!(integ, want, epsilon = 1e-4);
        }
    }

    #[test]
    fn composite_grid_indexing() {
        let tg = TimeGrid::new(0.05, 150.0, 2.0, 1000.0);
        assert_eq!(tg.fine_len, 3001);
        assert_eq!(tg.t(0), 0.0);
        assert_relative_eq!(tg.t(3000), 150.0);
        assert_relative_eq!(tg.t(3001), 152.0);
        assert!(tg.t_max() >= 1000.0);
        assert_eq!(tg.fine_index(0.1), Some(2));
        assert_eq!(tg.fine_index(0.125), None);
        // cum_trapz of a constant is linear in t.
        let ones = vec![1.0; tg.len()];
        let integ = tg.cum_trapz(&ones);
        assert_relative_eq!(integ[tg.len() - 1], tg.t_max(), epsilon = 1e-9);
    }
}
