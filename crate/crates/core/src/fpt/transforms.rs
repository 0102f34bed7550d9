//! Laplace transforms of the queue first-passage times to zero.
//!
//! The bid/ask queue with crowd arrivals is a birth-death process `B` with
//! constant birth rate `kappa` and death rate `mu + i theta` in state `i`;
//! its transform is a product of continued fractions. The head-of-queue
//! segment in front of (and including) the agent's order is a pure death
//! process `C` whose transform is a closed-form hypoexponential product.

use num_complex::Complex64;

use super::lentz::continued_fraction;
use super::FptError;

/// Continued-fraction tolerance for transform evaluation.
pub const CF_TOL: f64 = 1e-12;
/// Hard cap on continued-fraction depth.
pub const CF_MAX_TERMS: usize = 10_000;

/// Generalized birth-death specification for the processes whose
/// first-passage time to zero is needed by the transition kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BirthDeathSpec {
    /// Birth `kappa`, death `mu + i theta` in state `i`, started at `v`.
    B { v: u32, kappa: f64, mu: f64, theta: f64 },
    /// Pure death from `l + v`; death `mu + max(0, i - l) theta` in state `i`.
    C { v: u32, l: u32, mu: f64, theta: f64 },
}

impl BirthDeathSpec {
    pub fn initial_state(&self) -> u32 {
        match *self {
            BirthDeathSpec::B { v, .. } => v,
            BirthDeathSpec::C { v, l, .. } => l + v,
        }
    }

    pub fn birth(&self, _i: u32) -> f64 {
        match *self {
            BirthDeathSpec::B { kappa, .. } => kappa,
            BirthDeathSpec::C { .. } => 0.0,
        }
    }

    /// Death rate in state `i >= 1`.
    pub fn death(&self, i: u32) -> f64 {
        match *self {
            BirthDeathSpec::B { mu, theta, .. } => mu + i as f64 * theta,
            BirthDeathSpec::C { l, mu, theta, .. } => mu + i.saturating_sub(l) as f64 * theta,
        }
    }

    /// Laplace transform of the first-passage-time density at `s`.
    pub fn transform(&self, s: Complex64) -> Result<Complex64, FptError> {
        match *self {
            BirthDeathSpec::B { v, kappa, mu, theta } => laplace_fpt_b(v, kappa, mu, theta, s),
            BirthDeathSpec::C { v, l, mu, theta } => Ok(laplace_fpt_c(v, l, mu, theta, s)),
        }
    }

    /// Analytic right-limit of the density at zero: a single step away from
    /// absorption fires at the state-1 death rate, anything further away
    /// has zero density at the origin.
    pub fn density_at_zero(&self) -> f64 {
        if self.initial_state() == 1 {
            self.death(1)
        } else {
            0.0
        }
    }
}

/// Transform of the passage time of `B[v, kappa, mu, theta]` to zero:
/// a `v`-fold product of continued fractions, one per unit of initial queue.
pub fn laplace_fpt_b(v: u32, kappa: f64, mu: f64, theta: f64, s: Complex64) -> Result<Complex64, FptError> {
    let mut out = vec![Complex64::new(0.0, 0.0); v as usize];
    laplace_fpt_b_prefix(v, kappa, mu, theta, s, &mut out)?;
    Ok(out[v as usize - 1])
}

/// Fills `out[v-1]` with the transform of `B[v, ...]` for `v = 1..=v_max`.
///
/// The stage-`n` fraction is the tail of the stage-`(n-1)` fraction, so one
/// deep Lentz evaluation at the last stage plus a backward recurrence yields
/// every stage; prefix products then walk the whole family of initial
/// states. Backward is the numerically stable direction for these
/// Stieltjes-type fractions.
pub fn laplace_fpt_b_prefix(
    v_max: u32,
    kappa: f64,
    mu: f64,
    theta: f64,
    s: Complex64,
    out: &mut [Complex64],
) -> Result<(), FptError> {
    let v_max = v_max as usize;
    assert!(out.len() >= v_max && v_max >= 1);
    let num = |j: usize| Complex64::new(-kappa * (mu + j as f64 * theta), 0.0);
    let den = |j: usize| Complex64::new(kappa + mu + j as f64 * theta, 0.0) + s;

    let mut frac = continued_fraction(|k| num(k + v_max), |k| den(k + v_max), CF_TOL, CF_MAX_TERMS)?;
    let mut stages = vec![Complex64::new(0.0, 0.0); v_max];
    stages[v_max - 1] = frac;
    for n in (1..v_max).rev() {
        frac = num(n) / (den(n) + frac);
        stages[n - 1] = frac;
    }

    let neg_inv_kappa = Complex64::new(-1.0 / kappa, 0.0);
    let mut prod = Complex64::new(1.0, 0.0);
    for (n, stage) in stages.iter().enumerate() {
        prod *= stage * neg_inv_kappa;
        out[n] = prod;
    }
    Ok(())
}

/// Transform of the passage time of `C[v, l, mu, theta]` to zero:
/// `(mu/(mu+s))^l * prod_{n=1..v} (mu + n theta)/(mu + n theta + s)`,
/// the hypoexponential of `l` exponentials at rate `mu` followed by the
/// `v` staged rates.
pub fn laplace_fpt_c(v: u32, l: u32, mu: f64, theta: f64, s: Complex64) -> Complex64 {
    let mut prod = (Complex64::new(mu, 0.0) / (s + mu)).powi(l as i32);
    for n in 1..=v {
        let rate = mu + n as f64 * theta;
        prod *= Complex64::new(rate, 0.0) / (s + rate);
    }
    prod
}

/// Occupancy law of the orders that have accumulated behind the agent by
/// time `u`: a Poisson pmf with mean `kappa/theta (1 - exp(-theta u))`,
/// truncated at `j_max`.
#[derive(Debug, Clone)]
pub struct OccupancyWeights {
    /// `probs[j] = R_j(u)` for `j = 0..=j_max`.
    pub probs: Vec<f64>,
    /// Mass beyond the truncation, `1 - sum(probs)`.
    pub tail: f64,
}

pub fn occupancy_weights(u: f64, kappa: f64, theta: f64, j_max: usize) -> OccupancyWeights {
    debug_assert!(u >= 0.0);
    // mean = kappa/theta * (1 - e^{-theta u}), computed stably for small theta*u.
    let mean = kappa / theta * (-(-theta * u).exp_m1());
    let mut probs = Vec::with_capacity(j_max + 1);
    let mut r = (-mean).exp();
    let mut total = 0.0;
    for j in 0..=j_max {
        if j > 0 {
            r *= mean / j as f64;
        }
        probs.push(r);
        total += r;
    }
    OccupancyWeights { probs, tail: (1.0 - total).max(0.0) }
}

/// Smallest truncation `J` with Poisson(`mean`) tail mass below `tol`;
/// capped at `cap`. Returns `(J, was_capped)`.
pub fn occupancy_truncation(mean: f64, tol: f64, cap: usize) -> (usize, bool) {
    let mut r = (-mean).exp();
    let mut cum = r;
    let mut j = 0usize;
    while 1.0 - cum > tol {
        if j >= cap {
            return (cap, true);
        }
        j += 1;
        r *= mean / j as f64;
        cum += r;
    }
    (j, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const RE0: Complex64 = Complex64::new(0.0, 0.0);

    #[test]
    fn b_zero_birth_limit_is_pure_death() {
        // v=1, kappa -> 0: Exp(mu + theta), transform (mu+theta)/(mu+theta+s).
        let s = Complex64::new(1.0, 0.0);
        let got = laplace_fpt_b(1, 1e-9, 1.0, 0.5, s).unwrap();
        assert_relative_eq!(got.re, 0.6, epsilon = 1e-6);
        assert!(got.im.abs() < 1e-9);
    }

    #[test]
    fn b_normalises_at_origin() {
        // Absorption is certain: the density integrates to one. The mean
        // passage time under crowd-scale rates runs to thousands of
        // seconds, so s must sit well below 1/E[tau] to see the limit.
        for (v, kappa, mu, theta) in [(1, 1.0, 1.0, 0.5), (3, 2.5, 0.2, 0.3), (7, 3.54, 0.17, 0.32)] {
            let got = laplace_fpt_b(v, kappa, mu, theta, Complex64::new(1e-12, 0.0)).unwrap();
            assert_relative_eq!(got.re, 1.0, epsilon = 1e-6);
        }
        let got = laplace_fpt_b(1, 1.0, 1.0, 0.5, Complex64::new(1e-9, 0.0)).unwrap();
        assert_relative_eq!(got.re, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn b_prefix_matches_stagewise_fractions() {
        // Reference: evaluate each stage's fraction by its own Lentz run
        // (no tail recurrence) and take prefix products.
        let (kappa, mu, theta) = (1.3, 0.4, 0.25);
        let s = Complex64::new(0.7, 2.3);
        let mut pre = vec![RE0; 6];
        laplace_fpt_b_prefix(6, kappa, mu, theta, s, &mut pre).unwrap();
        let mut prod = Complex64::new(1.0, 0.0);
        for n in 1..=6usize {
            let cf = crate::fpt::lentz::continued_fraction(
                |k| Complex64::new(-kappa * (mu + (k + n) as f64 * theta), 0.0),
                |k| Complex64::new(kappa + mu + (k + n) as f64 * theta, 0.0) + s,
                CF_TOL,
                CF_MAX_TERMS,
            )
            .unwrap();
            prod *= cf / Complex64::new(-kappa, 0.0);
            assert!((prod - pre[n - 1]).norm() < 1e-10);
        }
    }

    #[test]
    fn b_transform_matches_monte_carlo_laplace_functional() {
        // E[e^{-s tau}] of the v=2 chain by direct simulation.
        let (v0, kappa, mu, theta, s) = (2u32, 1.0, 1.0, 1.0, 1.0);
        let mut seed = 0x853c49e6748fea9bu64;
        let mut next_u64 = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        let mut uniform = move || (next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let n = 1_000_000usize;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let mut state = v0;
            let mut t = 0.0;
            while state > 0 {
                let up = kappa;
                let down = mu + state as f64 * theta;
                let total = up + down;
                t += -(1.0 - uniform()).ln() / total;
                if uniform() * total < up {
                    state += 1;
                } else {
                    state -= 1;
                }
            }
            let x = (-s * t).exp();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let analytic = laplace_fpt_b(v0, kappa, mu, theta, Complex64::new(s, 0.0)).unwrap().re;
        assert!(
            (analytic - mean).abs() <= 3.0 * se,
            "analytic {analytic} vs MC {mean} +- {se}"
        );
    }

    #[test]
    fn c_closed_form_examples() {
        // l=0, v=1: single exponential stage.
        let s = Complex64::new(0.8, 0.0);
        let got = laplace_fpt_c(1, 0, 1.0, 0.5, s);
        assert_relative_eq!(got.re, 1.5 / 2.3, epsilon = 1e-14);

        // Normalisation at s = 0.
        assert_relative_eq!(laplace_fpt_c(4, 3, 0.7, 0.3, RE0).re, 1.0, epsilon = 1e-14);

        // l=2, v=1, mu=1, theta=0.5, s=2: (1/3)^2 * 1.5/3.5.
        let got = laplace_fpt_c(1, 2, 1.0, 0.5, Complex64::new(2.0, 0.0));
        assert_relative_eq!(got.re, (1.0 / 9.0) * (1.5 / 3.5), epsilon = 1e-14);
    }

    #[test]
    fn occupancy_weights_basics() {
        // Empty at time zero.
        let w = occupancy_weights(0.0, 2.0, 0.5, 10);
        assert_eq!(w.probs[0], 1.0);
        assert!(w.probs[1..].iter().all(|&p| p == 0.0));

        // kappa = theta = 1, u -> infinity: Poisson(1).
        let w = occupancy_weights(1e9, 1.0, 1.0, 20);
        let e = (-1.0f64).exp();
        let mut fact = 1.0;
        for j in 0..=5 {
            if j > 0 {
                fact *= j as f64;
            }
            assert_relative_eq!(w.probs[j], e / fact, epsilon = 1e-12);
        }

        // Normalisation within the truncation tail.
        let w = occupancy_weights(3.0, 4.0, 0.6, 60);
        let total: f64 = w.probs.iter().sum();
        assert_relative_eq!(total + w.tail, 1.0, epsilon = 1e-12);
        assert!(w.tail < 1e-10);
    }

    #[test]
    fn occupancy_truncation_finds_small_tail() {
        let (j, capped) = occupancy_truncation(7.6, 1e-8, 80);
        assert!(!capped);
        let w = occupancy_weights(1e9, 7.6, 1.0, j);
        assert!(w.tail <= 1e-8);
        let (j2, capped2) = occupancy_truncation(500.0, 1e-8, 80);
        assert_eq!(j2, 80);
        assert!(capped2);
    }
}
