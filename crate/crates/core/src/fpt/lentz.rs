//! Continued-fraction evaluation by the modified Lentz forward algorithm.

use num_complex::Complex64;

use super::FptError;

/// Value substituted for a vanishing pivot before giving up.
const TINY: f64 = 1e-30;

/// Evaluates `K_{k>=0} a_k / b_k`, i.e. the limit of
/// `t_0 ∘ t_1 ∘ ... ∘ t_k(0)` with `t_k(u) = a_k / (b_k + u)`,
/// stopping once the multiplicative Lentz update deviates from one by less
/// than `tol`.
///
/// Coefficients are supplied as functions of the index so callers can stream
/// arbitrarily deep fractions without allocating.
pub fn continued_fraction(
    a: impl Fn(usize) -> Complex64,
    b: impl Fn(usize) -> Complex64,
    tol: f64,
    max_terms: usize,
) -> Result<Complex64, FptError> {
    let a0 = a(0);
    if a0.norm_sqr() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }

    // Modified Lentz with the fraction written as 0 + a_0/(b_0 + a_1/(...)).
    let tiny = Complex64::new(TINY, 0.0);
    let mut f = tiny;
    let mut c = f;
    let mut d = Complex64::new(0.0, 0.0);

    for k in 0..max_terms {
        let (ak, bk) = (a(k), b(k));
        d = bk + ak * d;
        if d.norm_sqr() == 0.0 {
            d = tiny;
        }
        c = bk + ak / c;
        if c.norm_sqr() == 0.0 {
            c = tiny;
        }
        d = d.inv();
        let delta = c * d;
        f *= delta;
        if !f.is_finite() {
            return Err(FptError::PivotBreakdown { term: k });
        }
        if (delta - 1.0).norm() < tol {
            return Ok(f);
        }
    }
    Err(FptError::NonConvergence { max_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent oracle: evaluate the truncated fraction bottom-up.
    fn backward_recurrence(
        a: impl Fn(usize) -> Complex64,
        b: impl Fn(usize) -> Complex64,
        depth: usize,
    ) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (0..depth).rev() {
            acc = a(k) / (b(k) + acc);
        }
        acc
    }

    #[test]
    fn golden_ratio_conjugate() {
        let one = |_: usize| Complex64::new(1.0, 0.0);
        let got = continued_fraction(one, one, 1e-14, 10_000).unwrap();
        let want = (5.0_f64.sqrt() - 1.0) / 2.0;
        assert_relative_eq!(got.re, want, epsilon = 1e-10);
        assert!(got.im.abs() < 1e-14);

        let oracle = backward_recurrence(one, one, 2000);
        assert_relative_eq!(got.re, oracle.re, epsilon = 1e-12);
    }

    #[test]
    fn single_term_fraction() {
        // a_0 = c, a_k = 0 afterwards: exactly c / b_0.
        let c = Complex64::new(3.5, -1.25);
        let b0 = Complex64::new(2.0, 0.5);
        let got = continued_fraction(
            move |k| if k == 0 { c } else { Complex64::new(0.0, 0.0) },
            move |k| if k == 0 { b0 } else { Complex64::new(1.0, 0.0) },
            1e-14,
            100,
        )
        .unwrap();
        let want = c / b0;
        assert!((got - want).norm() < 1e-14 * want.norm());
    }

    #[test]
    fn zero_leading_numerator_is_zero() {
        let got = continued_fraction(
            |_| Complex64::new(0.0, 0.0),
            |_| Complex64::new(1.0, 0.0),
            1e-12,
            100,
        )
        .unwrap();
        assert_eq!(got, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn matches_backward_recurrence_on_random_fractions() {
        // Stieltjes-like fractions with positive coefficients.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let base_a = 0.2 + 2.0 * next();
            let base_b = 1.0 + 2.0 * next();
            let a = move |k: usize| Complex64::new(base_a * (1.0 + k as f64 * 0.1), 0.0);
            let b = move |k: usize| Complex64::new(base_b * (1.0 + k as f64 * 0.2), 0.0);
            let got = continued_fraction(a, b, 1e-14, 10_000).unwrap();
            let oracle = backward_recurrence(a, b, 3000);
            assert_relative_eq!(got.re, oracle.re, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        // Oscillating coefficients that never settle within two terms.
        let err = continued_fraction(
            |_| Complex64::new(1.0, 0.0),
            |_| Complex64::new(1.0, 0.0),
            1e-14,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, FptError::NonConvergence { .. }));
    }
}
