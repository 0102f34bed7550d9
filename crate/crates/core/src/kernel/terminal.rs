//! Terminal kernel: joint law of the in-flight race outlasting the time to
//! maturity and the agent's fill accumulated by then.

use crate::fpt::{DirCurves, TimeGrid};
use crate::model::ReducedRaceKey;

/// `P(fill = z | key, lambda)` for `z = 0..=l`, evaluated at a grid time.
///
/// `lambda <= 0` degenerates to a point mass at zero fill. Positive lambda
/// must be a fine-grid point of the cache grid.
pub fn terminal_probs(grid: &TimeGrid, curves: &DirCurves, key: &ReducedRaceKey, lambda: f64) -> Vec<f64> {
    let l = key.l as usize;
    if lambda <= 0.0 {
        let mut out = vec![0.0; l + 1];
        out[0] = 1.0;
        return out;
    }
    let k = grid
        .fine_index(lambda)
        .expect("terminal kernel evaluation requires a fine-grid lambda");

    let bid_surv = curves.bid_b[(key.v_b - key.m) as usize - 1].survival(k).max(0.0);
    let mut out = vec![0.0; l + 1];
    if key.l == 0 {
        let ask_surv = curves.ask_b[key.v_a as usize - 1].survival(k).max(0.0);
        out[0] = bid_surv * ask_surv;
        return out;
    }

    let va = key.v_a as usize - 1;
    let c1_surv = curves.c[0][va].survival(k).max(0.0);
    out[0] = bid_surv * c1_surv;

    // Partial fills: the (z+1)-th head unit is in exponential service when
    // maturity arrives; CDF-level convolution with the service law.
    let mu_a = curves.mu_a;
    for z in 1..l {
        let c_z = &curves.c[z - 1][va];
        let conv = c_z.cdf[k] - (-mu_a * lambda).exp() * curves.h_tilt[z - 1][va][k];
        out[z] = bid_surv * (c_z.cdf[k] - conv).max(0.0);
    }

    // Full fill: head units cleared but the rear queue still alive.
    let c_l = &curves.c[l - 1][va];
    let a_l = &curves.a[l - 1][va];
    out[l] = bid_surv * (c_l.cdf[k] - a_l.cdf[k]).max(0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpt::{FptCache, GridSpec};
    use crate::model::Direction;

    #[test]
    fn negative_lambda_is_a_point_mass_at_zero() {
        let params = crate::presets::fast_synthetic();
        let spec = GridSpec { fine_end: 40.0, t_max: Some(41.0), ..GridSpec::default() };
        let cache = FptCache::build(&params, 2, &spec).unwrap();
        let key = ReducedRaceKey::new(Direction::Up, 2, 2, 0, 1).unwrap();
        let p = terminal_probs(&cache.grid, cache.dir(Direction::Up), &key, -1.0);
        assert_eq!(p, vec![1.0, 0.0]);
        let p0 = terminal_probs(&cache.grid, cache.dir(Direction::Up), &key, 0.0);
        assert_eq!(p0, vec![1.0, 0.0]);
    }

    #[test]
    fn partial_fill_matches_head_queue_difference() {
        // The staged identity: the tilted convolution for fill z equals
        // F_{C^z} - F_{C^{z+1}} because one more head unit is exactly one
        // more exponential service stage.
        let params = crate::presets::fast_synthetic();
        let spec = GridSpec { fine_end: 40.0, t_max: Some(41.0), ..GridSpec::default() };
        let cache = FptCache::build(&params, 2, &spec).unwrap();
        let curves = cache.dir(Direction::Down);
        let key = ReducedRaceKey::new(Direction::Down, 3, 2, 1, 2).unwrap();
        for lambda in [0.5, 2.0, 5.0, 10.0] {
            let p = terminal_probs(&cache.grid, curves, &key, lambda);
            let k = cache.grid.fine_index(lambda).unwrap();
            let bid_surv = curves.bid_b[1].survival(k);
            let want = bid_surv * (curves.c[0][1].cdf[k] - curves.c[1][1].cdf[k]);
            assert!(
                (p[1] - want).abs() < 2e-4,
                "lambda {lambda}: tilted {} vs staged {want}",
                p[1]
            );
        }
    }
}
