//! Ready-made parameter sets at the scale of real large-tick Nasdaq stocks.
//!
//! The Poisson rates are the published week-long Level-I estimates for YHOO,
//! MSFT and INTC (with and without a one-millisecond reaction latency). The
//! accompanying post-move volume distributions are synthetic stand-ins: the
//! real ones are estimated from proprietary data, so we ship product-form
//! distributions with the documented qualitative shape (thin queue on the
//! side the price moved away from, deep queue on the other side).

use crate::model::{Direction, ModelParams, RateTriple, Side, VolumeDist};

pub const PRESET_NAMES: [&str; 6] =
    ["yhoo-0ms", "yhoo-1ms", "msft-0ms", "msft-1ms", "intc-0ms", "intc-1ms"];

/// Look a preset up by name, e.g. `"yhoo-0ms"`.
pub fn by_name(name: &str) -> Option<ModelParams> {
    match name {
        "yhoo-0ms" => Some(yhoo_no_latency()),
        "yhoo-1ms" => Some(yhoo_1ms_latency()),
        "msft-0ms" => Some(msft_no_latency()),
        "msft-1ms" => Some(msft_1ms_latency()),
        "intc-0ms" => Some(intc_no_latency()),
        "intc-1ms" => Some(intc_1ms_latency()),
        _ => None,
    }
}

/// Truncated-geometric marginal on `{1..n}` with decay ratio `r`.
fn geometric_marginal(n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|k| r.powi(k as i32)).collect()
}

/// Product-form volume distributions: after an up move the fresh best bid is
/// thin (fast decay) and the surviving ask queue is deep (slow decay); the
/// down-move law mirrors it.
fn synthetic_vol_dists(n: usize) -> (VolumeDist, VolumeDist) {
    let thin = geometric_marginal(n, 0.55);
    let deep = geometric_marginal(n, 0.88);
    let up = VolumeDist::product(&thin, &deep).expect("valid marginals");
    let down = VolumeDist::product(&deep, &thin).expect("valid marginals");
    (up, down)
}

fn build(rates: [(Side, Direction, RateTriple); 4]) -> ModelParams {
    let (up, down) = synthetic_vol_dists(25);
    ModelParams::new(rates, up, down, 1.0, 9).expect("preset parameters are valid")
}

/// Small queues and high turnover: races resolve in seconds rather than
/// minutes. Handy for demos and for calibration round trips that need
/// many races in a short stream; not estimated from any market.
pub fn fast_synthetic() -> ModelParams {
    let thin = geometric_marginal(6, 0.45);
    let deep = geometric_marginal(6, 0.7);
    let up = VolumeDist::product(&thin, &deep).expect("valid marginals");
    let down = VolumeDist::product(&deep, &thin).expect("valid marginals");
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
    .expect("preset parameters are valid")
}

/// YHOO, Level-I week estimate, no reaction latency.
pub fn yhoo_no_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.14, 1.97, 0.26)),
        (Side::Bid, Direction::Up, RateTriple::new(0.17, 3.54, 0.32)),
        (Side::Ask, Direction::Down, RateTriple::new(0.15, 3.29, 0.33)),
        (Side::Bid, Direction::Down, RateTriple::new(0.15, 1.92, 0.21)),
    ])
}

/// YHOO, one-millisecond reaction latency.
pub fn yhoo_1ms_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.13, 1.87, 0.23)),
        (Side::Bid, Direction::Up, RateTriple::new(0.16, 2.07, 0.26)),
        (Side::Ask, Direction::Down, RateTriple::new(0.14, 2.02, 0.27)),
        (Side::Bid, Direction::Down, RateTriple::new(0.15, 1.83, 0.18)),
    ])
}

/// MSFT, no reaction latency.
pub fn msft_no_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.32, 3.07, 0.31)),
        (Side::Bid, Direction::Up, RateTriple::new(0.34, 5.97, 0.50)),
        (Side::Ask, Direction::Down, RateTriple::new(0.35, 5.97, 0.51)),
        (Side::Bid, Direction::Down, RateTriple::new(0.34, 3.06, 0.32)),
    ])
}

/// MSFT, one-millisecond reaction latency.
pub fn msft_1ms_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.31, 2.89, 0.27)),
        (Side::Bid, Direction::Up, RateTriple::new(0.33, 3.31, 0.40)),
        (Side::Ask, Direction::Down, RateTriple::new(0.34, 3.22, 0.41)),
        (Side::Bid, Direction::Down, RateTriple::new(0.34, 2.87, 0.27)),
    ])
}

/// INTC, no reaction latency.
pub fn intc_no_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.16, 2.45, 0.16)),
        (Side::Bid, Direction::Up, RateTriple::new(0.17, 3.59, 0.21)),
        (Side::Ask, Direction::Down, RateTriple::new(0.18, 3.87, 0.22)),
        (Side::Bid, Direction::Down, RateTriple::new(0.18, 2.22, 0.16)),
    ])
}

/// INTC, one-millisecond reaction latency.
pub fn intc_1ms_latency() -> ModelParams {
    build([
        (Side::Ask, Direction::Up, RateTriple::new(0.15, 2.36, 0.15)),
        (Side::Bid, Direction::Up, RateTriple::new(0.19, 2.46, 0.17)),
        (Side::Ask, Direction::Down, RateTriple::new(0.18, 2.49, 0.18)),
        (Side::Bid, Direction::Down, RateTriple::new(0.19, 2.36, 0.17)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let p = by_name(name).unwrap();
            p.validate().unwrap();
            assert_eq!(p.n_max(), 25);
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn yhoo_iota_is_bid_up() {
        // max(mu + theta) over the four regimes: bid side after an up move.
        let p = yhoo_no_latency();
        assert!((p.iota() - 0.49).abs() < 1e-12);
    }
}
