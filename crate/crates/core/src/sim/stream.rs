//! Synthetic Level-I order-flow generation: successive agent-free races
//! under the model's event law, with share sizes layered on top so the
//! stream can be written in message/orderbook file form and fed back to
//! the calibration pipeline.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::model::{Direction, ModelParams, Side};

use super::derive_rng;

/// Average share sizes per message kind; the unit size of the model is the
/// limit-order size `s_l`.
#[derive(Debug, Clone, Copy)]
pub struct UnitSizes {
    pub s_l: f64,
    pub s_m: f64,
    pub s_c: f64,
}

impl Default for UnitSizes {
    fn default() -> Self {
        UnitSizes { s_l: 209.0, s_m: 334.0, s_c: 201.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamEventKind {
    LimitArrival,
    MarketExecution,
    Cancellation,
}

#[derive(Debug, Clone)]
pub struct StreamEvent {
    pub t: f64,
    pub kind: StreamEventKind,
    pub side: Side,
    pub size_shares: f64,
    /// Price of the affected queue in ticks.
    pub price_ticks: i64,
    /// Book after the event: (ask price, ask shares, bid price, bid shares).
    pub book_after: (i64, f64, i64, f64),
}

#[derive(Debug)]
pub struct SyntheticStream {
    pub events: Vec<StreamEvent>,
    /// Price-change count (race boundaries).
    pub races: usize,
    /// Start-of-race volumes in unit size per direction, for distribution
    /// round trips: (direction, v_b, v_a).
    pub race_starts: Vec<(Direction, u32, u32)>,
    pub t_begin: f64,
    pub t_end: f64,
}

/// Message-rate view of the unit-rate model: market messages carry
/// `s_m/s_l` units each and cancellation messages `s_c/s_l`, so their
/// message intensities are scaled to preserve the unit flows.
pub fn generate_event_stream(
    params: &ModelParams,
    duration: f64,
    sizes: UnitSizes,
    seed: u64,
    t_begin: f64,
) -> SyntheticStream {
    let mut rng = derive_rng(seed, &[0x5eed]);
    let mut t = t_begin;
    let t_end = t_begin + duration;

    let mut dir = Direction::Up;
    let (vb0, va0) = params.vol_dist(dir).sample(rng.gen::<f64>());
    let mut bid_shares = vb0 as f64 * sizes.s_l;
    let mut ask_shares = va0 as f64 * sizes.s_l;
    let mut ask_price: i64 = 4000;

    let mut events = Vec::new();
    let mut races = 0usize;
    let mut race_starts = vec![(dir, vb0, va0)];

    while t < t_end {
        let bid_r = params.rates(Side::Bid, dir);
        let ask_r = params.rates(Side::Ask, dir);
        // Message intensities per side: limit, market, cancellation.
        let rates = [
            bid_r.kappa,
            bid_r.mu * sizes.s_l / sizes.s_m,
            bid_r.theta * bid_shares / sizes.s_c,
            ask_r.kappa,
            ask_r.mu * sizes.s_l / sizes.s_m,
            ask_r.theta * ask_shares / sizes.s_c,
        ];
        let total: f64 = rates.iter().sum();
        t += -(1.0 - rng.gen::<f64>()).ln() / total;
        if t >= t_end {
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut idx = 0;
        while idx < 5 && u >= rates[idx] {
            u -= rates[idx];
            idx += 1;
        }
        let (side, kind, size) = match idx {
            0 => (Side::Bid, StreamEventKind::LimitArrival, sizes.s_l),
            1 => (Side::Bid, StreamEventKind::MarketExecution, sizes.s_m),
            2 => (Side::Bid, StreamEventKind::Cancellation, sizes.s_c),
            3 => (Side::Ask, StreamEventKind::LimitArrival, sizes.s_l),
            4 => (Side::Ask, StreamEventKind::MarketExecution, sizes.s_m),
            _ => (Side::Ask, StreamEventKind::Cancellation, sizes.s_c),
        };
        let queue = match side {
            Side::Bid => &mut bid_shares,
            Side::Ask => &mut ask_shares,
        };
        match kind {
            StreamEventKind::LimitArrival => *queue += size,
            _ => *queue -= size,
        }
        let price_ticks = match side {
            Side::Ask => ask_price,
            Side::Bid => ask_price - 1,
        };

        // Depletion moves the price one tick and redraws both queues.
        if *queue <= 0.0 {
            dir = match side {
                Side::Ask => Direction::Up,
                Side::Bid => Direction::Down,
            };
            ask_price += dir.sign();
            let (vb, va) = params.vol_dist(dir).sample(rng.gen::<f64>());
            bid_shares = vb as f64 * sizes.s_l;
            ask_shares = va as f64 * sizes.s_l;
            races += 1;
            race_starts.push((dir, vb, va));
        }

        events.push(StreamEvent {
            t,
            kind,
            side,
            size_shares: size,
            price_ticks,
            book_after: (ask_price, ask_shares, ask_price - 1, bid_shares),
        });
    }

    SyntheticStream { events, races, race_starts, t_begin, t_end: t_end.min(t) }
}

/// Writes the stream as a message/orderbook file pair in the Level-I
/// column layout: `time, type, order_id, size, price, direction` and
/// `ask_price_1, ask_size_1, bid_price_1, bid_size_1`. Prices are written
/// in 1e-4 currency units with a one-cent tick.
pub fn write_lobster_files(
    stream: &SyntheticStream,
    message_path: &Path,
    orderbook_path: &Path,
) -> std::io::Result<()> {
    let mut msg = std::io::BufWriter::new(std::fs::File::create(message_path)?);
    let mut book = std::io::BufWriter::new(std::fs::File::create(orderbook_path)?);
    for (i, e) in stream.events.iter().enumerate() {
        let type_code = match e.kind {
            StreamEventKind::LimitArrival => 1,
            StreamEventKind::Cancellation => 3,
            StreamEventKind::MarketExecution => 4,
        };
        // Resting-order convention: ask-side rows carry direction -1.
        let direction = match e.side {
            Side::Ask => -1,
            Side::Bid => 1,
        };
        writeln!(
            msg,
            "{:.9},{},{},{},{},{}",
            e.t,
            type_code,
            i + 1,
            e.size_shares.round() as i64,
            e.price_ticks * 100,
            direction
        )?;
        let (ap, asz, bp, bsz) = e.book_after;
        writeln!(book, "{},{},{},{}", ap * 100, asz.max(0.0).round() as i64, bp * 100, bsz.max(0.0).round() as i64)?;
    }
    Ok(())
}
