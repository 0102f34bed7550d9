use lobliq::sim::stream::*;
use lobliq::model::{Side, Direction};

fn main() {
    let params = lobliq::presets::fast_synthetic();
    let s = generate_event_stream(&params, 30_000.0, UnitSizes::default(), 7, 0.0);
    println!("events={} races={}", s.events.len(), s.races);
    let mut gaps = Vec::new();
    let mut last: Option<f64> = None;
    let mut last_price = s.events[0].book_after.0;
    let mut regime_up = true;
    for e in &s.events {
        if e.book_after.0 != last_price {
            regime_up = e.book_after.0 > last_price;
            last_price = e.book_after.0;
            last = None;
        }
        if regime_up && e.side == Side::Ask && e.kind == StreamEventKind::LimitArrival {
            if let Some(prev) = last { gaps.push(e.t - prev); }
            last = Some(e.t);
        }
    }
    let mean: f64 = gaps.iter().sum::<f64>() / gaps.len() as f64;
    println!("gaps={} mean={:.4} (expect {:.4})", gaps.len(), mean, 1.0/params.rates(Side::Ask, Direction::Up).kappa);
    // mean race duration
    println!("mean race duration ~ {:.2}", 30000.0 / s.races as f64);
}
