//! Single queueing race between the best bid and ask queues, with the
//! agent's market order already netted from the bid and her limit order
//! posted at the back of the ask queue.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Direction, ModelParams, ReducedRaceKey, Side};

/// Result of a race run to depletion of one side.
#[derive(Debug, Clone)]
pub struct RaceOutcome {
    pub duration: f64,
    pub direction: Direction,
    /// Units of the agent's limit order matched by the end of the race.
    pub executed_limit: u32,
    /// Times at which each of those units matched, ascending.
    pub fill_times: Vec<f64>,
}

impl RaceOutcome {
    /// Fill count if the race were cut off at `lambda`.
    pub fn partial_at(&self, lambda: f64) -> u32 {
        self.fill_times.iter().take_while(|&&t| t <= lambda).count() as u32
    }
}

/// Race observed only up to a time cap.
#[derive(Debug, Clone)]
pub enum RaceProgress {
    /// The race resolved within the cap.
    Ended(RaceOutcome),
    /// Both queues were still alive at the cap.
    Survived {
        /// Agent fills that happened before the cap.
        fills_by_cap: u32,
    },
}

struct RaceState {
    t: f64,
    bid: u32,
    /// Crowd orders at or ahead of the agent in the ask queue.
    c_pub: u32,
    /// Unexecuted part of the agent's limit order.
    c_agent: u32,
    /// Crowd orders behind the agent.
    rear: u32,
    fill_times: Vec<f64>,
}

fn sample_exp(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

/// Advances the race by one event. Returns the finished outcome when a
/// side depletes.
fn step(state: &mut RaceState, key: &ReducedRaceKey, params: &ModelParams, rng: &mut ChaCha8Rng) -> Option<RaceOutcome> {
    let bid = params.rates(Side::Bid, key.j);
    let ask = params.rates(Side::Ask, key.j);

    let bid_arr = bid.kappa;
    let bid_mkt = bid.mu;
    let bid_can = bid.theta * state.bid as f64;
    let ask_arr = ask.kappa;
    let ask_mkt = ask.mu;
    let ask_can_head = ask.theta * state.c_pub as f64;
    let ask_can_rear = ask.theta * state.rear as f64;
    let total = bid_arr + bid_mkt + bid_can + ask_arr + ask_mkt + ask_can_head + ask_can_rear;

    state.t += sample_exp(rng, total);
    let mut u = rng.gen::<f64>() * total;

    if u < bid_arr {
        state.bid += 1;
    } else if {
        u -= bid_arr;
        u < bid_mkt + bid_can
    } {
        state.bid -= 1;
        if state.bid == 0 {
            return Some(RaceOutcome {
                duration: state.t,
                direction: Direction::Down,
                executed_limit: key.l - state.c_agent,
                fill_times: std::mem::take(&mut state.fill_times),
            });
        }
    } else if {
        u -= bid_mkt + bid_can;
        u < ask_arr
    } {
        state.rear += 1;
    } else if {
        u -= ask_arr;
        u < ask_mkt
    } {
        // Market buy consumes the head of the ask queue: crowd orders with
        // priority first, then the agent's units, then the rear.
        if state.c_pub > 0 {
            state.c_pub -= 1;
        } else if state.c_agent > 0 {
            state.c_agent -= 1;
            state.fill_times.push(state.t);
        } else {
            state.rear -= 1;
        }
    } else if {
        u -= ask_mkt;
        u < ask_can_head
    } {
        state.c_pub -= 1;
    } else {
        state.rear -= 1;
    }

    if state.c_pub + state.c_agent + state.rear == 0 {
        debug_assert_eq!(state.c_agent, 0);
        return Some(RaceOutcome {
            duration: state.t,
            direction: Direction::Up,
            executed_limit: key.l,
            fill_times: std::mem::take(&mut state.fill_times),
        });
    }
    None
}

fn initial_state(key: &ReducedRaceKey) -> RaceState {
    RaceState {
        t: 0.0,
        bid: key.v_b - key.m,
        c_pub: key.v_a,
        c_agent: key.l,
        rear: 0,
        fill_times: Vec::new(),
    }
}

/// Runs one race to completion.
pub fn simulate_race(key: &ReducedRaceKey, params: &ModelParams, rng: &mut ChaCha8Rng) -> RaceOutcome {
    let mut state = initial_state(key);
    loop {
        if let Some(outcome) = step(&mut state, key, params, rng) {
            return outcome;
        }
    }
}

/// Runs one race but stops observing at `cap`; the caller learns either the
/// full outcome (if it resolved in time) or the fills accumulated by the
/// cap. Event-level cost is bounded by the cap, not the race length.
pub fn simulate_race_capped(
    key: &ReducedRaceKey,
    params: &ModelParams,
    rng: &mut ChaCha8Rng,
    cap: f64,
) -> RaceProgress {
    let mut state = initial_state(key);
    loop {
        let fills_before = state.fill_times.len() as u32;
        match step(&mut state, key, params, rng) {
            Some(outcome) => {
                if outcome.duration <= cap {
                    return RaceProgress::Ended(outcome);
                }
                return RaceProgress::Survived { fills_by_cap: outcome.partial_at(cap) };
            }
            None => {
                if state.t > cap {
                    let fills = state.fill_times.iter().take_while(|&&t| t <= cap).count() as u32;
                    debug_assert!(fills <= fills_before + 1);
                    return RaceProgress::Survived { fills_by_cap: fills };
                }
            }
        }
    }
}
