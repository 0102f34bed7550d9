//! Optimal liquidation of a small child order in a Level-I limit order book.
//!
//! The book is a large-tick market: the spread is pinned at one tick and all
//! price moves are queueing races between the best bid and ask queues. Order
//! flow from the crowd is Poisson (market orders, limit orders, per-unit
//! cancellations) with rates conditioned on the last price-move direction.
//! An agent sells `chi` units before a deadline `T`, acting only at
//! price-change epochs with a market order plus a back-of-queue limit order.
//!
//! The crate is organised around that pipeline:
//!
//! - [`model`]: domain types, admissibility, reward functions, parameter I/O.
//! - [`fpt`]: first-passage-time densities/CDFs of the queue processes via
//!   continued-fraction Laplace transforms and Euler numerical inversion.
//! - [`kernel`]: the semi-Markov transition kernel and the terminal
//!   (race-outlasts-maturity) kernel, tabulated for the solver.
//! - [`solver`]: finite-horizon semi-Markov decision process solved by
//!   monotone value iteration on a reduced state space.
//! - [`sim`]: exact event-level simulator; the brute-force oracle for every
//!   analytic quantity, plus synthetic order-flow generation.
//! - [`estimation`]: calibration of all model parameters from LOBSTER-style
//!   Level-I message/orderbook files.

// pub mod estimation;
pub mod fpt;
pub mod kernel;
pub mod model;
pub mod presets;
pub mod sim;
pub mod solver;

pub use model::{Action, Direction, ModelParams, ReducedRaceKey, Side, SystemState};
