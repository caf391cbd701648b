//! Event-triggered control with static and dynamic event generators.
//!
//! A plant ([`plant`]) is closed by a sampled feedback that is refreshed only
//! when an event generator ([`triggers`]) fires. Static generators compare the
//! measurement error against a fraction of the Lyapunov decay; dynamic ones
//! add an internal filter state `η` that lets the static condition be violated
//! for a while. [`sim`] integrates the hybrid system with localized events and
//! provides invariant monitors, [`stats`] runs batches over initial conditions
//! and generator grids, and [`export`] writes the CSV formats.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod cli;
pub mod config;
pub mod export;
pub mod kinf;
pub mod plant;
pub mod sim;
pub mod stats;
pub mod triggers;
