//! Hierarchical 2.5D power-delivery-network modeling and decap
//! optimization: frequency-domain impedance analysis, time-domain
//! voltage-violation analysis, a PPO optimizer over placement levels,
//! and metaheuristic baselines.

pub mod ac;
pub mod baseline;
pub mod case;
pub mod currents;
pub mod decap;
pub mod error;
pub mod floorplan;
pub mod freq;
pub mod mna;
pub mod netlist;
pub(crate) mod par;
pub mod params;
pub mod pwl;
pub mod rl;
pub mod solve;
pub mod transient;
pub mod vvi;

pub use error::{Error, Result};
