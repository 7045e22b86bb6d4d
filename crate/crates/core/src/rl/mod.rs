//! Policy-gradient decap placement: state encodings, a small conv-net
//! policy/value model, PPO updates, and the two placement environments.

pub mod env;
pub mod net;
pub mod ppo;
pub mod state;
pub mod train;
