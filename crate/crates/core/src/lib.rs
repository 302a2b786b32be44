//! Compute-light tactical shooter bots: a 2v2 bomb-round simulator, ray-cast
//! and audio sensors, a coupled discrete action space, conv+LSTM behavior
//! cloning, and the distribution metrics used to compare bots with their
//! demonstrators.

pub mod actions;
pub mod cli;
pub mod eval;
pub mod formats;
pub mod net;
pub mod policy;
pub mod sensors;
pub mod train;
pub mod world;
