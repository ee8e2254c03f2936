//! Learning-based file pre-storing for satellite networks.

pub mod ac;
pub mod env;
pub mod graph;
pub mod harness;
pub mod meta;
pub mod nn;
pub mod requests;
pub mod seed;
