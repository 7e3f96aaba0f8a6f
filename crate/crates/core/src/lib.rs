pub mod engines;
pub mod harness;
pub mod metrics;
pub mod parse;
pub mod policies;
pub mod rewards;
pub mod rl;
pub mod tasks;
pub mod types;
