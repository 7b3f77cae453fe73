//! District demand-side-management workbench.
//!
//! Simulates a district of buildings with controllable cooling and
//! domestic-hot-water storage, scores load profiles with five equally
//! weighted district metrics normalised by a rule-based baseline, and trains
//! a centralised Soft Actor-Critic agent against that baseline.

pub mod agents;
pub mod cli;
pub mod data;
pub mod env;
pub mod metrics;
pub mod neural;
pub mod plot;
pub mod reward;
pub mod sac;
