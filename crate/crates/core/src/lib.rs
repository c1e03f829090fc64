//! Performance laboratory for blockchain-enabled radio access networks.

pub mod analytic;
pub mod attack;
pub mod config;
pub mod experiments;
pub mod markov;
pub mod sim;
