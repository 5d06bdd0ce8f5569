//! Monte Carlo wealth dynamics under stochastic growth with salaries.

pub mod appendix;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod kernels;
pub mod metrics;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod trajectory;
