//! Mean-field Bayesian optimisation for large populations of agents.
//!
//! A Gaussian process models the system reward as a function of a
//! representative agent's action, its context, and the context-conditional
//! action distribution every agent samples from. Each round the optimiser
//! picks the distribution maximising a mean-field upper confidence bound,
//! samples a population from it and observes one noisy reward.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod baselines;
pub mod data;
pub mod envs;
pub mod gp;
pub mod meanfield;
pub mod runner;
