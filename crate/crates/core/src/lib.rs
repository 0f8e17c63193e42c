//! Options-as-responses (OPRE) hierarchical agents for spatial
//! rock-paper-scissors Markov games.
//!
//! The crate is organised bottom-up:
//!
//! - [`game`]: the two Markov games (Running With Scissors and RPS Arena),
//!   payoffs, egocentric observations, presets and replays.
//! - [`tensor`]: a small reverse-mode autodiff tape with the layers the
//!   networks need and a finite-difference gradient checker.
//! - [`model`]: the OPRE network, flat baselines and ablation variants.
//! - [`learning`]: V-trace targets, variant losses and the optimizer.
//! - [`harness`]: actors, learners, trajectory queues and matchmaking.
//! - [`eval`]: scripted opponents, hold-out evaluation, tournaments,
//!   Nash equilibria, effective diversity and option probes.
//! - [`cli`]: the command implementations behind the `opre` binary.

pub mod cli;
pub mod error;
pub mod eval;
pub mod game;
pub mod harness;
pub mod learning;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
