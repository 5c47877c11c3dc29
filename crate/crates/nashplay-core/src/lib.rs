//! Learning approximate Nash equilibria of tabular two-player zero-sum Markov
//! games by self-play.
//!
//! The crate provides:
//!
//! - [`game`] — game representation, episode simulation, and instance
//!   generators (random games and the parity hard instance);
//! - [`matrix_games`] — exact zero-sum solving and coarse correlated
//!   equilibria for one-shot matrix games, built on a small dense simplex;
//! - [`schedules`] — learning-rate and bonus schedules shared by the learners;
//! - [`nash_q`] / [`nash_v`] — the two optimistic self-play learners, each
//!   recording enough history to extract a certified (non-Markov) policy;
//! - [`certified`] — executors, exact laws, and policy trees for certified
//!   policies;
//! - [`bandit`] — the weighted follow-the-regularized-leader bandit used by
//!   the V-learner's policy updates, exposed standalone;
//! - [`eval`] — equilibrium oracles, best responses, and exploitability
//!   (exact and Monte Carlo);
//! - [`trace`] — on-disk formats: JSONL episode traces and binary snapshots;
//! - [`selftest`] — the runnable acceptance checks behind `selftest`.
//!
//! All randomness flows through [`rng::RngStream`], a named, versioned,
//! splittable generator, so every run is bit-for-bit reproducible from its
//! seed.

// Dense tableau and table code below indexes several parallel arrays with one
// counter; iterator rewrites of those loops hide the shared index.
#![allow(clippy::needless_range_loop)]

pub mod bandit;
pub mod certified;
pub mod eval;
pub mod game;
pub mod linprog;
pub mod matrix_games;
pub mod nash_q;
pub mod nash_v;
pub mod rng;
pub mod schedules;
pub mod selftest;
pub mod trace;
