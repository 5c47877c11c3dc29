//! Batch experiment driver: JSON run configs with dotted-path overrides,
//! seeded multi-run training with trace persistence, snapshot evaluation,
//! equilibrium oracles, and a bandit benchmark.
//!
//! Every artifact this crate writes is deterministic for a fixed config:
//! outputs carry the config hash and code version but never wall-clock data,
//! so re-running a command reproduces files byte for byte.

pub mod bench;
pub mod config;
pub mod evaluate;
pub mod train;
