//! The `bandit-bench` command: plays the weighted-FTRL bandit against its
//! adversaries and counts how often the realized weighted regret stays
//! below the high-probability bound.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nashplay_core::bandit::{
    bandit_iota, regret_bound, run_bandit, AlternatingAdversary, BanditAdversary,
    StochasticAdversary,
};
use nashplay_core::rng::RngStream;
use nashplay_core::trace::code_version;
use rayon::prelude::*;
use serde::Serialize;

/// Benchmark dimensions.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub arms: Vec<usize>,
    pub rounds: usize,
    pub trials: u32,
    /// Failure probability entering the bound's log factor.
    pub p: f64,
    pub seed: u64,
}

/// One (arms, adversary, weight-profile) cell of the benchmark.
#[derive(Clone, Debug, Serialize)]
pub struct BenchCell {
    pub arms: usize,
    pub adversary: String,
    pub weights: String,
    pub trials: u32,
    /// Trials whose weighted regret stayed below the evaluated bound.
    pub below_bound: u32,
    pub bound: f64,
    pub mean_regret: f64,
    pub worst_regret: f64,
}

/// `bandit.json` contents.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub code_version: String,
    pub rounds: usize,
    pub p: f64,
    pub seed: u64,
    pub cells: Vec<BenchCell>,
}

fn weight_profile(name: &str, rounds: usize) -> Vec<f64> {
    match name {
        "unit" => vec![1.0; rounds],
        // The shape the learner feeds the bandit: decaying per-visit weights.
        "inverse_sqrt" => (1..=rounds).map(|t| 1.0 / (t as f64).sqrt()).collect(),
        other => unreachable!("unknown weight profile {other}"),
    }
}

fn adversary_for(name: &str, arms: usize) -> Box<dyn BanditAdversary> {
    match name {
        "stochastic" => Box::new(StochasticAdversary {
            means: (0..arms).map(|j| 0.25 + 0.5 * j as f64 / arms.max(2) as f64).collect(),
        }),
        "alternating" => Box::new(AlternatingAdversary { arms }),
        other => unreachable!("unknown adversary {other}"),
    }
}

/// Runs the full benchmark grid and writes `bandit.json` under `out`.
pub fn cmd_bandit_bench(config: &BenchConfig, out: Option<&Path>) -> Result<BenchReport> {
    if config.arms.is_empty() {
        bail!("--arms needs at least one arm count");
    }
    if config.arms.iter().any(|&a| a < 2) {
        bail!("each arm count must be at least 2");
    }
    if config.rounds < 1 || config.trials < 1 {
        bail!("--rounds and --trials must be at least 1");
    }
    if !(config.p > 0.0 && config.p <= 1.0) {
        bail!("--p must lie in (0, 1]");
    }

    let root = RngStream::from_seed(config.seed);
    let mut cells = Vec::new();
    for (cell_tag, &arms) in config.arms.iter().enumerate() {
        let iota = bandit_iota(arms, config.rounds, config.p);
        for adversary_name in ["stochastic", "alternating"] {
            for weights_name in ["unit", "inverse_sqrt"] {
                let weights = weight_profile(weights_name, config.rounds);
                let bound = regret_bound(&weights, arms, iota);
                let cell_stream = root
                    .split(cell_tag as u64)
                    .split(u64::from(adversary_name == "alternating"))
                    .split(u64::from(weights_name == "inverse_sqrt"));
                let regrets: Vec<f64> = (0..config.trials)
                    .into_par_iter()
                    .map(|trial| {
                        let mut rng = cell_stream.split(u64::from(trial));
                        let mut adversary = adversary_for(adversary_name, arms);
                        run_bandit(arms, adversary.as_mut(), &weights, &mut rng).weighted_regret
                    })
                    .collect();
                let below = regrets.iter().filter(|&&r| r <= bound).count() as u32;
                cells.push(BenchCell {
                    arms,
                    adversary: adversary_name.to_string(),
                    weights: weights_name.to_string(),
                    trials: config.trials,
                    below_bound: below,
                    bound,
                    mean_regret: regrets.iter().sum::<f64>() / regrets.len() as f64,
                    worst_regret: regrets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                });
            }
        }
    }

    let report = BenchReport {
        code_version: code_version().to_string(),
        rounds: config.rounds,
        p: config.p,
        seed: config.seed,
        cells,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut payload = serde_json::to_vec_pretty(&report).expect("report serializes");
        payload.push(b'\n');
        fs::write(dir.join("bandit.json"), payload).context("writing bandit.json")?;
    }
    Ok(report)
}
