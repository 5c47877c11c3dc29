//! The `train` command: one seeded learner run per worker, traces and
//! snapshots on disk, and a summary with gap statistics and the fitted
//! decay slope.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use nashplay_core::nash_q::run_nash_q;
use nashplay_core::nash_v::run_nash_v;
use nashplay_core::rng::{RngStream, RNG_ALGORITHM};
use nashplay_core::selftest::{fit_decay_slope, running_mean};
use nashplay_core::trace::{
    code_version, episode_rows_q, episode_rows_v, snapshot_to_bytes, write_trace_jsonl, Snapshot,
    SnapshotHeader, SnapshotHistory, TraceHeader, TRACE_FORMAT,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Algorithm, ResolvedRun};
use crate::evaluate::{evaluate_history, evaluation_stream, EvaluationReport};

/// Per-seed artifacts and endpoint numbers.
#[derive(Clone, Debug, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Trace path relative to the output directory.
    pub trace: String,
    /// Snapshot path relative to the output directory.
    pub snapshot: String,
    /// Learned bounds at the initial state after the last episode.
    pub final_v_up: f64,
    pub final_v_low: f64,
    /// Trailing running-mean optimism gap at the last episode.
    pub final_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
}

/// How the gap-decay slope was fitted.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    /// Least-squares slope of `log(mean gap)` against `log(k)`.
    pub slope: f64,
    /// First episode inside the fit window (the last 90% of episodes).
    pub fit_from_k: u32,
    pub fit_to_k: u32,
    /// Running-mean window applied before fitting.
    pub smoothing_window: u32,
}

/// `summary.json` contents.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub code_version: String,
    pub rng_algorithm: String,
    /// The self-contained effective config.
    pub config: Value,
    pub algorithm: String,
    pub episodes: u32,
    /// Exact equilibrium start value, when the oracle flag is on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_star: Option<f64>,
    /// Across-seed mean of the trailing running-mean gap at the last episode.
    pub final_average_gap: f64,
    pub slope: SlopeFit,
    pub seeds: Vec<SeedReport>,
}

struct SeedOutcome {
    report: SeedReport,
    gaps: Vec<f64>,
}

/// Trains every configured seed into `out` and writes `summary.json`.
pub fn cmd_train(run: &ResolvedRun, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    // Each worker owns one seed end to end; results merge in seed order.
    let outcomes: Vec<SeedOutcome> =
        run.seeds.par_iter().map(|&seed| train_one_seed(run, out, seed)).collect::<Result<_>>()?;

    let k = run.config.episodes as usize;
    let seeds_f = run.seeds.len() as f64;
    let mut mean = vec![0.0f64; k];
    let mut min = vec![f64::INFINITY; k];
    let mut max = vec![f64::NEG_INFINITY; k];
    for outcome in &outcomes {
        for (i, &gap) in outcome.gaps.iter().enumerate() {
            mean[i] += gap / seeds_f;
            min[i] = min[i].min(gap);
            max[i] = max[i].max(gap);
        }
    }

    let window = (k / 100).max(1);
    let smoothed = running_mean(&mean, window);
    let skip = k / 10;
    // A slope needs two points; single-episode runs report null.
    let fitted = if k > skip + 1 { fit_decay_slope(&smoothed, skip) } else { f64::NAN };
    let slope = SlopeFit {
        slope: fitted,
        fit_from_k: skip as u32 + 1,
        fit_to_k: k as u32,
        smoothing_window: window as u32,
    };

    if run.config.gap_csv {
        let mut csv = String::from("k,mean_gap,min_gap,max_gap\n");
        for i in 0..k {
            csv.push_str(&format!("{},{},{},{}\n", i + 1, mean[i], min[i], max[i]));
        }
        fs::write(out.join("gap.csv"), csv).context("writing gap.csv")?;
    }

    let v_star = if run.config.evaluation.oracle {
        outcomes.first().and_then(|o| o.report.evaluation.as_ref()).and_then(|e| e.v_star)
    } else {
        None
    };
    let final_average_gap = outcomes.iter().map(|o| o.report.final_gap).sum::<f64>() / seeds_f;
    let report = RunReport {
        config_hash: run.config_hash.clone(),
        code_version: code_version().to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        config: run.effective.clone(),
        algorithm: run.config.algorithm.tag().to_string(),
        episodes: run.config.episodes,
        v_star,
        final_average_gap,
        slope,
        seeds: outcomes.into_iter().map(|o| o.report).collect(),
    };

    let mut payload = serde_json::to_vec_pretty(&report).expect("report serializes");
    payload.push(b'\n');
    fs::write(out.join("summary.json"), payload).context("writing summary.json")?;
    Ok(report)
}

fn train_one_seed(run: &ResolvedRun, out: &Path, seed: u64) -> Result<SeedOutcome> {
    let game = &run.game;
    let episodes = run.config.episodes;
    let root = RngStream::from_seed(seed);
    // Split 0 drives the learner; split 1 is reserved for evaluation (the
    // `evaluate` command re-derives it, so its numbers match in-run ones).
    let learner_stream = root.split(0);

    let (history, rows) = match run.config.algorithm {
        Algorithm::NashQ => {
            let mut rng = learner_stream;
            let hist = run_nash_q(game, episodes, &run.hyperparams, &Default::default(), &mut rng);
            let rows = episode_rows_q(&hist);
            (SnapshotHistory::NashQ(hist), rows)
        }
        Algorithm::NashV => {
            let hist =
                run_nash_v(game, episodes, &run.hyperparams, &Default::default(), &learner_stream);
            let rows = episode_rows_v(&hist);
            (SnapshotHistory::NashV(hist), rows)
        }
    };

    let gaps: Vec<f64> = rows.iter().map(|row| row.v_up1 - row.v_low1).collect();
    let s1 = game.initial_state();
    let (final_v_up, final_v_low) = match &history {
        SnapshotHistory::NashQ(hist) => (hist.v_up_at(0, s1), hist.v_low_at(0, s1)),
        SnapshotHistory::NashV(hist) => (hist.v_up_at(0, s1), hist.v_low_at(0, s1)),
    };

    let dir_name = format!("seed-{seed}");
    let seed_dir = out.join(&dir_name);
    fs::create_dir_all(&seed_dir).with_context(|| format!("creating {}", seed_dir.display()))?;

    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        seed,
        config_hash: run.config_hash.clone(),
        code_version: code_version().to_string(),
        algorithm: run.config.algorithm.tag().to_string(),
    };
    let trace_path = seed_dir.join("trace.jsonl");
    let file = fs::File::create(&trace_path)
        .with_context(|| format!("creating {}", trace_path.display()))?;
    write_trace_jsonl(BufWriter::new(file), &header, &rows)
        .with_context(|| format!("writing {}", trace_path.display()))?;

    let snapshot = Snapshot {
        header: SnapshotHeader {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed,
            config_hash: run.config_hash.clone(),
            code_version: code_version().to_string(),
        },
        game: game.clone(),
        history,
    };
    let snapshot_path = seed_dir.join("snapshot.bin");
    fs::write(&snapshot_path, snapshot_to_bytes(&snapshot))
        .with_context(|| format!("writing {}", snapshot_path.display()))?;

    let flags = &run.config.evaluation;
    let evaluation =
        if flags.oracle || flags.exact_exploitability || flags.mc_exploitability.is_some() {
            let mut eval_rng = evaluation_stream(seed);
            Some(evaluate_history(game, &snapshot.history, flags, &mut eval_rng))
        } else {
            None
        };

    let window = (episodes as usize / 100).max(1);
    let tail = gaps.len().saturating_sub(window);
    let final_gap = gaps[tail..].iter().sum::<f64>() / (gaps.len() - tail) as f64;

    Ok(SeedOutcome {
        report: SeedReport {
            seed,
            trace: format!("{dir_name}/trace.jsonl"),
            snapshot: format!("{dir_name}/snapshot.bin"),
            final_v_up,
            final_v_low,
            final_gap,
            evaluation,
        },
        gaps,
    })
}
