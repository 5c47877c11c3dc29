//! Snapshot evaluation: equilibrium oracle values and exact or Monte Carlo
//! exploitability of the certified policy pair, plus the `evaluate` and
//! `oracle` commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nashplay_core::certified::{
    certified_policy_q, certified_policy_tree_q, certified_policy_tree_v, certified_policy_v,
    PolicyTree,
};
use nashplay_core::eval::{
    best_response_to_tree, exploitability_exact, exploitability_mc, nash_value_oracle,
};
use nashplay_core::game::{MarkovActor, MarkovGame, Side};
use nashplay_core::rng::RngStream;
use nashplay_core::trace::{code_version, snapshot_from_bytes, Snapshot, SnapshotHistory};
use serde::Serialize;

use crate::config::{EvalFlags, McFlags};

/// Exact exploitability numbers of the certified pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExactBlock {
    /// Best-response gap `up_value − low_value`; zero at an equilibrium.
    pub exploitability: f64,
    /// Value a max-responder forces against the certified min policy.
    pub up_value: f64,
    /// Value the certified max policy guarantees against a min-responder.
    pub low_value: f64,
}

/// Monte Carlo exploitability numbers of the certified pair.
#[derive(Clone, Debug, Serialize)]
pub struct McBlock {
    /// Rollouts per direction.
    pub episodes: u32,
    /// Who responded: `certified-tree` best responses, or the
    /// `markov-oracle` equilibrium pair when the trees were unavailable
    /// (then the estimate is a lower bound).
    pub responders: String,
    pub estimate: f64,
    pub stderr: f64,
    pub up_value: f64,
    pub up_stderr: f64,
    pub low_value: f64,
    pub low_stderr: f64,
}

/// Everything the evaluation flags asked for, ready for JSON.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EvaluationReport {
    /// Exact equilibrium value at the initial state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactBlock>,
    /// Why the certified trees could not be materialized, when they could
    /// not; exact exploitability is then unavailable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McBlock>,
}

fn certified_trees(
    history: &SnapshotHistory,
    max_support: usize,
) -> Result<(PolicyTree, PolicyTree), String> {
    let build = |side| match history {
        SnapshotHistory::NashQ(hist) => certified_policy_tree_q(hist, side, max_support),
        SnapshotHistory::NashV(hist) => certified_policy_tree_v(hist, side, max_support),
    };
    match (build(Side::Max), build(Side::Min)) {
        (Ok(mu), Ok(nu)) => Ok((mu, nu)),
        (Err(e), _) | (_, Err(e)) => {
            Err(format!("{e}; Monte Carlo evaluation still applies (mc_exploitability)"))
        }
    }
}

/// Runs the requested evaluations on a trained history.
///
/// The stream drives only Monte Carlo rollouts, so a fixed stream makes the
/// whole report deterministic.
pub fn evaluate_history(
    game: &MarkovGame,
    history: &SnapshotHistory,
    flags: &EvalFlags,
    rng: &mut RngStream,
) -> EvaluationReport {
    let mut report = EvaluationReport::default();

    let oracle = if flags.oracle || flags.mc_exploitability.is_some() {
        Some(nash_value_oracle(game))
    } else {
        None
    };
    if flags.oracle {
        let solution = oracle.as_ref().expect("computed above");
        report.v_star = Some(solution.table.value(0, game.initial_state()));
    }

    let want_trees = flags.exact_exploitability || flags.mc_exploitability.is_some();
    let trees = if want_trees {
        match certified_trees(history, flags.max_tree_support) {
            Ok(pair) => Some(pair),
            Err(message) => {
                report.tree_error = Some(message);
                None
            }
        }
    } else {
        None
    };

    if flags.exact_exploitability {
        if let Some((tree_mu, tree_nu)) = &trees {
            let exact = exploitability_exact(game, tree_mu, tree_nu);
            report.exact = Some(ExactBlock {
                exploitability: exact.exploitability,
                up_value: exact.up_value,
                low_value: exact.low_value,
            });
        }
    }

    if let Some(McFlags { episodes }) = flags.mc_exploitability {
        let run_mc = |resp_max: &mut dyn nashplay_core::game::EpisodeActor,
                      resp_min: &mut dyn nashplay_core::game::EpisodeActor,
                      rng: &mut RngStream| match history {
            SnapshotHistory::NashQ(hist) => {
                let mut exec_mu = certified_policy_q(hist, Side::Max);
                let mut exec_nu = certified_policy_q(hist, Side::Min);
                exploitability_mc(
                    game,
                    &mut exec_mu,
                    &mut exec_nu,
                    resp_max,
                    resp_min,
                    episodes,
                    rng,
                )
            }
            SnapshotHistory::NashV(hist) => {
                let mut exec_mu = certified_policy_v(hist, Side::Max);
                let mut exec_nu = certified_policy_v(hist, Side::Min);
                exploitability_mc(
                    game,
                    &mut exec_mu,
                    &mut exec_nu,
                    resp_max,
                    resp_min,
                    episodes,
                    rng,
                )
            }
        };
        let (responders, estimate) = match &trees {
            Some((tree_mu, tree_nu)) => {
                let response_up = best_response_to_tree(game, tree_nu);
                let response_low = best_response_to_tree(game, tree_mu);
                let mut resp_max = response_up.actor();
                let mut resp_min = response_low.actor();
                ("certified-tree", run_mc(&mut resp_max, &mut resp_min, rng))
            }
            None => {
                let solution = oracle.as_ref().expect("computed above");
                let mut resp_max = MarkovActor::new(&solution.mu);
                let mut resp_min = MarkovActor::new(&solution.nu);
                ("markov-oracle", run_mc(&mut resp_max, &mut resp_min, rng))
            }
        };
        report.mc = Some(McBlock {
            episodes,
            responders: responders.to_string(),
            estimate: estimate.estimate,
            stderr: estimate.stderr,
            up_value: estimate.up_value,
            up_stderr: estimate.up_stderr,
            low_value: estimate.low_value,
            low_stderr: estimate.low_stderr,
        });
    }

    report
}

/// `evaluation.json` contents for one snapshot.
#[derive(Clone, Debug, Serialize)]
pub struct SnapshotEvaluation {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub algorithm: String,
    pub evaluation: EvaluationReport,
}

/// Loads a snapshot, evaluates it, and writes `evaluation.json` next to it
/// (or under `out`). The Monte Carlo stream re-derives from the training
/// seed, so repeated invocations produce identical bytes; if a `trace.jsonl`
/// sits beside the snapshot, the report is appended to it once.
pub fn cmd_evaluate(
    snapshot_path: &Path,
    flags: &EvalFlags,
    out: Option<&Path>,
) -> Result<SnapshotEvaluation> {
    let bytes = fs::read(snapshot_path)
        .with_context(|| format!("reading snapshot {}", snapshot_path.display()))?;
    let snapshot: Snapshot = snapshot_from_bytes(&bytes)
        .with_context(|| format!("decoding snapshot {}", snapshot_path.display()))?;
    let report = evaluate_snapshot(&snapshot, flags);

    let snapshot_dir = snapshot_path.parent().unwrap_or_else(|| Path::new("."));
    let out_dir = out.unwrap_or(snapshot_dir);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut payload = serde_json::to_vec_pretty(&report).expect("report serializes");
    payload.push(b'\n');
    fs::write(out_dir.join("evaluation.json"), payload).context("writing evaluation.json")?;

    let trace_path = snapshot_dir.join("trace.jsonl");
    if trace_path.exists() {
        append_line_once(&trace_path, &evaluation_trace_line(&report))?;
    }
    Ok(report)
}

/// Evaluates an in-memory snapshot with the Monte Carlo stream derived from
/// its training seed — the same derivation `train` uses, so a later
/// `evaluate` of the written snapshot reproduces the in-run numbers.
pub fn evaluate_snapshot(snapshot: &Snapshot, flags: &EvalFlags) -> SnapshotEvaluation {
    let mut rng = evaluation_stream(snapshot.header.seed);
    let evaluation = evaluate_history(&snapshot.game, &snapshot.history, flags, &mut rng);
    SnapshotEvaluation {
        config_hash: snapshot.header.config_hash.clone(),
        code_version: code_version().to_string(),
        seed: snapshot.header.seed,
        algorithm: snapshot.history.algorithm().to_string(),
        evaluation,
    }
}

/// The evaluation stream for a training seed (training itself uses split 0).
pub fn evaluation_stream(seed: u64) -> RngStream {
    RngStream::from_seed(seed).split(1)
}

/// The single-line form appended to a run's trace.
pub fn evaluation_trace_line(report: &SnapshotEvaluation) -> String {
    serde_json::to_string(&serde_json::json!({ "evaluation": report })).expect("report serializes")
}

/// Appends `line` to the file unless an identical line is already present,
/// which keeps re-evaluation idempotent.
fn append_line_once(path: &Path, line: &str) -> Result<()> {
    let existing =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if existing.lines().any(|l| l == line) {
        return Ok(());
    }
    let mut updated = existing;
    if !updated.is_empty() && !updated.ends_with('\n') {
        updated.push('\n');
    }
    updated.push_str(line);
    updated.push('\n');
    fs::write(path, updated).with_context(|| format!("writing {}", path.display()))
}

/// `oracle.json` contents: the exact equilibrium value of a game.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    /// Hash of the game document itself.
    pub game_hash: String,
    pub code_version: String,
    /// Equilibrium value at the initial state.
    pub v_star: f64,
    /// Equilibrium value per `[h][s]`.
    pub values: Vec<Vec<f64>>,
}

/// Solves a game exactly and optionally writes `oracle.json` under `out`.
pub fn cmd_oracle(game: &MarkovGame, out: Option<&Path>) -> Result<OracleReport> {
    let solution = nash_value_oracle(game);
    let values: Vec<Vec<f64>> = (0..game.horizon())
        .map(|h| (0..game.states()).map(|s| solution.table.value(h, s)).collect())
        .collect();
    let report = OracleReport {
        game_hash: nashplay_core::trace::sha256_hex(game.to_json().as_bytes()),
        code_version: code_version().to_string(),
        v_star: solution.table.value(0, game.initial_state()),
        values,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut payload = serde_json::to_vec_pretty(&report).expect("report serializes");
        payload.push(b'\n');
        fs::write(dir.join("oracle.json"), payload).context("writing oracle.json")?;
    }
    Ok(report)
}

/// Resolves the game a standalone command operates on: an explicit game
/// file when given, otherwise the game of a full run config.
pub fn load_game(
    game_path: Option<&PathBuf>,
    config_path: Option<&PathBuf>,
    overrides: &[String],
) -> Result<MarkovGame> {
    match (game_path, config_path) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading game file {}", path.display()))?;
            MarkovGame::from_json(&text)
                .with_context(|| format!("game file {} is invalid", path.display()))
        }
        (None, Some(path)) => {
            let config = crate::config::load_config(path, overrides)?;
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            Ok(crate::config::resolve(config, dir)?.game)
        }
        _ => anyhow::bail!("pass exactly one of --game or --config"),
    }
}
