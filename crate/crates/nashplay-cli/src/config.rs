//! Run configuration: a single JSON document, overridable field by field
//! with `--set dotted.key=value`, resolved into a concrete game, an explicit
//! seed list, and a content hash that identifies the run.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nashplay_core::game::{make_parity_game, make_random_game, MarkovGame};
use nashplay_core::rng::RngStream;
use nashplay_core::schedules::{Hyperparams, IotaTotal, DEFAULT_C, DEFAULT_P};
use nashplay_core::trace::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Which game a run trains on.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSpec {
    /// A complete game document, as produced by `MarkovGame::to_json`.
    Inline(Value),
    /// Path to a game document, relative to the config file.
    File(String),
    /// A named generator with its parameters.
    Generator(GeneratorSpec),
}

/// Built-in game generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Dirichlet transition rows and uniform rewards; `seed` fixes the draw.
    Random { horizon: usize, states: usize, max_actions: usize, min_actions: usize, seed: u64 },
    /// The parity hard instance over `n` bits (horizon `n + 1`).
    Parity { n: usize },
}

/// The learning algorithm a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NashQ,
    NashV,
}

impl Algorithm {
    /// The tag written into traces and snapshots.
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::NashQ => "nash_q",
            Algorithm::NashV => "nash_v",
        }
    }
}

/// Scalar learner settings; `iota` defaults to `ln(S·A·B·T/p)` derived from
/// the configured game and episode budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnerParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Explicit log factor; omit to derive it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    /// Which step total enters the derived log factor.
    #[serde(default = "default_iota_total")]
    pub iota_total: IotaTotal,
}

fn default_c() -> f64 {
    DEFAULT_C
}

fn default_p() -> f64 {
    DEFAULT_P
}

fn default_iota_total() -> IotaTotal {
    IotaTotal::EpisodesTimesHorizon
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            c: default_c(),
            p: default_p(),
            iota: None,
            iota_total: default_iota_total(),
        }
    }
}

/// How the per-run seeds are chosen.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    /// Explicit seeds, one run each.
    List(Vec<u64>),
    /// `count` seeds derived from `base` by stream splitting.
    Derived { base: u64, count: u32 },
}

/// Monte Carlo exploitability settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McFlags {
    /// Rollouts per best-response direction.
    pub episodes: u32,
}

/// Which evaluations run on each trained history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalFlags {
    /// Solve the game exactly and record the equilibrium start value.
    #[serde(default)]
    pub oracle: bool,
    /// Exact exploitability of the certified pair via belief-tree responses.
    #[serde(default)]
    pub exact_exploitability: bool,
    /// Monte Carlo exploitability estimate of the certified pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_exploitability: Option<McFlags>,
    /// Belief-class budget when materializing certified policy trees.
    #[serde(default = "default_tree_support")]
    pub max_tree_support: usize,
}

fn default_tree_support() -> usize {
    200_000
}

impl Default for EvalFlags {
    fn default() -> Self {
        EvalFlags {
            oracle: false,
            exact_exploitability: false,
            mc_exploitability: None,
            max_tree_support: default_tree_support(),
        }
    }
}

/// A complete training-run recipe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub game: GameSpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub hyperparams: LearnerParams,
    /// Episodes per seed (`K`).
    pub episodes: u32,
    pub seeds: SeedSpec,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub evaluation: EvalFlags,
    /// Also emit `gap.csv` with per-episode across-seed gap statistics.
    #[serde(default)]
    pub gap_csv: bool,
}

/// Reads a config document, applies `--set` overrides, and deserializes it.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut doc: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    for pair in overrides {
        apply_override(&mut doc, pair)?;
    }
    serde_json::from_value(doc).context("config does not match the run schema")
}

/// Applies one `dotted.key=value` override to a JSON document. The value is
/// parsed as JSON when possible and falls back to a bare string, so
/// `--set hyperparams.c=1.5` and `--set algorithm=nash_v` both work.
pub fn apply_override(doc: &mut Value, pair: &str) -> Result<()> {
    let (path, raw) =
        pair.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got {pair:?}"))?;
    if path.is_empty() {
        bail!("--set key is empty in {pair:?}");
    }
    let leaf: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = &mut *doc;
    for (i, seg) in segments.iter().enumerate() {
        let here = segments[..i].join(".");
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| anyhow!("config path {here:?} is not an object"))?;
        if i + 1 == segments.len() {
            obj.insert(seg.to_string(), leaf);
            return Ok(());
        }
        cursor = obj.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("the loop returns on the last segment");
}

/// Expands the seed specification into the explicit per-run seed list.
pub fn expand_seeds(spec: &SeedSpec) -> Vec<u64> {
    match spec {
        SeedSpec::List(list) => list.clone(),
        SeedSpec::Derived { base, count } => {
            let root = RngStream::from_seed(*base);
            (0..*count)
                .map(|i| {
                    let mut child = root.split(u64::from(i));
                    child.next_u64()
                })
                .collect()
        }
    }
}

/// A config resolved into a concrete game, explicit seeds, and its hash.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub game: MarkovGame,
    pub seeds: Vec<u64>,
    pub hyperparams: Hyperparams,
    /// Hash of `effective`, carried by every output file.
    pub config_hash: String,
    /// The self-contained config embedded in outputs: the game inlined, the
    /// seeds expanded, the log factor made explicit, and the output
    /// directory dropped (it never affects results).
    pub effective: Value,
}

/// Validates a config and resolves its game and seeds. `config_dir` anchors
/// relative game-file paths.
pub fn resolve(config: RunConfig, config_dir: &Path) -> Result<ResolvedRun> {
    if config.episodes < 1 {
        bail!("episodes must be at least 1");
    }
    let params = &config.hyperparams;
    if !(params.c >= 0.0 && params.c.is_finite()) {
        bail!("hyperparams.c must be a nonnegative number");
    }
    if !(params.p > 0.0 && params.p <= 1.0) {
        bail!("hyperparams.p must lie in (0, 1]");
    }
    if let Some(iota) = params.iota {
        if !(iota > 0.0 && iota.is_finite()) {
            bail!("hyperparams.iota must be a positive number");
        }
    }

    let game = match &config.game {
        GameSpec::Inline(doc) => {
            MarkovGame::from_json(&doc.to_string()).context("inline game document is invalid")?
        }
        GameSpec::File(rel) => {
            let path = config_dir.join(rel);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading game file {}", path.display()))?;
            MarkovGame::from_json(&text)
                .with_context(|| format!("game file {} is invalid", path.display()))?
        }
        GameSpec::Generator(gen) => build_generator(gen)?,
    };

    let seeds = expand_seeds(&config.seeds);
    if seeds.is_empty() {
        bail!("the seed specification expands to no seeds");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        bail!("duplicate seeds: each seed owns one output directory");
    }

    let hyperparams = match params.iota {
        Some(iota) => Hyperparams::with_iota(game.horizon(), params.c, params.p, iota),
        None => Hyperparams::for_game(
            game.horizon(),
            game.states(),
            game.max_actions(),
            game.min_actions(),
            config.episodes,
            params.c,
            params.p,
            params.iota_total,
        ),
    };

    let mut effective = serde_json::to_value(&config).expect("config serializes");
    let game_doc: Value = serde_json::from_str(&game.to_json()).expect("game documents parse");
    effective["game"] = serde_json::json!({ "inline": game_doc });
    effective["seeds"] = serde_json::json!(seeds);
    effective["hyperparams"]["iota"] = serde_json::json!(hyperparams.iota);
    effective.as_object_mut().expect("configs are objects").remove("out_dir");
    let config_hash =
        sha256_hex(serde_json::to_string(&effective).expect("value serializes").as_bytes());

    Ok(ResolvedRun { config, game, seeds, hyperparams, config_hash, effective })
}

fn build_generator(gen: &GeneratorSpec) -> Result<MarkovGame> {
    match *gen {
        GeneratorSpec::Random { horizon, states, max_actions, min_actions, seed } => {
            if horizon < 1 || states < 1 || max_actions < 1 || min_actions < 1 {
                bail!("random-game dimensions must all be at least 1");
            }
            let mut rng = RngStream::from_seed(seed);
            Ok(make_random_game(horizon, states, max_actions, min_actions, &mut rng))
        }
        GeneratorSpec::Parity { n } => {
            if n < 1 {
                bail!("the parity instance needs at least one bit");
            }
            Ok(make_parity_game(n))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_doc() -> Value {
        serde_json::json!({
            "game": {"generator": {"name": "random", "horizon": 2, "states": 2,
                                    "max_actions": 2, "min_actions": 2, "seed": 7}},
            "algorithm": "nash_q",
            "episodes": 50,
            "seeds": {"base": 1, "count": 3},
        })
    }

    #[test]
    fn overrides_replace_nested_fields() {
        let mut doc = base_doc();
        apply_override(&mut doc, "hyperparams.c=1.5").unwrap();
        apply_override(&mut doc, "algorithm=nash_v").unwrap();
        apply_override(&mut doc, "episodes=75").unwrap();
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert_eq!(config.hyperparams.c, 1.5);
        assert_eq!(config.algorithm, Algorithm::NashV);
        assert_eq!(config.episodes, 75);
    }

    #[test]
    fn override_without_equals_is_rejected() {
        let mut doc = base_doc();
        assert!(apply_override(&mut doc, "episodes").is_err());
    }

    #[test]
    fn derived_seeds_are_deterministic_and_distinct() {
        let spec = SeedSpec::Derived { base: 11, count: 8 };
        let a = expand_seeds(&spec);
        let b = expand_seeds(&spec);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
        let other = expand_seeds(&SeedSpec::Derived { base: 12, count: 8 });
        assert_ne!(a, other);
    }

    #[test]
    fn resolve_inlines_the_game_and_hash_ignores_out_dir() {
        let config: RunConfig = serde_json::from_value(base_doc()).unwrap();
        let resolved = resolve(config, Path::new(".")).unwrap();
        assert!(resolved.effective["game"]["inline"].is_object());
        assert_eq!(resolved.seeds.len(), 3);

        let mut with_out = base_doc();
        with_out["out_dir"] = serde_json::json!("somewhere/else");
        let config2: RunConfig = serde_json::from_value(with_out).unwrap();
        let resolved2 = resolve(config2, Path::new(".")).unwrap();
        assert_eq!(resolved.config_hash, resolved2.config_hash);
    }

    #[test]
    fn resolve_rejects_bad_inputs() {
        let mut doc = base_doc();
        doc["episodes"] = serde_json::json!(0);
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert!(resolve(config, Path::new(".")).is_err());

        let mut doc = base_doc();
        doc["seeds"] = serde_json::json!([3, 3]);
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert!(resolve(config, Path::new(".")).is_err());

        let mut doc = base_doc();
        doc["hyperparams"] = serde_json::json!({"p": 0.0});
        let config: RunConfig = serde_json::from_value(doc).unwrap();
        assert!(resolve(config, Path::new(".")).is_err());
    }

    #[test]
    fn effective_config_round_trips_as_a_config() {
        let config: RunConfig = serde_json::from_value(base_doc()).unwrap();
        let resolved = resolve(config, Path::new(".")).unwrap();
        let reparsed: RunConfig = serde_json::from_value(resolved.effective.clone()).unwrap();
        let re_resolved = resolve(reparsed, Path::new(".")).unwrap();
        assert_eq!(resolved.config_hash, re_resolved.config_hash);
        assert_eq!(resolved.seeds, re_resolved.seeds);
    }
}
