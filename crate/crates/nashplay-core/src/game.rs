//! Tabular two-player zero-sum Markov games with a fixed horizon.
//!
//! A game runs for `H` steps. At step `h` in state `s` the max-player picks
//! `a`, the min-player simultaneously picks `b`, the max-player receives
//! `r_h(s,a,b) ∈ [0,1]` (the min-player pays it), and the state advances by
//! `P_h(·|s,a,b)`. Episodes always start from a fixed initial state.
//!
//! Besides the tensors themselves, this module hosts episode simulation over
//! pluggable actors, Markov policy containers, a Dirichlet random-game
//! generator, and the parity hard instance whose unique equilibrium value is
//! zero but where exploiting a noisy parity opponent requires identifying a
//! hidden index subset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Which player a policy or actor controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// The maximizing player (action set `A`).
    Max,
    /// The minimizing player (action set `B`).
    Min,
}

impl Side {
    /// The other player.
    pub fn opponent(self) -> Side {
        match self {
            Side::Max => Side::Min,
            Side::Min => Side::Max,
        }
    }
}

/// Structural errors raised by game and policy constructors.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("tensor length mismatch: expected {expected} entries for {what}, got {got}")]
    TensorShape { what: &'static str, expected: usize, got: usize },
    #[error("game failed validation: {0:?}")]
    Invalid(Vec<GameDefect>),
    #[error("subset index {index} outside 1..={limit}")]
    SubsetOutOfRange { index: usize, limit: usize },
    #[error("noise rate {0} outside [0, 0.5)")]
    NoiseOutOfRange(f64),
    #[error("malformed game document: {0}")]
    Document(String),
}

/// A single numeric defect found by [`validate_game`].
#[derive(Clone, Debug, PartialEq)]
pub enum GameDefect {
    /// A transition row does not sum to one within 1e-12.
    TransitionRowSum { h: usize, s: usize, a: usize, b: usize, sum: f64 },
    /// A transition entry is negative or not finite.
    TransitionEntry { h: usize, s: usize, a: usize, b: usize, next: usize, value: f64 },
    /// A reward lies outside `[0, 1]` or is not finite.
    RewardOutOfRange { h: usize, s: usize, a: usize, b: usize, value: f64 },
    /// The initial state is out of range.
    InitialStateOutOfRange { initial: usize, states: usize },
}

/// A tabular zero-sum Markov game.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovGame {
    horizon: usize,
    states: usize,
    max_actions: usize,
    min_actions: usize,
    initial_state: usize,
    /// `P[((h·S+s)·A+a)·B+b]·S + s'`, row-major.
    transitions: Vec<f64>,
    /// `r[((h·S+s)·A+a)·B+b]`, row-major.
    rewards: Vec<f64>,
}

impl MarkovGame {
    /// Builds a game from flat row-major tensors, checking shapes only; run
    /// [`validate_game`] for numeric diagnostics.
    pub fn new(
        horizon: usize,
        states: usize,
        max_actions: usize,
        min_actions: usize,
        initial_state: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self, GameError> {
        assert!(horizon >= 1 && states >= 1 && max_actions >= 1 && min_actions >= 1);
        let cells = horizon * states * max_actions * min_actions;
        if transitions.len() != cells * states {
            return Err(GameError::TensorShape {
                what: "transitions",
                expected: cells * states,
                got: transitions.len(),
            });
        }
        if rewards.len() != cells {
            return Err(GameError::TensorShape {
                what: "rewards",
                expected: cells,
                got: rewards.len(),
            });
        }
        Ok(Self { horizon, states, max_actions, min_actions, initial_state, transitions, rewards })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn max_actions(&self) -> usize {
        self.max_actions
    }

    pub fn min_actions(&self) -> usize {
        self.min_actions
    }

    /// Action count for one side.
    pub fn actions(&self, side: Side) -> usize {
        match side {
            Side::Max => self.max_actions,
            Side::Min => self.min_actions,
        }
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize, b: usize) -> usize {
        debug_assert!(
            h < self.horizon && s < self.states && a < self.max_actions && b < self.min_actions
        );
        ((h * self.states + s) * self.max_actions + a) * self.min_actions + b
    }

    /// Reward paid to the max-player at step `h` (0-based) in state `s`.
    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.rewards[self.cell(h, s, a, b)]
    }

    /// Next-state distribution as a slice of length `states`.
    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize, b: usize) -> &[f64] {
        let base = self.cell(h, s, a, b) * self.states;
        &self.transitions[base..base + self.states]
    }

    /// Serializes to the interchange document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GameDoc::from(self)).expect("game serialization cannot fail")
    }

    /// Parses the interchange document, rejecting games with defects.
    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let doc: GameDoc =
            serde_json::from_str(text).map_err(|e| GameError::Document(e.to_string()))?;
        let game =
            MarkovGame::new(doc.h, doc.s, doc.a, doc.b, doc.s1, doc.transitions, doc.rewards)?;
        let defects = validate_game(&game);
        if defects.is_empty() {
            Ok(game)
        } else {
            Err(GameError::Invalid(defects))
        }
    }
}

/// On-disk game document: dimensions plus flat row-major tensors.
#[derive(Serialize, Deserialize)]
struct GameDoc {
    h: usize,
    s: usize,
    a: usize,
    b: usize,
    s1: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl From<&MarkovGame> for GameDoc {
    fn from(g: &MarkovGame) -> Self {
        GameDoc {
            h: g.horizon,
            s: g.states,
            a: g.max_actions,
            b: g.min_actions,
            s1: g.initial_state,
            transitions: g.transitions.clone(),
            rewards: g.rewards.clone(),
        }
    }
}

/// Scans every tensor entry and reports defects; an empty list means the game
/// is well-formed.
pub fn validate_game(game: &MarkovGame) -> Vec<GameDefect> {
    let mut defects = Vec::new();
    if game.initial_state >= game.states {
        defects.push(GameDefect::InitialStateOutOfRange {
            initial: game.initial_state,
            states: game.states,
        });
    }
    for h in 0..game.horizon {
        for s in 0..game.states {
            for a in 0..game.max_actions {
                for b in 0..game.min_actions {
                    let r = game.reward(h, s, a, b);
                    if !r.is_finite() || !(0.0..=1.0).contains(&r) {
                        defects.push(GameDefect::RewardOutOfRange { h, s, a, b, value: r });
                    }
                    let row = game.transition_row(h, s, a, b);
                    let mut sum = 0.0;
                    for (next, &p) in row.iter().enumerate() {
                        if !p.is_finite() || p < 0.0 {
                            defects.push(GameDefect::TransitionEntry {
                                h,
                                s,
                                a,
                                b,
                                next,
                                value: p,
                            });
                        }
                        sum += p;
                    }
                    if !(sum - 1.0).abs().is_finite() || (sum - 1.0).abs() > 1e-12 {
                        defects.push(GameDefect::TransitionRowSum { h, s, a, b, sum });
                    }
                }
            }
        }
    }
    defects
}

/// A per-step, per-state mixed policy for one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub side: Side,
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    /// `rows[(h·S+s)·N ..][..N]`, each row a distribution over actions.
    pub rows: Vec<f64>,
}

impl MarkovPolicy {
    /// The uniform policy.
    pub fn uniform(side: Side, horizon: usize, states: usize, actions: usize) -> Self {
        Self {
            side,
            horizon,
            states,
            actions,
            rows: vec![1.0 / actions as f64; horizon * states * actions],
        }
    }

    /// A deterministic policy from an action table indexed by `(h, s)`.
    pub fn deterministic(
        side: Side,
        horizon: usize,
        states: usize,
        actions: usize,
        choice: impl Fn(usize, usize) -> usize,
    ) -> Self {
        let mut rows = vec![0.0; horizon * states * actions];
        for h in 0..horizon {
            for s in 0..states {
                let act = choice(h, s);
                assert!(act < actions, "action {act} out of range at (h={h}, s={s})");
                rows[(h * states + s) * actions + act] = 1.0;
            }
        }
        Self { side, horizon, states, actions, rows }
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let base = (h * self.states + s) * self.actions;
        &self.rows[base..base + self.actions]
    }

    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let base = (h * self.states + s) * self.actions;
        &mut self.rows[base..base + self.actions]
    }

    /// Checks that every row is a distribution within `tol`.
    pub fn is_stochastic(&self, tol: f64) -> bool {
        (0..self.horizon * self.states).all(|i| {
            let row = &self.rows[i * self.actions..(i + 1) * self.actions];
            row.iter().all(|&p| p >= -tol && p.is_finite())
                && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// A per-step, per-state *joint* distribution over action pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovJointPolicy {
    pub horizon: usize,
    pub states: usize,
    pub max_actions: usize,
    pub min_actions: usize,
    /// `rows[(h·S+s)·A·B ..]`, each row a distribution over `(a, b)` pairs
    /// flattened as `a·B + b`.
    pub rows: Vec<f64>,
}

impl MarkovJointPolicy {
    /// The uniform joint policy (`1/(A·B)` everywhere).
    pub fn uniform(horizon: usize, states: usize, max_actions: usize, min_actions: usize) -> Self {
        let cell = max_actions * min_actions;
        Self {
            horizon,
            states,
            max_actions,
            min_actions,
            rows: vec![1.0 / cell as f64; horizon * states * cell],
        }
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let cell = self.max_actions * self.min_actions;
        let base = (h * self.states + s) * cell;
        &self.rows[base..base + cell]
    }

    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let cell = self.max_actions * self.min_actions;
        let base = (h * self.states + s) * cell;
        &mut self.rows[base..base + cell]
    }

    /// Per-player marginals of one joint row.
    pub fn marginals(row: &[f64], max_actions: usize, min_actions: usize) -> (Vec<f64>, Vec<f64>) {
        let mut mu = vec![0.0; max_actions];
        let mut nu = vec![0.0; min_actions];
        for a in 0..max_actions {
            for b in 0..min_actions {
                let w = row[a * min_actions + b];
                mu[a] += w;
                nu[b] += w;
            }
        }
        (mu, nu)
    }
}

/// One realized step of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: usize,
    pub max_action: usize,
    pub min_action: usize,
    pub reward: f64,
}

/// A realized episode: exactly `horizon` steps plus the terminal state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepOutcome>,
    pub final_state: usize,
}

impl Trajectory {
    /// Total reward collected by the max-player.
    pub fn return_value(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// A stateful per-episode decision maker for one side.
///
/// `reset` is called once per episode before the first step; `act` picks the
/// player's action; `observe` delivers the full step outcome afterwards (with
/// a generator, since some actors randomize their internal state on
/// observations).
pub trait EpisodeActor {
    fn reset(&mut self, rng: &mut RngStream);
    fn act(&mut self, h: usize, s: usize, rng: &mut RngStream) -> usize;
    #[allow(unused_variables, clippy::too_many_arguments)]
    fn observe(
        &mut self,
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        reward: f64,
        s_next: usize,
        rng: &mut RngStream,
    ) {
    }
}

/// Adapts a [`MarkovPolicy`] into an [`EpisodeActor`].
pub struct MarkovActor<'a> {
    policy: &'a MarkovPolicy,
}

impl<'a> MarkovActor<'a> {
    pub fn new(policy: &'a MarkovPolicy) -> Self {
        Self { policy }
    }
}

impl EpisodeActor for MarkovActor<'_> {
    fn reset(&mut self, _rng: &mut RngStream) {}

    fn act(&mut self, h: usize, s: usize, rng: &mut RngStream) -> usize {
        rng.categorical(self.policy.row(h, s))
    }
}

#[inline]
fn sample_next(
    game: &MarkovGame,
    h: usize,
    s: usize,
    a: usize,
    b: usize,
    rng: &mut RngStream,
) -> usize {
    rng.categorical(game.transition_row(h, s, a, b))
}

/// Plays one episode with independent actors for the two sides.
///
/// Per step the draw order is fixed: max action, min action, then the state
/// transition, all from the same stream; both actors then observe the step.
pub fn sample_episode_actors(
    game: &MarkovGame,
    max_actor: &mut dyn EpisodeActor,
    min_actor: &mut dyn EpisodeActor,
    rng: &mut RngStream,
) -> Trajectory {
    max_actor.reset(rng);
    min_actor.reset(rng);
    let mut s = game.initial_state();
    let mut steps = Vec::with_capacity(game.horizon());
    for h in 0..game.horizon() {
        let a = max_actor.act(h, s, rng);
        let b = min_actor.act(h, s, rng);
        assert!(
            a < game.max_actions() && b < game.min_actions(),
            "actor returned an out-of-range action"
        );
        let reward = game.reward(h, s, a, b);
        let s_next = sample_next(game, h, s, a, b, rng);
        max_actor.observe(h, s, a, b, reward, s_next, rng);
        min_actor.observe(h, s, a, b, reward, s_next, rng);
        steps.push(StepOutcome { state: s, max_action: a, min_action: b, reward });
        s = s_next;
    }
    Trajectory { steps, final_state: s }
}

/// Plays one episode with a pair of Markov policies.
pub fn sample_episode_pair(
    game: &MarkovGame,
    mu: &MarkovPolicy,
    nu: &MarkovPolicy,
    rng: &mut RngStream,
) -> Trajectory {
    assert_eq!(mu.side, Side::Max);
    assert_eq!(nu.side, Side::Min);
    let mut max_actor = MarkovActor::new(mu);
    let mut min_actor = MarkovActor::new(nu);
    sample_episode_actors(game, &mut max_actor, &mut min_actor, rng)
}

/// Plays one episode with a correlated joint policy: the `(a, b)` pair is
/// drawn jointly from each visited row.
pub fn sample_episode_joint(
    game: &MarkovGame,
    joint: &MarkovJointPolicy,
    rng: &mut RngStream,
) -> Trajectory {
    assert_eq!(joint.max_actions, game.max_actions());
    assert_eq!(joint.min_actions, game.min_actions());
    let mut s = game.initial_state();
    let mut steps = Vec::with_capacity(game.horizon());
    for h in 0..game.horizon() {
        let pair = rng.categorical(joint.row(h, s));
        let (a, b) = (pair / joint.min_actions, pair % joint.min_actions);
        let reward = game.reward(h, s, a, b);
        let s_next = sample_next(game, h, s, a, b, rng);
        steps.push(StepOutcome { state: s, max_action: a, min_action: b, reward });
        s = s_next;
    }
    Trajectory { steps, final_state: s }
}

/// Draws a random game: transition rows from a flat Dirichlet, rewards
/// uniform on `[0, 1)`, initial state 0.
pub fn make_random_game(
    horizon: usize,
    states: usize,
    max_actions: usize,
    min_actions: usize,
    rng: &mut RngStream,
) -> MarkovGame {
    let cells = horizon * states * max_actions * min_actions;
    let mut transitions = Vec::with_capacity(cells * states);
    let mut rewards = Vec::with_capacity(cells);
    for _ in 0..cells {
        let mut row: Vec<f64> = (0..states).map(|_| rng.exp1()).collect();
        let total: f64 = row.iter().sum();
        for p in &mut row {
            *p /= total;
        }
        transitions.extend_from_slice(&row);
        rewards.push(rng.next_f64());
    }
    MarkovGame::new(horizon, states, max_actions, min_actions, 0, transitions, rewards)
        .expect("generated tensors have the right shape")
}

// ---------------------------------------------------------------------------
// Parity hard instance
// ---------------------------------------------------------------------------

/// State count of the parity game with horizon `H`: `{i_0, i_1}` for
/// `i = 2..H` plus the start `1_0` and the terminal sink.
pub fn parity_states(horizon: usize) -> usize {
    2 * horizon
}

/// State id of layer `i ∈ 1..=H` with bit `β` (`1_1` does not exist).
pub fn parity_state_id(i: usize, bit: usize) -> usize {
    assert!(bit <= 1);
    if i == 1 {
        assert_eq!(bit, 0, "layer 1 only has bit 0");
        0
    } else {
        2 * i - 3 + bit
    }
}

/// Decodes a non-terminal parity state id into `(layer, bit)`.
pub fn parity_decode(id: usize) -> (usize, usize) {
    if id == 0 {
        (1, 0)
    } else if id % 2 == 1 {
        ((id + 3) / 2, 0)
    } else {
        ((id + 2) / 2, 1)
    }
}

/// Builds the parity hard instance for subset size `n ≥ 1` (horizon `n + 1`).
///
/// Dynamics are deterministic and layer-advancing. From a bit-0 state only
/// `(a_1, b_1)` moves to the next layer's bit-1 state; from a bit-1 state only
/// `(a_0, b_1)` moves to bit 0. All rewards are zero except at the last step,
/// where the bit-0 state pays 1 on `b_0` and the bit-1 state pays 1 on `b_1`,
/// regardless of the max-player's action. The terminal sink self-loops with
/// zero reward.
pub fn make_parity_game(n: usize) -> MarkovGame {
    assert!(n >= 1, "parity instance needs at least one subset step");
    let horizon = n + 1;
    let states = parity_states(horizon);
    let terminal = states - 1;
    let cells = horizon * states * 4;
    let mut transitions = vec![0.0; cells * states];
    let mut rewards = vec![0.0; cells];
    for h in 0..horizon {
        for s in 0..states {
            for a in 0..2 {
                for b in 0..2 {
                    let cell = ((h * states + s) * 2 + a) * 2 + b;
                    let next = if s == terminal {
                        terminal
                    } else {
                        let (i, bit) = parity_decode(s);
                        if i >= horizon {
                            terminal
                        } else {
                            let next_bit = if bit == 0 {
                                usize::from(a == 1 && b == 1)
                            } else {
                                usize::from(!(a == 0 && b == 1))
                            };
                            parity_state_id(i + 1, next_bit)
                        }
                    };
                    transitions[cell * states + next] = 1.0;
                    if h == horizon - 1 && s != terminal {
                        let (i, bit) = parity_decode(s);
                        if i == horizon && b == bit {
                            rewards[cell] = 1.0;
                        }
                    }
                }
            }
        }
    }
    MarkovGame::new(horizon, states, 2, 2, 0, transitions, rewards)
        .expect("parity tensors have the right shape")
}

/// The scripted min-player for the parity instance.
///
/// Each episode it draws a fresh secret `x ∈ {0,1}ⁿ`, computes the parity of
/// `x` over the hidden subset, and flips it with the noise rate. During steps
/// `1..n` it reveals `x` bit by bit (`b_0` on a zero bit); at the last step it
/// plays the (possibly flipped) parity.
#[derive(Clone, Debug)]
pub struct ParityOpponent {
    include: Vec<bool>,
    noise: f64,
    x: Vec<bool>,
    target: bool,
}

/// Builds the parity opponent for subset `t ⊆ {1..n}` (1-based step indices)
/// and noise rate `noise ∈ [0, 0.5)`.
pub fn make_parity_opponent(
    n: usize,
    subset: &[usize],
    noise: f64,
) -> Result<ParityOpponent, GameError> {
    assert!(n >= 1);
    if !(0.0..0.5).contains(&noise) {
        return Err(GameError::NoiseOutOfRange(noise));
    }
    let mut include = vec![false; n];
    for &idx in subset {
        if idx == 0 || idx > n {
            return Err(GameError::SubsetOutOfRange { index: idx, limit: n });
        }
        include[idx - 1] = true;
    }
    Ok(ParityOpponent { include, noise, x: vec![false; n], target: false })
}

impl EpisodeActor for ParityOpponent {
    fn reset(&mut self, rng: &mut RngStream) {
        let mut parity = false;
        for (i, xi) in self.x.iter_mut().enumerate() {
            *xi = rng.bernoulli(0.5);
            if self.include[i] && *xi {
                parity = !parity;
            }
        }
        self.target = parity ^ rng.bernoulli(self.noise);
    }

    fn act(&mut self, h: usize, _s: usize, _rng: &mut RngStream) -> usize {
        if h < self.x.len() {
            usize::from(self.x[h])
        } else {
            usize::from(self.target)
        }
    }
}

/// The max-player policy that tracks the parity of the revealed bits over a
/// known subset.
///
/// The instance's dynamics swap the roles of the max-player's actions on
/// bit-1 states, so "include this step's bit in the running parity" means
/// `a_1` from a bit-0 state but `a_0` from a bit-1 state (and vice versa to
/// exclude it). Against the scripted opponent with subset `t` this policy
/// finishes in the state whose bit equals the true parity, earning 1 whenever
/// the opponent's final action was not flipped by noise.
pub fn parity_max_policy(n: usize, subset: &[usize]) -> MarkovPolicy {
    assert!(n >= 1);
    let horizon = n + 1;
    let states = parity_states(horizon);
    let terminal = states - 1;
    let mut include = vec![false; n];
    for &idx in subset {
        assert!(idx >= 1 && idx <= n, "subset index {idx} outside 1..={n}");
        include[idx - 1] = true;
    }
    MarkovPolicy::deterministic(Side::Max, horizon, states, 2, |h, s| {
        if h >= n || s == terminal {
            return 0;
        }
        let (_, bit) = parity_decode(s);
        if include[h] {
            1 - bit
        } else {
            bit
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_game() -> MarkovGame {
        let mut rng = RngStream::from_seed(5);
        make_random_game(3, 2, 2, 3, &mut rng)
    }

    #[test]
    fn random_game_is_valid() {
        let g = tiny_game();
        assert!(validate_game(&g).is_empty());
        let g2 = {
            let mut rng = RngStream::from_seed(5);
            make_random_game(3, 2, 2, 3, &mut rng)
        };
        assert_eq!(g, g2, "generation is deterministic in the seed");
        let g3 = {
            let mut rng = RngStream::from_seed(6);
            make_random_game(3, 2, 2, 3, &mut rng)
        };
        assert_ne!(g, g3);
    }

    #[test]
    fn random_game_rows_are_dirichlet_like() {
        let mut rng = RngStream::from_seed(7);
        let g = make_random_game(3, 3, 2, 2, &mut rng);
        for h in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        let row = g.transition_row(h, s, a, b);
                        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                        assert!(row.iter().all(|&p| p > 0.0));
                        let r = g.reward(h, s, a, b);
                        assert!((0.0..1.0).contains(&r));
                    }
                }
            }
        }
    }

    #[test]
    fn validation_flags_defects() {
        let g = tiny_game();
        let mut broken = g.clone();
        broken.rewards[0] = 1.5;
        broken.transitions[3] = -0.25;
        let defects = validate_game(&broken);
        assert!(defects
            .iter()
            .any(|d| matches!(d, GameDefect::RewardOutOfRange { h: 0, s: 0, a: 0, b: 0, .. })));
        assert!(defects.iter().any(|d| matches!(d, GameDefect::TransitionEntry { .. })));
        assert!(defects.iter().any(|d| matches!(d, GameDefect::TransitionRowSum { .. })));
    }

    #[test]
    fn json_round_trip_is_value_exact() {
        let g = tiny_game();
        let text = g.to_json();
        let back = MarkovGame::from_json(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_rejects_broken_games() {
        let g = tiny_game();
        let mut broken = g.clone();
        broken.transitions[0] += 0.5;
        let err = MarkovGame::from_json(&broken.to_json()).unwrap_err();
        assert!(matches!(err, GameError::Invalid(_)));
    }

    #[test]
    fn trajectory_rewards_match_tensors() {
        let g = tiny_game();
        let mu = MarkovPolicy::uniform(Side::Max, 3, 2, 2);
        let nu = MarkovPolicy::uniform(Side::Min, 3, 2, 3);
        let mut rng = RngStream::from_seed(8);
        for _ in 0..200 {
            let tr = sample_episode_pair(&g, &mu, &nu, &mut rng);
            assert_eq!(tr.steps.len(), 3);
            assert_eq!(tr.steps[0].state, g.initial_state());
            for (h, step) in tr.steps.iter().enumerate() {
                assert_eq!(step.reward, g.reward(h, step.state, step.max_action, step.min_action));
            }
        }
    }

    #[test]
    fn joint_sampling_matches_row_frequencies() {
        let g = tiny_game();
        let mut joint = MarkovJointPolicy::uniform(3, 2, 2, 3);
        // Skew the first row away from uniform.
        let row = joint.row_mut(0, 0);
        row.copy_from_slice(&[0.4, 0.1, 0.1, 0.05, 0.05, 0.3]);
        let mut rng = RngStream::from_seed(9);
        let n = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let tr = sample_episode_joint(&g, &joint, &mut rng);
            counts[tr.steps[0].max_action * 3 + tr.steps[0].min_action] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            let p = joint.row(0, 0)[i];
            assert!((freq - p).abs() < 0.01, "pair {i}: {freq} vs {p}");
        }
    }

    #[test]
    fn parity_layout_and_moves() {
        // n = 1 (H = 2): states [1_0, 2_0, 2_1, sink].
        let g = make_parity_game(1);
        assert_eq!(g.states(), 4);
        assert_eq!(g.horizon(), 2);
        assert_eq!(parity_state_id(1, 0), 0);
        assert_eq!(parity_state_id(2, 0), 1);
        assert_eq!(parity_state_id(2, 1), 2);
        // From 1_0, only (a_1, b_1) reaches 2_1.
        for a in 0..2 {
            for b in 0..2 {
                let row = g.transition_row(0, 0, a, b);
                let expect = if a == 1 && b == 1 { 2 } else { 1 };
                assert_eq!(row[expect], 1.0, "a={a} b={b}");
            }
        }
        // Last step pays on the matching bit only, for either max action.
        assert_eq!(g.reward(1, 1, 0, 0), 1.0);
        assert_eq!(g.reward(1, 1, 1, 0), 1.0);
        assert_eq!(g.reward(1, 1, 0, 1), 0.0);
        assert_eq!(g.reward(1, 2, 0, 1), 1.0);
        assert_eq!(g.reward(1, 2, 0, 0), 0.0);
        assert!(validate_game(&g).is_empty());
    }

    /// Replays the layer dynamics against a direct bit recurrence: from bit 0
    /// the bit flips exactly on `(a_1, b_1)`; from bit 1 exactly on
    /// `(a_0, b_1)`.
    #[test]
    fn parity_matches_bit_recurrence() {
        for n in 1..=6 {
            let g = make_parity_game(n);
            let h = n + 1;
            let mut rng = RngStream::from_seed(1000 + n as u64);
            for _ in 0..500 {
                let mut s = g.initial_state();
                let mut bit = 0usize;
                for step in 0..h {
                    let (layer, state_bit) = parity_decode(s);
                    assert_eq!(layer, step + 1, "layer advances once per step");
                    assert_eq!(state_bit, bit, "state bit tracks the recurrence");
                    let a = rng.uniform_usize(2);
                    let b = rng.uniform_usize(2);
                    let row = g.transition_row(step, s, a, b);
                    s = row.iter().position(|&p| p == 1.0).unwrap();
                    bit = if bit == 0 {
                        usize::from(a == 1 && b == 1)
                    } else {
                        usize::from(!(a == 0 && b == 1))
                    };
                }
                assert_eq!(s, g.states() - 1, "episodes end in the sink");
            }
        }
    }

    #[test]
    fn parity_opponent_validation() {
        assert!(make_parity_opponent(3, &[0], 0.0).is_err());
        assert!(make_parity_opponent(3, &[4], 0.0).is_err());
        assert!(make_parity_opponent(3, &[1, 3], 0.5).is_err());
        assert!(make_parity_opponent(3, &[1, 3], 0.49).is_ok());
    }

    #[test]
    fn known_subset_policy_wins_surely_without_noise() {
        for n in 1..=4 {
            let subsets: Vec<Vec<usize>> =
                vec![vec![], vec![1], (1..=n).collect(), (1..=n).filter(|i| i % 2 == 0).collect()];
            for subset in subsets {
                let g = make_parity_game(n);
                let mu = parity_max_policy(n, &subset);
                let mut opp = make_parity_opponent(n, &subset, 0.0).unwrap();
                let mut max_actor = MarkovActor::new(&mu);
                let mut rng = RngStream::from_seed(42 + n as u64);
                for _ in 0..1000 {
                    let tr = sample_episode_actors(&g, &mut max_actor, &mut opp, &mut rng);
                    assert_eq!(tr.return_value(), 1.0, "n={n} subset {subset:?}");
                }
            }
        }
    }

    #[test]
    fn known_subset_policy_earns_one_minus_noise() {
        let n = 3;
        let noise = 0.15;
        let subset = vec![1, 3];
        let g = make_parity_game(n);
        let mu = parity_max_policy(n, &subset);
        let mut opp = make_parity_opponent(n, &subset, noise).unwrap();
        let mut max_actor = MarkovActor::new(&mu);
        let mut rng = RngStream::from_seed(77);
        let episodes = 100_000;
        let mut total = 0.0;
        for _ in 0..episodes {
            total += sample_episode_actors(&g, &mut max_actor, &mut opp, &mut rng).return_value();
        }
        let mean = total / episodes as f64;
        assert!((mean - (1.0 - noise)).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn wrong_subset_scores_half() {
        // Guessing a different subset flips a uniform bit's contribution, so
        // the final parity match is a coin toss.
        let n = 3;
        let g = make_parity_game(n);
        let mu = parity_max_policy(n, &[1]);
        let mut opp = make_parity_opponent(n, &[1, 2], 0.0).unwrap();
        let mut max_actor = MarkovActor::new(&mu);
        let mut rng = RngStream::from_seed(78);
        let episodes = 100_000;
        let mut total = 0.0;
        for _ in 0..episodes {
            total += sample_episode_actors(&g, &mut max_actor, &mut opp, &mut rng).return_value();
        }
        let mean = total / episodes as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn uniform_play_stays_on_reachable_layers() {
        let g = make_parity_game(2);
        let mu = MarkovPolicy::uniform(Side::Max, 3, g.states(), 2);
        let nu = MarkovPolicy::uniform(Side::Min, 3, g.states(), 2);
        let mut rng = RngStream::from_seed(11);
        for _ in 0..500 {
            let tr = sample_episode_pair(&g, &mu, &nu, &mut rng);
            for (h, step) in tr.steps.iter().enumerate() {
                let (layer, _) = parity_decode(step.state);
                assert_eq!(layer, h + 1);
            }
        }
    }
}
