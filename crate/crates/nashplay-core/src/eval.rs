//! Ground-truth evaluation oracles.
//!
//! Backward induction gives exact minimax values, best responses to Markov
//! policies, and fixed-pair values. For the non-Markov certified policies the
//! exact best response is computed by dynamic programming over the policy
//! tree's belief classes: at each class the responder picks a pure action
//! against the certified side's current action law (a linear objective, so
//! pure suffices; ties break toward the lowest action index). Exploitability
//! is the gap between the two best-response values at the initial state; a
//! Monte Carlo estimator provides the matching simulation-based lower bound.

use std::collections::HashMap;

use crate::certified::PolicyTree;
use crate::game::{sample_episode_actors, EpisodeActor, MarkovGame, MarkovPolicy, Side};
use crate::matrix_games::{solve_zero_sum, Matrix};
use crate::rng::RngStream;

/// Exact value tables from a backward-induction pass.
#[derive(Clone, Debug)]
pub struct ValueTable {
    horizon: usize,
    states: usize,
    max_actions: usize,
    min_actions: usize,
    /// `(horizon + 1) × states`; the last level is identically zero.
    v: Vec<f64>,
    /// `horizon × states × max_actions × min_actions`.
    q: Vec<f64>,
}

impl ValueTable {
    fn zeroed(game: &MarkovGame) -> Self {
        ValueTable {
            horizon: game.horizon(),
            states: game.states(),
            max_actions: game.max_actions(),
            min_actions: game.min_actions(),
            v: vec![0.0; (game.horizon() + 1) * game.states()],
            q: vec![0.0; game.horizon() * game.states() * game.max_actions() * game.min_actions()],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// State value at step `h` (`h = horizon` is the terminal zero level).
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.states + s]
    }

    /// Action-pair value at step `h`.
    pub fn q_value(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.q[((h * self.states + s) * self.max_actions + a) * self.min_actions + b]
    }

    /// `Σ_{s'} P(s' | h,s,a,b) · V(h+1, s')` plus the reward: the one-step
    /// backup that every table here satisfies by construction.
    fn backup(&self, game: &MarkovGame, h: usize, s: usize, a: usize, b: usize) -> f64 {
        let trans = game.transition_row(h, s, a, b);
        let next = &self.v[(h + 1) * self.states..(h + 2) * self.states];
        game.reward(h, s, a, b) + trans.iter().zip(next).map(|(p, v)| p * v).sum::<f64>()
    }

    #[inline]
    fn set_v(&mut self, h: usize, s: usize, value: f64) {
        self.v[h * self.states + s] = value;
    }

    #[inline]
    fn set_q(&mut self, h: usize, s: usize, a: usize, b: usize, value: f64) {
        self.q[((h * self.states + s) * self.max_actions + a) * self.min_actions + b] = value;
    }
}

/// Minimax value tables together with a pair of exact equilibrium policies.
pub struct NashSolution {
    pub table: ValueTable,
    pub mu: MarkovPolicy,
    pub nu: MarkovPolicy,
}

/// Exact minimax values by backward induction; each `(h, s)` matrix game is
/// solved to optimality, so `V` is the game value and `(mu, nu)` attain it.
pub fn nash_value_oracle(game: &MarkovGame) -> NashSolution {
    let mut table = ValueTable::zeroed(game);
    let mut mu =
        MarkovPolicy::uniform(Side::Max, game.horizon(), game.states(), game.max_actions());
    let mut nu =
        MarkovPolicy::uniform(Side::Min, game.horizon(), game.states(), game.min_actions());
    for h in (0..game.horizon()).rev() {
        for s in 0..game.states() {
            let q = Matrix::from_fn(game.max_actions(), game.min_actions(), |a, b| {
                table.backup(game, h, s, a, b)
            });
            for a in 0..game.max_actions() {
                for b in 0..game.min_actions() {
                    table.set_q(h, s, a, b, q.get(a, b));
                }
            }
            let solution = solve_zero_sum(&q);
            table.set_v(h, s, solution.value);
            mu.row_mut(h, s).copy_from_slice(&solution.max_strategy.weights);
            nu.row_mut(h, s).copy_from_slice(&solution.min_strategy.weights);
        }
    }
    NashSolution { table, mu, nu }
}

/// Exact best response to a Markov policy.
///
/// Returns the responding side's deterministic optimal Markov policy (ties
/// toward the lowest action index) and the value tables of the played pair:
/// `V(h, s)` is the best the responder can force from `(h, s)` given the
/// fixed policy.
pub fn best_response_to_markov(
    game: &MarkovGame,
    policy: &MarkovPolicy,
) -> (MarkovPolicy, ValueTable) {
    let responder = policy.side.opponent();
    let own_actions = game.actions(responder);
    let mut response = MarkovPolicy::uniform(responder, game.horizon(), game.states(), own_actions);
    let mut table = ValueTable::zeroed(game);
    for h in (0..game.horizon()).rev() {
        for s in 0..game.states() {
            for a in 0..game.max_actions() {
                for b in 0..game.min_actions() {
                    let value = table.backup(game, h, s, a, b);
                    table.set_q(h, s, a, b, value);
                }
            }
            let fixed_row = policy.row(h, s);
            let mut best = f64::NAN;
            let mut best_action = 0usize;
            for own in 0..own_actions {
                let total: f64 = fixed_row
                    .iter()
                    .enumerate()
                    .map(|(other, &p)| {
                        let (a, b) = match responder {
                            Side::Max => (own, other),
                            Side::Min => (other, own),
                        };
                        p * table.q_value(h, s, a, b)
                    })
                    .sum();
                let improves = match responder {
                    Side::Max => best.is_nan() || total > best,
                    Side::Min => best.is_nan() || total < best,
                };
                if improves {
                    best = total;
                    best_action = own;
                }
            }
            let row = response.row_mut(h, s);
            row.iter_mut().for_each(|p| *p = 0.0);
            row[best_action] = 1.0;
            table.set_v(h, s, best);
        }
    }
    (response, table)
}

/// Exact value of a fixed Markov policy pair.
pub fn fixed_pair_value(game: &MarkovGame, mu: &MarkovPolicy, nu: &MarkovPolicy) -> ValueTable {
    assert_eq!(mu.side, Side::Max);
    assert_eq!(nu.side, Side::Min);
    let mut table = ValueTable::zeroed(game);
    for h in (0..game.horizon()).rev() {
        for s in 0..game.states() {
            let mut value = 0.0;
            for a in 0..game.max_actions() {
                for b in 0..game.min_actions() {
                    let q = table.backup(game, h, s, a, b);
                    table.set_q(h, s, a, b, q);
                    value += mu.row(h, s)[a] * nu.row(h, s)[b] * q;
                }
            }
            table.set_v(h, s, value);
        }
    }
    table
}

// ---------------------------------------------------------------------------
// Best response to a certified policy tree
// ---------------------------------------------------------------------------

/// Exact best response to a certified policy: one pure action and one value
/// per belief class of the tree.
pub struct TreeResponse<'a> {
    tree: &'a PolicyTree,
    /// The responder's side (opposite the tree's certified side).
    pub side: Side,
    actions: Vec<usize>,
    values: Vec<f64>,
}

impl<'a> TreeResponse<'a> {
    /// Value the responder forces from an episode starting in state `s`.
    pub fn root_value(&self, s: usize) -> f64 {
        self.values[self.tree.root(s) as usize]
    }

    /// The responder's action at a belief class.
    pub fn action_at(&self, node: u32) -> usize {
        self.actions[node as usize]
    }

    /// A replayable episode actor that follows the responder's plan by
    /// tracking the certified side's belief class along the realized history.
    pub fn actor(&self) -> TreeResponder<'_, 'a> {
        TreeResponder { response: self, node: None }
    }
}

/// Computes the exact best response to a certified policy tree under `game`.
///
/// Dynamic programming runs backward over the tree's belief classes. At each
/// class the responder's payoff for a pure action is linear in the certified
/// side's action law, so a pure choice is optimal; ties break toward the
/// lowest action index.
pub fn best_response_to_tree<'a>(game: &MarkovGame, tree: &'a PolicyTree) -> TreeResponse<'a> {
    assert_eq!(game.horizon(), tree.horizon());
    assert_eq!(game.states(), tree.states());
    assert_eq!(game.actions(tree.side()), tree.own_actions());
    let responder = tree.side().opponent();
    assert_eq!(game.actions(responder), tree.other_actions());
    let n = tree.node_count();
    let mut values = vec![0.0; n];
    let mut actions = vec![0usize; n];
    // Children sit after their parents, so a descending sweep is a valid
    // backward pass.
    for idx in (0..n).rev() {
        let node = tree.node(idx as u32);
        let (h, s) = (node.h, node.s);
        let last = h + 1 == tree.horizon();
        let mut best = f64::NAN;
        let mut best_action = 0usize;
        for other in 0..tree.other_actions() {
            let mut total = 0.0;
            if last {
                for own in 0..tree.own_actions() {
                    let (a, b) = match tree.side() {
                        Side::Max => (own, other),
                        Side::Min => (other, own),
                    };
                    total += node.action_law[own] * game.reward(h, s, a, b);
                }
            } else {
                for edge in &node.edges {
                    if edge.other != other {
                        continue;
                    }
                    let (a, b) = match tree.side() {
                        Side::Max => (edge.own, edge.other),
                        Side::Min => (edge.other, edge.own),
                    };
                    let trans = game.transition_row(h, s, a, b);
                    let mut continuation = game.reward(h, s, a, b);
                    for s2 in 0..tree.states() {
                        if trans[s2] > 0.0 {
                            continuation += trans[s2] * values[edge.children[s2] as usize];
                        }
                    }
                    total += node.action_law[edge.own] * continuation;
                }
            }
            let improves = match responder {
                Side::Max => best.is_nan() || total > best,
                Side::Min => best.is_nan() || total < best,
            };
            if improves {
                best = total;
                best_action = other;
            }
        }
        values[idx] = best;
        actions[idx] = best_action;
    }
    TreeResponse { tree, side: responder, actions, values }
}

/// Episode actor replaying a [`TreeResponse`].
///
/// On each step it plays the plan's action for the current belief class and
/// follows the observed `(a, b, s')` to the next class. If play falls off the
/// materialized tree (possible only through own-action probabilities below
/// the pruning tolerance), the actor keeps its last class; the Monte Carlo
/// estimate stays a valid lower bound because any fixed behavior is.
pub struct TreeResponder<'r, 'a> {
    response: &'r TreeResponse<'a>,
    node: Option<u32>,
}

impl EpisodeActor for TreeResponder<'_, '_> {
    fn reset(&mut self, _rng: &mut RngStream) {
        self.node = None;
    }

    fn act(&mut self, h: usize, s: usize, _rng: &mut RngStream) -> usize {
        if h == 0 {
            self.node = Some(self.response.tree.root(s));
        }
        match self.node {
            Some(idx) => self.response.action_at(idx),
            None => 0,
        }
    }

    fn observe(
        &mut self,
        _h: usize,
        _s: usize,
        a: usize,
        b: usize,
        _reward: f64,
        s_next: usize,
        _rng: &mut RngStream,
    ) {
        let Some(idx) = self.node else { return };
        let tree = self.response.tree;
        let (own, other) = match tree.side() {
            Side::Max => (a, b),
            Side::Min => (b, a),
        };
        let node = tree.node(idx);
        self.node = node
            .edges
            .iter()
            .find(|edge| edge.own == own && edge.other == other)
            .map(|edge| edge.children[s_next]);
    }
}

// ---------------------------------------------------------------------------
// Exploitability
// ---------------------------------------------------------------------------

/// Exact exploitability of a certified policy pair.
#[derive(Clone, Copy, Debug)]
pub struct ExploitabilityReport {
    /// `up_value − low_value`; zero exactly at an equilibrium pair.
    pub exploitability: f64,
    /// The best value a max-responder forces against the certified
    /// min-policy, from the initial state.
    pub up_value: f64,
    /// The best value the certified max-policy guarantees against a
    /// min-responder, from the initial state.
    pub low_value: f64,
}

/// Exact exploitability of the certified pair `(tree_mu, tree_nu)` under
/// `game`: the gap between the two best-response values at the initial
/// state.
pub fn exploitability_exact(
    game: &MarkovGame,
    tree_mu: &PolicyTree,
    tree_nu: &PolicyTree,
) -> ExploitabilityReport {
    assert_eq!(tree_mu.side(), Side::Max, "first tree must be the max-side policy");
    assert_eq!(tree_nu.side(), Side::Min, "second tree must be the min-side policy");
    let s1 = game.initial_state();
    let up_value = best_response_to_tree(game, tree_nu).root_value(s1);
    let low_value = best_response_to_tree(game, tree_mu).root_value(s1);
    let exploitability = up_value - low_value;
    debug_assert!(exploitability > -1e-9, "best responses are ordered");
    ExploitabilityReport { exploitability, up_value, low_value }
}

/// Exact expected return of the certified pair itself.
///
/// Both sides' beliefs advance on the same public history but factorize:
/// each side's class depends only on its own policy's law, so memoizing on
/// the pair of class indices is exact.
pub fn pair_value_exact(game: &MarkovGame, tree_mu: &PolicyTree, tree_nu: &PolicyTree) -> f64 {
    assert_eq!(tree_mu.side(), Side::Max);
    assert_eq!(tree_nu.side(), Side::Min);
    assert_eq!(game.horizon(), tree_mu.horizon());
    assert_eq!(game.horizon(), tree_nu.horizon());
    let mut memo: HashMap<(u32, u32), f64> = HashMap::new();
    let s1 = game.initial_state();
    pair_value_at(game, tree_mu, tree_nu, tree_mu.root(s1), tree_nu.root(s1), &mut memo)
}

fn pair_value_at(
    game: &MarkovGame,
    tree_mu: &PolicyTree,
    tree_nu: &PolicyTree,
    node_mu: u32,
    node_nu: u32,
    memo: &mut HashMap<(u32, u32), f64>,
) -> f64 {
    if let Some(&v) = memo.get(&(node_mu, node_nu)) {
        return v;
    }
    let mu = tree_mu.node(node_mu);
    let nu = tree_nu.node(node_nu);
    debug_assert_eq!((mu.h, mu.s), (nu.h, nu.s), "trees advanced out of lockstep");
    let (h, s) = (mu.h, mu.s);
    let value = if h + 1 == game.horizon() {
        let mut total = 0.0;
        for a in 0..game.max_actions() {
            for b in 0..game.min_actions() {
                total += mu.action_law[a] * nu.action_law[b] * game.reward(h, s, a, b);
            }
        }
        total
    } else {
        let mut total = 0.0;
        for edge_mu in &mu.edges {
            let (a, b) = (edge_mu.own, edge_mu.other);
            let weight = mu.action_law[a] * nu.action_law[b];
            if weight <= 0.0 {
                continue;
            }
            let Some(edge_nu) = nu.edges.iter().find(|e| e.own == b && e.other == a) else {
                continue;
            };
            let trans = game.transition_row(h, s, a, b);
            let mut continuation = game.reward(h, s, a, b);
            for s2 in 0..game.states() {
                if trans[s2] > 0.0 {
                    continuation += trans[s2]
                        * pair_value_at(
                            game,
                            tree_mu,
                            tree_nu,
                            edge_mu.children[s2],
                            edge_nu.children[s2],
                            memo,
                        );
                }
            }
            total += weight * continuation;
        }
        total
    };
    memo.insert((node_mu, node_nu), value);
    value
}

// ---------------------------------------------------------------------------
// Monte Carlo exploitability
// ---------------------------------------------------------------------------

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    /// `up_value − low_value`.
    pub estimate: f64,
    /// Standard error of the difference.
    pub stderr: f64,
    /// Mean return of the max-responder against the certified min-policy.
    pub up_value: f64,
    pub up_stderr: f64,
    /// Mean return of the certified max-policy against the min-responder.
    pub low_value: f64,
    pub low_stderr: f64,
}

fn mc_mean_return(
    game: &MarkovGame,
    max_actor: &mut dyn EpisodeActor,
    min_actor: &mut dyn EpisodeActor,
    n_episodes: u32,
    rng: &mut RngStream,
) -> (f64, f64) {
    assert!(n_episodes >= 1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_episodes {
        let ret = sample_episode_actors(game, max_actor, min_actor, rng).return_value();
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = n_episodes as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let stderr = if n_episodes > 1 { (variance / (n - 1.0)).sqrt() } else { f64::INFINITY };
    (mean, stderr)
}

/// Monte Carlo exploitability estimate of a certified policy pair against a
/// fixed pair of responders.
///
/// Runs `n_episodes` of (max-responder vs certified min) and `n_episodes`
/// of (certified max vs min-responder) and returns the difference of mean
/// returns. In expectation this lower-bounds the exact exploitability for
/// *any* responders and attains it when the responders are exact best
/// responses (for example [`TreeResponse::actor`]).
pub fn exploitability_mc(
    game: &MarkovGame,
    exec_mu: &mut dyn EpisodeActor,
    exec_nu: &mut dyn EpisodeActor,
    response_max: &mut dyn EpisodeActor,
    response_min: &mut dyn EpisodeActor,
    n_episodes: u32,
    rng: &mut RngStream,
) -> McEstimate {
    let mut up_rng = rng.split(0);
    let mut low_rng = rng.split(1);
    let (up_value, up_stderr) =
        mc_mean_return(game, response_max, exec_nu, n_episodes, &mut up_rng);
    let (low_value, low_stderr) =
        mc_mean_return(game, exec_mu, response_min, n_episodes, &mut low_rng);
    McEstimate {
        estimate: up_value - low_value,
        stderr: (up_stderr * up_stderr + low_stderr * low_stderr).sqrt(),
        up_value,
        up_stderr,
        low_value,
        low_stderr,
    }
}
