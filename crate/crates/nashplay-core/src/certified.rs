//! Certified-policy executors and their exact laws.
//!
//! A trained history defines, for each side, a non-Markov output policy:
//! play starts from an episode index drawn uniformly over the run and, as the
//! episode unfolds, the index is re-sampled over the episodes recorded in the
//! relevant visit lists, replaying the logged policy rows along the way. The
//! two learner families differ in when the re-sampling happens and in what
//! keys it: the Q-style policy re-samples on `(h, s, a, b)` cell counts after
//! both actions are observed, while the V-style policy re-samples on `(h, s)`
//! state counts before acting.
//!
//! Besides sampling executors, this module computes the exact law of these
//! policies. The distribution over episode indices ("belief") evolves by two
//! operations — conditioning on the executor's own realized action and the
//! visit-count re-sampling kernel — and both are exactly computable from the
//! history. A policy tree materializes all reachable `(step, state, belief)`
//! classes up to a node budget, which the evaluation oracles consume.

use thiserror::Error;

use crate::game::{EpisodeActor, MarkovGame, MarkovJointPolicy, MarkovPolicy, Side};
use crate::nash_q::HistoryQ;
use crate::nash_v::HistoryV;
use crate::rng::RngStream;
use crate::schedules::{alpha, sample_alpha_index};

/// Beliefs closer than this in max-norm are treated as the same class.
pub const BELIEF_MATCH_TOL: f64 = 1e-12;

/// Own actions with law probability at or below this are not expanded into
/// tree edges; their contribution to any value is below every tolerance used
/// downstream.
pub const ACTION_PRUNE_TOL: f64 = 1e-15;

/// Failures while materializing an explicit policy tree.
#[derive(Debug, Error)]
pub enum CertifiedError {
    /// The tree needs more `(step, state, belief)` classes than allowed.
    #[error("policy tree exceeds the node budget of {limit}")]
    SupportOverflow { limit: usize },
}

// ---------------------------------------------------------------------------
// Sampling executors
// ---------------------------------------------------------------------------

/// Executor for the certified policy of one side of a Q-learning history.
///
/// Each episode starts from a uniformly drawn index `k`; actions are drawn
/// from the own-side marginal of the joint row that episode `k` played. After
/// a step is observed, with `t` prior visits of the realized cell the index
/// moves to the `i`-th visiting episode with the `α_t^i` weights (`t = 0`
/// keeps the index unchanged).
pub struct CertifiedActorQ<'a> {
    hist: &'a HistoryQ,
    side: Side,
    k: u32,
}

/// Builds the sampling executor for `side` from a Q-learning history.
pub fn certified_policy_q(hist: &HistoryQ, side: Side) -> CertifiedActorQ<'_> {
    assert!(hist.episodes_run() >= 1, "history has no recorded episodes");
    CertifiedActorQ { hist, side, k: 1 }
}

impl CertifiedActorQ<'_> {
    /// The episode index currently replayed.
    pub fn current_index(&self) -> u32 {
        self.k
    }
}

impl EpisodeActor for CertifiedActorQ<'_> {
    fn reset(&mut self, rng: &mut RngStream) {
        self.k = 1 + rng.uniform_usize(self.hist.episodes_run() as usize) as u32;
    }

    fn act(&mut self, h: usize, s: usize, rng: &mut RngStream) -> usize {
        let row = self.hist.policy_row_at(h, s, self.k);
        let (mu, nu) =
            MarkovJointPolicy::marginals(row, self.hist.max_actions(), self.hist.min_actions());
        match self.side {
            Side::Max => rng.categorical(&mu),
            Side::Min => rng.categorical(&nu),
        }
    }

    fn observe(
        &mut self,
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        _reward: f64,
        _s_next: usize,
        rng: &mut RngStream,
    ) {
        let t = self.hist.visits_before(h, s, a, b, self.k);
        if t > 0 {
            let m = sample_alpha_index(t, self.hist.horizon(), rng);
            self.k = self.hist.visit_episodes(h, s, a, b)[(m - 1) as usize];
        }
    }
}

/// Executor for the certified policy of one side of a V-learning history.
///
/// Unlike the Q-style executor, the index is re-sampled from the `(h, s)`
/// state visit list *before* the action is drawn, so the action comes from
/// the re-sampled episode's row.
pub struct CertifiedActorV<'a> {
    hist: &'a HistoryV,
    side: Side,
    k: u32,
}

/// Builds the sampling executor for `side` from a V-learning history.
pub fn certified_policy_v(hist: &HistoryV, side: Side) -> CertifiedActorV<'_> {
    assert!(hist.episodes_run() >= 1, "history has no recorded episodes");
    CertifiedActorV { hist, side, k: 1 }
}

impl CertifiedActorV<'_> {
    /// The episode index currently replayed.
    pub fn current_index(&self) -> u32 {
        self.k
    }
}

impl EpisodeActor for CertifiedActorV<'_> {
    fn reset(&mut self, rng: &mut RngStream) {
        self.k = 1 + rng.uniform_usize(self.hist.episodes_run() as usize) as u32;
    }

    fn act(&mut self, h: usize, s: usize, rng: &mut RngStream) -> usize {
        let t = self.hist.visits_before(h, s, self.k);
        if t > 0 {
            let m = sample_alpha_index(t, self.hist.horizon(), rng);
            self.k = self.hist.visit_episodes(h, s)[(m - 1) as usize];
        }
        let row = match self.side {
            Side::Max => self.hist.mu_row_at(h, s, self.k),
            Side::Min => self.hist.nu_row_at(h, s, self.k),
        };
        rng.categorical(row)
    }
}

// ---------------------------------------------------------------------------
// Exact index-distribution calculus
// ---------------------------------------------------------------------------

/// Re-sampling kernel machinery shared by both laws.
///
/// Stores prefix sums `lg[t] = Σ_{j=2..t} ln(1−α_j)` so the per-index weights
/// `α_t^i = α_i · Π_{j=i+1..t}(1−α_j) = α_i · exp(lg[t] − lg[i])` can be
/// evaluated stably for any `i ≤ t`.
struct ResampleWeights {
    horizon: usize,
    lg: Vec<f64>,
}

impl ResampleWeights {
    fn new(horizon: usize, max_t: usize) -> Self {
        let mut lg = vec![0.0; max_t + 1];
        for t in 2..=max_t {
            lg[t] = lg[t - 1] + (1.0 - alpha(t as u32, horizon)).ln();
        }
        ResampleWeights { horizon, lg }
    }

    /// Applies the one-step index re-sampling to a mass vector over episodes
    /// `1..=K`. Mass on an episode with `t ≥ 1` prior visits in `visits`
    /// spreads over the first `t` visiting episodes with weights `α_t^i`;
    /// mass on episodes with no prior visit stays put. Mass-preserving; the
    /// output is not normalized.
    ///
    /// Grouping episodes by their visit count and sweeping suffix sums keeps
    /// this `O(K + |visits|)` instead of `O(K · |visits|)`.
    fn apply(&self, visits: &[u32], w: &[f64]) -> Vec<f64> {
        let episodes = w.len();
        let t_max = visits.len();
        if t_max == 0 {
            return w.to_vec();
        }
        debug_assert!(t_max < self.lg.len(), "kernel table sized too small");
        debug_assert!(
            visits.last().is_none_or(|&e| (e as usize) <= episodes),
            "visit list reaches beyond the run"
        );
        let mut out = vec![0.0; episodes];
        // Group mass by prior-visit count; count is nondecreasing in the
        // episode, so one forward sweep suffices.
        let mut group = vec![0.0; t_max + 1];
        let mut t = 0usize;
        for k in 1..=episodes {
            while t < t_max && (visits[t] as usize) < k {
                t += 1;
            }
            if t == 0 {
                out[k - 1] += w[k - 1];
            } else {
                group[t] += w[k - 1];
            }
        }
        // Suffix sums in the common log frame: the mass landing on the i-th
        // visit is α_i · exp(−lg[i]) · Σ_{t ≥ i} group[t] · exp(lg[t]).
        let mut suffix = vec![0.0; t_max + 2];
        for t in (1..=t_max).rev() {
            suffix[t] = suffix[t + 1] + group[t] * self.lg[t].exp();
        }
        for i in 1..=t_max {
            let gain = alpha(i as u32, self.horizon) * (-self.lg[i]).exp() * suffix[i];
            out[visits[i - 1] as usize - 1] += gain;
        }
        out
    }
}

/// Multiplies a belief by a per-episode likelihood and normalizes.
fn condition(belief: &[f64], likelihood: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out: Vec<f64> = belief.iter().enumerate().map(|(i, &w)| w * likelihood(i)).collect();
    let total: f64 = out.iter().sum();
    assert!(total > 1e-300, "conditioning on an action the law never plays");
    for v in &mut out {
        *v /= total;
    }
    out
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    assert!(total > 1e-300, "distribution lost all mass");
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Exact law of a certified executor.
///
/// The executor's internal episode index is distributed according to a
/// "belief": a probability vector over episodes `1..=K` (index `k − 1`). The
/// law exposes the action distribution at a `(step, state)` given the belief
/// and the belief after one observed step. For both families the next belief
/// does not depend on the realized next state, which is what makes the tree
/// materialization compact.
pub trait CertifiedLaw {
    fn horizon(&self) -> usize;
    fn states(&self) -> usize;
    fn episodes(&self) -> u32;
    fn side(&self) -> Side;
    fn own_actions(&self) -> usize;
    fn other_actions(&self) -> usize;

    /// Uniform over episodes: how the executor draws its starting index.
    fn initial_belief(&self) -> Vec<f64> {
        vec![1.0 / self.episodes() as f64; self.episodes() as usize]
    }

    /// Distribution of the executor's own action at `(h, s)` under `belief`.
    fn action_law(&self, h: usize, s: usize, belief: &[f64]) -> Vec<f64>;

    /// Belief after the executor plays `own` and observes `other` at
    /// `(h, s)`.
    fn next_belief(&self, h: usize, s: usize, own: usize, other: usize, belief: &[f64])
        -> Vec<f64>;
}

/// Exact law of a Q-learning certified policy.
///
/// Acting first (from the stored per-episode marginals) conditions the
/// belief on the realized own action; the cell-keyed re-sampling kernel is
/// then applied once both actions are known.
pub struct LawQ<'a> {
    hist: &'a HistoryQ,
    side: Side,
    own_actions: usize,
    /// Own-side marginal rows per `(site, episode)`, flattened.
    marginals: Vec<f64>,
    resample: ResampleWeights,
}

impl<'a> LawQ<'a> {
    pub fn new(hist: &'a HistoryQ, side: Side) -> Self {
        let episodes = hist.episodes_run() as usize;
        assert!(episodes >= 1, "history has no recorded episodes");
        let own_actions = match side {
            Side::Max => hist.max_actions(),
            Side::Min => hist.min_actions(),
        };
        let states = hist.states();
        let mut marginals = vec![0.0; hist.horizon() * states * episodes * own_actions];
        let mut max_visits = 0usize;
        for h in 0..hist.horizon() {
            for s in 0..states {
                let site = h * states + s;
                for k in 1..=episodes {
                    let row = hist.policy_row_at(h, s, k as u32);
                    let (mu, nu) =
                        MarkovJointPolicy::marginals(row, hist.max_actions(), hist.min_actions());
                    let own = match side {
                        Side::Max => &mu,
                        Side::Min => &nu,
                    };
                    let base = (site * episodes + (k - 1)) * own_actions;
                    marginals[base..base + own_actions].copy_from_slice(own);
                }
                for a in 0..hist.max_actions() {
                    for b in 0..hist.min_actions() {
                        max_visits = max_visits.max(hist.visit_episodes(h, s, a, b).len());
                    }
                }
            }
        }
        let resample = ResampleWeights::new(hist.horizon(), max_visits);
        LawQ { hist, side, own_actions, marginals, resample }
    }

    #[inline]
    fn marginal(&self, h: usize, s: usize, k0: usize, action: usize) -> f64 {
        let site = h * self.hist.states() + s;
        let episodes = self.hist.episodes_run() as usize;
        self.marginals[(site * episodes + k0) * self.own_actions + action]
    }
}

impl CertifiedLaw for LawQ<'_> {
    fn horizon(&self) -> usize {
        self.hist.horizon()
    }

    fn states(&self) -> usize {
        self.hist.states()
    }

    fn episodes(&self) -> u32 {
        self.hist.episodes_run()
    }

    fn side(&self) -> Side {
        self.side
    }

    fn own_actions(&self) -> usize {
        self.own_actions
    }

    fn other_actions(&self) -> usize {
        match self.side {
            Side::Max => self.hist.min_actions(),
            Side::Min => self.hist.max_actions(),
        }
    }

    fn action_law(&self, h: usize, s: usize, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.own_actions];
        for (k0, &w) in belief.iter().enumerate() {
            if w > 0.0 {
                for a in 0..self.own_actions {
                    out[a] += w * self.marginal(h, s, k0, a);
                }
            }
        }
        normalized(out)
    }

    fn next_belief(
        &self,
        h: usize,
        s: usize,
        own: usize,
        other: usize,
        belief: &[f64],
    ) -> Vec<f64> {
        let post = condition(belief, |k0| self.marginal(h, s, k0, own));
        let (a, b) = match self.side {
            Side::Max => (own, other),
            Side::Min => (other, own),
        };
        normalized(self.resample.apply(self.hist.visit_episodes(h, s, a, b), &post))
    }
}

/// Exact law of a V-learning certified policy.
///
/// The state-keyed re-sampling kernel applies first; the action then comes
/// from the re-sampled episode's own row, so conditioning on the action
/// happens after the kernel.
pub struct LawV<'a> {
    hist: &'a HistoryV,
    side: Side,
    own_actions: usize,
    /// Own-side rows per `(site, episode)`, flattened.
    rows: Vec<f64>,
    resample: ResampleWeights,
}

impl<'a> LawV<'a> {
    pub fn new(hist: &'a HistoryV, side: Side) -> Self {
        let episodes = hist.episodes_run() as usize;
        assert!(episodes >= 1, "history has no recorded episodes");
        let own_actions = match side {
            Side::Max => hist.max_actions(),
            Side::Min => hist.min_actions(),
        };
        let states = hist.states();
        let mut rows = vec![0.0; hist.horizon() * states * episodes * own_actions];
        let mut max_visits = 0usize;
        for h in 0..hist.horizon() {
            for s in 0..states {
                let site = h * states + s;
                for k in 1..=episodes {
                    let row = match side {
                        Side::Max => hist.mu_row_at(h, s, k as u32),
                        Side::Min => hist.nu_row_at(h, s, k as u32),
                    };
                    let base = (site * episodes + (k - 1)) * own_actions;
                    rows[base..base + own_actions].copy_from_slice(row);
                }
                max_visits = max_visits.max(hist.visit_episodes(h, s).len());
            }
        }
        let resample = ResampleWeights::new(hist.horizon(), max_visits);
        LawV { hist, side, own_actions, rows, resample }
    }

    #[inline]
    fn row_prob(&self, h: usize, s: usize, k0: usize, action: usize) -> f64 {
        let site = h * self.hist.states() + s;
        let episodes = self.hist.episodes_run() as usize;
        self.rows[(site * episodes + k0) * self.own_actions + action]
    }
}

impl CertifiedLaw for LawV<'_> {
    fn horizon(&self) -> usize {
        self.hist.horizon()
    }

    fn states(&self) -> usize {
        self.hist.states()
    }

    fn episodes(&self) -> u32 {
        self.hist.episodes_run()
    }

    fn side(&self) -> Side {
        self.side
    }

    fn own_actions(&self) -> usize {
        self.own_actions
    }

    fn other_actions(&self) -> usize {
        match self.side {
            Side::Max => self.hist.min_actions(),
            Side::Min => self.hist.max_actions(),
        }
    }

    fn action_law(&self, h: usize, s: usize, belief: &[f64]) -> Vec<f64> {
        let moved = self.resample.apply(self.hist.visit_episodes(h, s), belief);
        let mut out = vec![0.0; self.own_actions];
        for (k0, &w) in moved.iter().enumerate() {
            if w > 0.0 {
                for a in 0..self.own_actions {
                    out[a] += w * self.row_prob(h, s, k0, a);
                }
            }
        }
        normalized(out)
    }

    fn next_belief(
        &self,
        h: usize,
        s: usize,
        own: usize,
        _other: usize,
        belief: &[f64],
    ) -> Vec<f64> {
        let moved = self.resample.apply(self.hist.visit_episodes(h, s), belief);
        condition(&moved, |k0| self.row_prob(h, s, k0, own))
    }
}

// ---------------------------------------------------------------------------
// Explicit policy trees
// ---------------------------------------------------------------------------

/// One `(step, state, belief)` class of a materialized policy tree.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub h: usize,
    pub s: usize,
    /// Distribution over episode indices on entering this node.
    pub belief: Vec<f64>,
    /// Distribution of the certified side's action at this node.
    pub action_law: Vec<f64>,
    /// One edge per `(own, other)` action pair with non-negligible own
    /// probability; empty at the last step.
    pub edges: Vec<TreeEdge>,
}

/// Outgoing edge of a tree node; `children[s']` is the node reached when the
/// next state is `s'`.
#[derive(Clone, Debug)]
pub struct TreeEdge {
    pub own: usize,
    pub other: usize,
    pub children: Vec<u32>,
}

/// A certified policy unrolled into its reachable belief classes.
///
/// Nodes are stored level by level (children always have larger indices than
/// their parents), with one root per possible initial state. Beliefs equal
/// within [`BELIEF_MATCH_TOL`] collapse to one node.
pub struct PolicyTree {
    side: Side,
    horizon: usize,
    states: usize,
    own_actions: usize,
    other_actions: usize,
    episodes: u32,
    nodes: Vec<TreeNode>,
    roots: Vec<u32>,
}

impl PolicyTree {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn own_actions(&self) -> usize {
        self.own_actions
    }

    pub fn other_actions(&self) -> usize {
        self.other_actions
    }

    pub fn episodes(&self) -> u32 {
        self.episodes
    }

    pub fn node(&self, idx: u32) -> &TreeNode {
        &self.nodes[idx as usize]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Root node for an episode starting in state `s`.
    pub fn root(&self, s: usize) -> u32 {
        self.roots[s]
    }
}

fn same_belief(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= BELIEF_MATCH_TOL)
}

fn intern_node(
    nodes: &mut Vec<TreeNode>,
    buckets: &mut [Vec<u32>],
    law: &dyn CertifiedLaw,
    h: usize,
    s: usize,
    belief: &[f64],
    max_support: usize,
) -> Result<u32, CertifiedError> {
    let site = h * law.states() + s;
    for &idx in &buckets[site] {
        if same_belief(&nodes[idx as usize].belief, belief) {
            return Ok(idx);
        }
    }
    if nodes.len() >= max_support {
        return Err(CertifiedError::SupportOverflow { limit: max_support });
    }
    let idx = nodes.len() as u32;
    nodes.push(TreeNode {
        h,
        s,
        belief: belief.to_vec(),
        action_law: law.action_law(h, s, belief),
        edges: Vec::new(),
    });
    buckets[site].push(idx);
    Ok(idx)
}

/// Unrolls a certified law into an explicit tree of belief classes.
///
/// Materialization is game-free: every state appears at every level and each
/// edge carries children for all next states, so the same tree can be
/// evaluated under any game with matching dimensions.
pub fn materialize_policy_tree(
    law: &dyn CertifiedLaw,
    max_support: usize,
) -> Result<PolicyTree, CertifiedError> {
    let horizon = law.horizon();
    let states = law.states();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut buckets = vec![Vec::new(); horizon * states];
    let start = law.initial_belief();
    let mut roots = Vec::with_capacity(states);
    for s in 0..states {
        roots.push(intern_node(&mut nodes, &mut buckets, law, 0, s, &start, max_support)?);
    }
    let mut cursor = 0usize;
    while cursor < nodes.len() {
        let idx = cursor;
        cursor += 1;
        let (h, s) = (nodes[idx].h, nodes[idx].s);
        if h + 1 == horizon {
            continue;
        }
        let belief = nodes[idx].belief.clone();
        let action_law = nodes[idx].action_law.clone();
        let mut edges = Vec::new();
        for own in 0..law.own_actions() {
            if action_law[own] <= ACTION_PRUNE_TOL {
                continue;
            }
            for other in 0..law.other_actions() {
                let next = law.next_belief(h, s, own, other, &belief);
                let mut children = Vec::with_capacity(states);
                for s2 in 0..states {
                    children.push(intern_node(
                        &mut nodes,
                        &mut buckets,
                        law,
                        h + 1,
                        s2,
                        &next,
                        max_support,
                    )?);
                }
                edges.push(TreeEdge { own, other, children });
            }
        }
        nodes[idx].edges = edges;
    }
    Ok(PolicyTree {
        side: law.side(),
        horizon,
        states,
        own_actions: law.own_actions(),
        other_actions: law.other_actions(),
        episodes: law.episodes(),
        nodes,
        roots,
    })
}

/// Materializes the certified policy tree of `side` from a Q-learning
/// history.
pub fn certified_policy_tree_q(
    hist: &HistoryQ,
    side: Side,
    max_support: usize,
) -> Result<PolicyTree, CertifiedError> {
    materialize_policy_tree(&LawQ::new(hist, side), max_support)
}

/// Materializes the certified policy tree of `side` from a V-learning
/// history.
pub fn certified_policy_tree_v(
    hist: &HistoryV,
    side: Side,
    max_support: usize,
) -> Result<PolicyTree, CertifiedError> {
    materialize_policy_tree(&LawV::new(hist, side), max_support)
}

// ---------------------------------------------------------------------------
// Exact reach and action frequencies
// ---------------------------------------------------------------------------

/// Expected visit and action frequencies of a certified executor playing a
/// game against a fixed opposing Markov policy.
pub struct ActionFrequencies {
    pub horizon: usize,
    pub states: usize,
    pub own_actions: usize,
    state_reach: Vec<f64>,
    action_reach: Vec<f64>,
}

impl ActionFrequencies {
    /// Probability that step `h` is spent in state `s`.
    pub fn state(&self, h: usize, s: usize) -> f64 {
        self.state_reach[h * self.states + s]
    }

    /// Probability that step `h` is spent in state `s` and the certified
    /// side plays `a` there.
    pub fn action(&self, h: usize, s: usize, a: usize) -> f64 {
        self.action_reach[(h * self.states + s) * self.own_actions + a]
    }
}

/// Exact per-step state/action frequencies of the certified side, by a
/// forward pass over the tree's belief classes.
pub fn exact_action_frequencies(
    game: &MarkovGame,
    tree: &PolicyTree,
    opponent: &MarkovPolicy,
) -> ActionFrequencies {
    assert_eq!(opponent.side, tree.side().opponent(), "opponent policy plays the tree's own side");
    assert_eq!(game.horizon(), tree.horizon());
    assert_eq!(game.states(), tree.states());
    assert_eq!(game.actions(tree.side()), tree.own_actions());
    assert_eq!(game.actions(tree.side().opponent()), tree.other_actions());
    let states = tree.states();
    let own_actions = tree.own_actions();
    let mut reach = vec![0.0; tree.node_count()];
    reach[tree.root(game.initial_state()) as usize] = 1.0;
    let mut state_reach = vec![0.0; tree.horizon() * states];
    let mut action_reach = vec![0.0; tree.horizon() * states * own_actions];
    // Children always sit after their parents, so one ascending sweep visits
    // every node after all its mass has arrived.
    for idx in 0..tree.node_count() {
        let p = reach[idx];
        if p == 0.0 {
            continue;
        }
        let node = tree.node(idx as u32);
        let (h, s) = (node.h, node.s);
        state_reach[h * states + s] += p;
        for a in 0..own_actions {
            action_reach[(h * states + s) * own_actions + a] += p * node.action_law[a];
        }
        let opp_row = opponent.row(h, s);
        for edge in &node.edges {
            let weight = p * node.action_law[edge.own] * opp_row[edge.other];
            if weight <= 0.0 {
                continue;
            }
            let (a, b) = match tree.side() {
                Side::Max => (edge.own, edge.other),
                Side::Min => (edge.other, edge.own),
            };
            let trans = game.transition_row(h, s, a, b);
            for s2 in 0..states {
                if trans[s2] > 0.0 {
                    reach[edge.children[s2] as usize] += weight * trans[s2];
                }
            }
        }
    }
    ActionFrequencies { horizon: tree.horizon(), states, own_actions, state_reach, action_reach }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{make_random_game, sample_episode_actors, MarkovActor};
    use crate::nash_q::{run_nash_q, HistoryQ, RunOptions as QRunOptions};
    use crate::nash_v::{run_nash_v, HistoryV, RunOptions as VRunOptions};
    use crate::schedules::{Hyperparams, IotaTotal, DEFAULT_C, DEFAULT_P};
    use proptest::prelude::*;

    /// Direct-product reference for the re-sampling kernel.
    fn naive_resample(horizon: usize, visits: &[u32], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for k in 1..=w.len() {
            let t = visits.partition_point(|&e| (e as usize) < k);
            if t == 0 {
                out[k - 1] += w[k - 1];
                continue;
            }
            for i in 1..=t {
                let mut weight = alpha(i as u32, horizon);
                for j in (i + 1)..=t {
                    weight *= 1.0 - alpha(j as u32, horizon);
                }
                out[visits[i - 1] as usize - 1] += w[k - 1] * weight;
            }
        }
        out
    }

    fn hp_for(game_h: usize, s: usize, a: usize, b: usize, k: u32) -> Hyperparams {
        Hyperparams::for_game(
            game_h,
            s,
            a,
            b,
            k,
            DEFAULT_C,
            DEFAULT_P,
            IotaTotal::EpisodesTimesHorizon,
        )
    }

    proptest! {
        #[test]
        fn grouped_resampling_matches_direct_products(
            horizon in 1usize..4,
            episodes in 1usize..12,
            include in proptest::collection::vec(proptest::bool::ANY, 12),
            raw in proptest::collection::vec(0.001f64..1.0, 12),
        ) {
            let visits: Vec<u32> =
                (1..=episodes as u32).filter(|&e| include[(e - 1) as usize]).collect();
            let total: f64 = raw[..episodes].iter().sum();
            let w: Vec<f64> = raw[..episodes].iter().map(|x| x / total).collect();
            let table = ResampleWeights::new(horizon, visits.len());
            let fast = table.apply(&visits, &w);
            let slow = naive_resample(horizon, &visits, &w);
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let mass: f64 = fast.iter().sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_episode_history_keeps_index_and_replays_logged_row() {
        let mut hist = HistoryQ::with_uniform_policies(2, 1, 2, 2);
        // Row written during episode 0 so that episode 1 samples from it.
        let row = vec![0.6, 0.1, 0.2, 0.1];
        hist.record_policy_row(0, 0, 0, row.clone());
        hist.record_policy_row(1, 0, 0, row.clone());
        hist.set_episodes_run(1);

        let law = LawQ::new(&hist, Side::Max);
        let start = law.initial_belief();
        assert_eq!(start, vec![1.0]);
        let action_law = law.action_law(0, 0, &start);
        assert!((action_law[0] - 0.7).abs() < 1e-12 && (action_law[1] - 0.3).abs() < 1e-12);
        for own in 0..2 {
            for other in 0..2 {
                assert_eq!(law.next_belief(0, 0, own, other, &start), vec![1.0]);
            }
        }

        let tree = certified_policy_tree_q(&hist, Side::Max, 64).unwrap();
        for node in tree.nodes() {
            assert_eq!(node.belief, vec![1.0]);
        }

        // The executor mirrors a one-row Markov actor driven by the same
        // stream: no visits exist, so the index never moves off k = 1.
        let mut actor = certified_policy_q(&hist, Side::Max);
        let mut rng = RngStream::from_seed(41);
        actor.reset(&mut rng);
        assert_eq!(actor.current_index(), 1);
        for _ in 0..200 {
            let mut replay = rng.clone();
            let a = actor.act(0, 0, &mut rng);
            assert_eq!(a, replay.categorical(&[0.7, 0.3]));
            actor.observe(0, 0, a, 0, 0.0, 0, &mut rng);
            assert_eq!(actor.current_index(), 1);
        }
    }

    #[test]
    fn index_resampling_precedes_the_action_draw() {
        // Episode 1's row plays action 0 surely; the row recorded during
        // episode 1 (effective from episode 2) plays action 1 surely. State
        // (0, 0) was visited in episode 1 only. Starting from either index,
        // the pre-action re-sampling lands on episode 1, so the executor
        // must always play action 0; drawing the action before re-sampling
        // would instead mix the two rows evenly.
        let mut hist = HistoryV::with_uniform_policies(1, 1, 2, 2);
        hist.record_policy_row(Side::Max, 0, 0, 0, vec![1.0, 0.0]);
        hist.record_policy_row(Side::Max, 0, 0, 1, vec![0.0, 1.0]);
        hist.record_visit(0, 0, 1);
        hist.set_episodes_run(2);

        let law = LawV::new(&hist, Side::Max);
        let action_law = law.action_law(0, 0, &law.initial_belief());
        assert!((action_law[0] - 1.0).abs() < 1e-12);

        let mut actor = certified_policy_v(&hist, Side::Max);
        let mut rng = RngStream::from_seed(7);
        for _ in 0..50 {
            actor.reset(&mut rng);
            assert_eq!(actor.act(0, 0, &mut rng), 0);
            assert_eq!(actor.current_index(), 1);
        }
    }

    #[test]
    fn conditioning_keys_cells_by_game_actions_for_the_min_side() {
        // Only cell (a = 1, b = 0) has a visit. For the min side `own` is
        // the b-coordinate, so next_belief(own = 0, other = 1) must hit that
        // cell and move all mass onto episode 1.
        let mut hist = HistoryQ::with_uniform_policies(1, 1, 2, 2);
        hist.record_visit(0, 0, 1, 0, 1);
        hist.set_episodes_run(2);

        let law = LawQ::new(&hist, Side::Min);
        let start = law.initial_belief();
        let moved = law.next_belief(0, 0, 0, 1, &start);
        assert!((moved[0] - 1.0).abs() < 1e-12 && moved[1].abs() < 1e-12);
        // The unvisited cell (a = 0, b = 1) leaves the belief untouched.
        let kept = law.next_belief(0, 0, 1, 0, &start);
        assert!((kept[0] - 0.5).abs() < 1e-12 && (kept[1] - 0.5).abs() < 1e-12);

        // The executor agrees: observing (a = 1, b = 0) from index 2 moves
        // to episode 1, observing (a = 0, b = 1) keeps the index.
        let mut actor = certified_policy_q(&hist, Side::Min);
        let mut rng = RngStream::from_seed(3);
        while actor.current_index() != 2 {
            actor.reset(&mut rng);
        }
        actor.observe(0, 0, 0, 1, 0.0, 0, &mut rng);
        assert_eq!(actor.current_index(), 2);
        actor.observe(0, 0, 1, 0, 0.0, 0, &mut rng);
        assert_eq!(actor.current_index(), 1);
    }

    #[test]
    fn beliefs_collapse_across_opponent_actions_without_visits() {
        // With no recorded visits the next belief depends only on the own
        // action, so the level-1 classes are one per own action: three nodes
        // in total on a one-state game.
        let mut hist = HistoryQ::with_uniform_policies(2, 1, 2, 2);
        hist.record_policy_row(0, 0, 0, vec![0.4, 0.2, 0.3, 0.1]);
        hist.record_policy_row(0, 0, 1, vec![0.1, 0.3, 0.2, 0.4]);
        hist.set_episodes_run(3);
        let tree = certified_policy_tree_q(&hist, Side::Max, 64).unwrap();
        assert_eq!(tree.node_count(), 3);
    }

    #[test]
    fn tree_root_mixes_episode_policies_uniformly() {
        let mut seed = RngStream::from_seed(2024);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let episodes = 20;
        let hp = hp_for(2, 2, 2, 2, episodes);
        let mut rng = RngStream::from_seed(5);
        let hist = run_nash_q(&game, episodes, &hp, &QRunOptions::default(), &mut rng);

        let tree = certified_policy_tree_q(&hist, Side::Max, 10_000).unwrap();
        for s in 0..2 {
            let mut expect = [0.0; 2];
            for k in 1..=episodes {
                let (mu, _) = MarkovJointPolicy::marginals(hist.policy_row_at(0, s, k), 2, 2);
                for a in 0..2 {
                    expect[a] += mu[a] / episodes as f64;
                }
            }
            let got = &tree.node(tree.root(s)).action_law;
            for a in 0..2 {
                assert!((got[a] - expect[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tree_respects_node_budget() {
        let mut seed = RngStream::from_seed(11);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let hp = hp_for(2, 2, 2, 2, 10);
        let mut rng = RngStream::from_seed(6);
        let hist = run_nash_q(&game, 10, &hp, &QRunOptions::default(), &mut rng);
        match certified_policy_tree_q(&hist, Side::Max, 1) {
            Err(CertifiedError::SupportOverflow { limit }) => assert_eq!(limit, 1),
            other => panic!("expected overflow, got {:?}", other.map(|t| t.node_count())),
        }
        let tree = certified_policy_tree_q(&hist, Side::Max, 10_000).unwrap();
        assert!(tree.node_count() <= 10_000);
    }

    #[test]
    fn executor_frequencies_match_the_exact_law_q() {
        let mut seed = RngStream::from_seed(303);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let episodes = 30;
        let hp = hp_for(2, 2, 2, 2, episodes);
        let mut rng = RngStream::from_seed(17);
        let hist = run_nash_q(&game, episodes, &hp, &QRunOptions::default(), &mut rng);

        let tree = certified_policy_tree_q(&hist, Side::Max, 100_000).unwrap();
        let opponent = MarkovPolicy::uniform(Side::Min, 2, 2, 2);
        let freq = exact_action_frequencies(&game, &tree, &opponent);

        let n = 200_000u32;
        let mut counts = [0u64; 2 * 2 * 2];
        let mut actor = certified_policy_q(&hist, Side::Max);
        let mut opp = MarkovActor::new(&opponent);
        let mut play = RngStream::from_seed(18);
        for _ in 0..n {
            let traj = sample_episode_actors(&game, &mut actor, &mut opp, &mut play);
            for (h, step) in traj.steps.iter().enumerate() {
                counts[(h * 2 + step.state) * 2 + step.max_action] += 1;
            }
        }
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    let p = freq.action(h, s, a);
                    let emp = counts[(h * 2 + s) * 2 + a] as f64 / n as f64;
                    let sigma = (p * (1.0 - p) / n as f64).sqrt();
                    assert!(
                        (emp - p).abs() <= 3.0 * sigma + 1e-9,
                        "(h={h}, s={s}, a={a}): exact {p}, empirical {emp}"
                    );
                }
            }
        }
    }

    #[test]
    fn executor_frequencies_match_the_exact_law_v() {
        let mut seed = RngStream::from_seed(404);
        let game = make_random_game(2, 2, 2, 2, &mut seed);
        let episodes = 30;
        let hp = hp_for(2, 2, 2, 2, episodes);
        let rng = RngStream::from_seed(19);
        let hist = run_nash_v(&game, episodes, &hp, &VRunOptions::default(), &rng);

        let tree = certified_policy_tree_v(&hist, Side::Min, 100_000).unwrap();
        let opponent = MarkovPolicy::uniform(Side::Max, 2, 2, 2);
        let freq = exact_action_frequencies(&game, &tree, &opponent);

        let n = 200_000u32;
        let mut counts = [0u64; 2 * 2 * 2];
        let mut actor = certified_policy_v(&hist, Side::Min);
        let mut opp = MarkovActor::new(&opponent);
        let mut play = RngStream::from_seed(20);
        for _ in 0..n {
            let traj = sample_episode_actors(&game, &mut opp, &mut actor, &mut play);
            for (h, step) in traj.steps.iter().enumerate() {
                counts[(h * 2 + step.state) * 2 + step.min_action] += 1;
            }
        }
        for h in 0..2 {
            for s in 0..2 {
                for b in 0..2 {
                    let p = freq.action(h, s, b);
                    let emp = counts[(h * 2 + s) * 2 + b] as f64 / n as f64;
                    let sigma = (p * (1.0 - p) / n as f64).sqrt();
                    assert!(
                        (emp - p).abs() <= 3.0 * sigma + 1e-9,
                        "(h={h}, s={s}, b={b}): exact {p}, empirical {emp}"
                    );
                }
            }
        }
    }

    #[test]
    fn state_frequencies_from_the_tree_stay_normalized() {
        let mut seed = RngStream::from_seed(505);
        let game = make_random_game(3, 2, 2, 2, &mut seed);
        let episodes = 25;
        let hp = hp_for(3, 2, 2, 2, episodes);
        let mut rng = RngStream::from_seed(21);
        let hist = run_nash_q(&game, episodes, &hp, &QRunOptions::default(), &mut rng);
        let tree = certified_policy_tree_q(&hist, Side::Max, 1_000_000).unwrap();
        let opponent = MarkovPolicy::uniform(Side::Min, 3, 2, 2);
        let freq = exact_action_frequencies(&game, &tree, &opponent);
        for h in 0..3 {
            let total: f64 = (0..2).map(|s| freq.state(h, s)).sum();
            assert!((total - 1.0).abs() < 1e-9, "level {h} reach sums to {total}");
            for s in 0..2 {
                let acted: f64 = (0..2).map(|a| freq.action(h, s, a)).sum();
                assert!((acted - freq.state(h, s)).abs() < 1e-9);
            }
        }
    }
}
