//! Weighted adversarial bandit by follow-the-regularized-leader.
//!
//! The learner keeps a weighted sum of importance-weighted loss estimates and
//! plays the softmax policy
//!
//! ```text
//! θ_t(a) ∝ exp[-(η_t/w_t) · Σ_{i<t} w_i·l̂_i(a)],
//! l̂_i(a) = l_i(a)·1{a_i = a}/(θ_i(a) + γ_i),
//! ```
//!
//! with `η_t = γ_t = √(log A/(A·t))` and caller-supplied positive weights
//! `w_i`. Losses must lie in `[0, 1]`. With high probability the *weighted*
//! regret against any fixed arm stays below the evaluated bound in
//! [`regret_bound`]; the biased estimator `E[l̂(a)] = θ(a)·l(a)/(θ(a)+γ)`
//! never overestimates a loss.
//!
//! The V-learner uses this exact scheme with the visit-weight sequence, but
//! folds the reweighting into an exponentially discounted running sum; this
//! module is the standalone fixed-weight form.

use crate::matrix_games::MixedStrategy;
use crate::rng::RngStream;

/// Follow-the-regularized-leader state for one adversarial bandit.
#[derive(Clone, Debug)]
pub struct FtrlBandit {
    arms: usize,
    weights: Vec<f64>,
    completed: usize,
    /// `Σ_{i ≤ completed} w_i·l̂_i(a)`.
    weighted_loss: Vec<f64>,
}

impl FtrlBandit {
    /// Starts a bandit over `arms ≥ 1` arms with one positive weight per
    /// round to be played.
    pub fn new(arms: usize, weights: Vec<f64>) -> Self {
        assert!(arms >= 1, "need at least one arm");
        assert!(!weights.is_empty(), "need at least one round");
        assert!(
            weights.iter().all(|&w| w > 0.0 && w.is_finite()),
            "round weights must be positive and finite"
        );
        Self { arms, weights, completed: 0, weighted_loss: vec![0.0; arms] }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    /// The 1-based index of the round about to be played.
    pub fn round(&self) -> usize {
        self.completed + 1
    }

    /// Exploration/learning rate `√(log A/(A·t))` for round `t`.
    pub fn rate(&self, t: usize) -> f64 {
        assert!(t >= 1);
        ((self.arms as f64).ln() / (self.arms as f64 * t as f64)).sqrt()
    }

    /// The policy for the current round.
    pub fn policy(&self) -> MixedStrategy {
        let t = self.round();
        assert!(t <= self.weights.len(), "all rounds already played");
        let scale = self.rate(t) / self.weights[t - 1];
        let logits: Vec<f64> = self.weighted_loss.iter().map(|l| -scale * l).collect();
        MixedStrategy { weights: softmax(&logits) }
    }

    /// Records the loss observed for the arm pulled this round.
    pub fn observe(&mut self, arm: usize, loss: f64) {
        let t = self.round();
        assert!(t <= self.weights.len(), "all rounds already played");
        assert!(arm < self.arms, "arm {arm} out of range");
        assert!((0.0..=1.0).contains(&loss), "losses must lie in [0, 1], got {loss}");
        let theta = self.policy().weights;
        let gamma = self.rate(t);
        let estimate = loss / (theta[arm] + gamma);
        self.weighted_loss[arm] += self.weights[t - 1] * estimate;
        self.completed += 1;
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// A loss process the bandit plays against.
pub trait BanditAdversary {
    /// Mean loss of `arm` at round `t` (1-based), in `[0, 1]`.
    fn mean_loss(&self, t: usize, arm: usize) -> f64;
    /// Realized loss for the pulled arm.
    fn draw_loss(&mut self, t: usize, arm: usize, rng: &mut RngStream) -> f64;
}

/// Independent Bernoulli losses with fixed per-arm means.
#[derive(Clone, Debug)]
pub struct StochasticAdversary {
    pub means: Vec<f64>,
}

impl BanditAdversary for StochasticAdversary {
    fn mean_loss(&self, _t: usize, arm: usize) -> f64 {
        self.means[arm]
    }

    fn draw_loss(&mut self, _t: usize, arm: usize, rng: &mut RngStream) -> f64 {
        f64::from(rng.bernoulli(self.means[arm]))
    }
}

/// A deterministic rotating adversary: at round `t` the arm `t mod A` takes
/// loss 1 and every other arm loss 0.
#[derive(Clone, Debug)]
pub struct AlternatingAdversary {
    pub arms: usize,
}

impl BanditAdversary for AlternatingAdversary {
    fn mean_loss(&self, t: usize, arm: usize) -> f64 {
        f64::from(t % self.arms == arm)
    }

    fn draw_loss(&mut self, t: usize, arm: usize, _rng: &mut RngStream) -> f64 {
        self.mean_loss(t, arm)
    }
}

/// Transcript of one bandit run.
#[derive(Clone, Debug)]
pub struct BanditRun {
    pub arms_pulled: Vec<usize>,
    pub observed_losses: Vec<f64>,
    /// `Σ_t w_t·(⟨θ_t, l̄_t⟩ - l̄_t(a*))` against the best fixed arm under
    /// the adversary's mean losses.
    pub weighted_regret: f64,
}

/// Plays all configured rounds of `bandit` against the adversary.
pub fn run_weighted_bandit_with(
    bandit: &mut FtrlBandit,
    adversary: &mut dyn BanditAdversary,
    rng: &mut RngStream,
) -> BanditRun {
    let arms = bandit.arms();
    let weights = bandit.weights.clone();
    let rounds = weights.len();
    let mut arms_pulled = Vec::with_capacity(rounds);
    let mut observed_losses = Vec::with_capacity(rounds);
    let mut policy_mean_loss = 0.0;
    let mut fixed_arm_loss = vec![0.0; arms];
    for t in 1..=rounds {
        let theta = bandit.policy().weights;
        let arm = rng.categorical(&theta);
        let loss = adversary.draw_loss(t, arm, rng);
        bandit.observe(arm, loss);
        let w = weights[t - 1];
        for j in 0..arms {
            let mean = adversary.mean_loss(t, j);
            policy_mean_loss += w * theta[j] * mean;
            fixed_arm_loss[j] += w * mean;
        }
        arms_pulled.push(arm);
        observed_losses.push(loss);
    }
    let best_fixed = fixed_arm_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    BanditRun { arms_pulled, observed_losses, weighted_regret: policy_mean_loss - best_fixed }
}

/// Convenience runner that sizes the bandit for `arms`.
pub fn run_bandit(
    arms: usize,
    adversary: &mut dyn BanditAdversary,
    weights: &[f64],
    rng: &mut RngStream,
) -> BanditRun {
    let mut bandit = FtrlBandit::new(arms, weights.to_vec());
    run_weighted_bandit_with(&mut bandit, adversary, rng)
}

/// Log factor `ι = ln(A·K/p)` used by the regret bound.
pub fn bandit_iota(arms: usize, rounds: usize, p: f64) -> f64 {
    assert!(p > 0.0 && p <= 1.0);
    (arms as f64 * rounds as f64 / p).ln()
}

/// The high-probability weighted-regret bound for a weight sequence:
///
/// ```text
/// 2·max_i w_i·√(A·K·ι) + (3/2)·√(A·ι)·Σ_i w_i/√i
///   + (1/2)·max_i w_i·ι + √(2·ι·Σ_i w_i²)
/// ```
pub fn regret_bound(weights: &[f64], arms: usize, iota: f64) -> f64 {
    let rounds = weights.len();
    let w_max = weights.iter().cloned().fold(0.0, f64::max);
    let w_rsqrt: f64 = weights.iter().enumerate().map(|(i, w)| w / ((i + 1) as f64).sqrt()).sum();
    let w_sq: f64 = weights.iter().map(|w| w * w).sum();
    let a = arms as f64;
    2.0 * w_max * (a * rounds as f64 * iota).sqrt()
        + 1.5 * (a * iota).sqrt() * w_rsqrt
        + 0.5 * w_max * iota
        + (2.0 * iota * w_sq).sqrt()
}
