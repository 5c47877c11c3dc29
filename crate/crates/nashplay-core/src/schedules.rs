//! Learning-rate and optimism-bonus schedules shared by both learners.
//!
//! The step size after the `t`-th visit of a cell is `α_t = (H+1)/(H+t)`.
//! Unrolling the recursion `x ← (1-α_t)x + α_t y_t` expresses the current
//! value as a weighted average of the per-visit targets with weights
//!
//! ```text
//! α_t^0 = Π_{j=1..t} (1-α_j),      α_t^i = α_i · Π_{j=i+1..t} (1-α_j),
//! ```
//!
//! which sum to one. Key properties (all covered by tests):
//!
//! 1. `1/√t ≤ Σ_i α_t^i/√i ≤ 2/√t`
//! 2. `max_i α_t^i ≤ 2H/t` and `Σ_i (α_t^i)² ≤ 2H/t`
//! 3. `Σ_{t≥i} α_t^i = 1 + 1/H`
//!
//! Bonuses: the Q-learner adds `β_t = c·√(H³ι/t)` after the `t`-th visit of a
//! `(state, action, action)` cell; the V-learner adds `β_t = c·√(N·H⁴ι/t)`
//! after the `t`-th visit of a state, where `N` is the acting player's action
//! count, and mixes its policy with rate `η_t = √(log N/(N·t))`. Here
//! `ι = log(S·A·B·T/p)` is a log factor from the failure probability `p`,
//! with `T` the total step budget (episodes × horizon by default).

use serde::{Deserialize, Serialize};

/// Scalar hyperparameters driving the schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Episode horizon `H ≥ 1`.
    pub horizon: usize,
    /// Bonus multiplier `c ≥ 0` (`c = 0` disables optimism; default 2).
    pub c: f64,
    /// Failure probability `p ∈ (0, 1]` (default 0.01).
    pub p: f64,
    /// Log factor `ι`; see [`Hyperparams::for_game`].
    pub iota: f64,
}

/// Which step total enters the log factor `ι`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IotaTotal {
    /// `T = episodes × horizon` (the default).
    EpisodesTimesHorizon,
    /// `T = episodes`.
    Episodes,
}

/// Default bonus multiplier.
pub const DEFAULT_C: f64 = 2.0;
/// Default failure probability.
pub const DEFAULT_P: f64 = 0.01;

impl Hyperparams {
    /// Derives `ι = ln(S·A·B·T/p)` from game dimensions and episode budget.
    #[allow(clippy::too_many_arguments)]
    pub fn for_game(
        horizon: usize,
        states: usize,
        max_actions: usize,
        min_actions: usize,
        episodes: u32,
        c: f64,
        p: f64,
        total: IotaTotal,
    ) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        assert!(states >= 1 && max_actions >= 1 && min_actions >= 1);
        assert!(episodes >= 1, "need at least one episode");
        assert!(c >= 0.0 && c.is_finite(), "bonus multiplier must be nonnegative");
        assert!(p > 0.0 && p <= 1.0, "failure probability must lie in (0, 1]");
        let steps = match total {
            IotaTotal::EpisodesTimesHorizon => episodes as f64 * horizon as f64,
            IotaTotal::Episodes => episodes as f64,
        };
        let iota = ((states * max_actions * min_actions) as f64 * steps / p).ln();
        Self { horizon, c, p, iota }
    }

    /// Builds hyperparameters with an explicit `ι` (mostly for tests).
    pub fn with_iota(horizon: usize, c: f64, p: f64, iota: f64) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        assert!(c >= 0.0 && c.is_finite(), "bonus multiplier must be nonnegative");
        assert!(p > 0.0 && p <= 1.0, "failure probability must lie in (0, 1]");
        assert!(iota > 0.0, "log factor must be positive");
        Self { horizon, c, p, iota }
    }
}

/// Step size `α_t = (H+1)/(H+t)` for the `t`-th visit (`t ≥ 1`).
pub fn alpha(t: u32, horizon: usize) -> f64 {
    assert!(t >= 1, "visit counts are 1-based");
    let h = horizon as f64;
    (h + 1.0) / (h + t as f64)
}

/// The unrolled weights after `t` visits.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaWeights {
    /// Weight `α_t^0` on the initial value (zero for `t ≥ 1` since `α_1 = 1`).
    pub initial: f64,
    /// Weights `α_t^1 ..= α_t^t` on the per-visit targets.
    pub per_visit: Vec<f64>,
}

impl AlphaWeights {
    /// Sum of all weights (should be 1 up to rounding).
    pub fn total(&self) -> f64 {
        self.initial + self.per_visit.iter().sum::<f64>()
    }
}

/// Computes `(α_t^0, [α_t^1, ..., α_t^t])`; `t = 0` yields weights `(1, [])`.
pub fn alpha_weights(t: u32, horizon: usize) -> AlphaWeights {
    let t = t as usize;
    let mut per_visit = vec![0.0; t];
    let mut suffix = 1.0; // Π_{j=i+1..t} (1-α_j), built from the top down.
    for i in (1..=t).rev() {
        per_visit[i - 1] = alpha(i as u32, horizon) * suffix;
        suffix *= 1.0 - alpha(i as u32, horizon);
    }
    AlphaWeights { initial: suffix, per_visit }
}

/// Q-learner bonus `β_t = c·√(H³ι/t)` (`t ≥ 1`).
pub fn beta_q(t: u32, hp: &Hyperparams) -> f64 {
    assert!(t >= 1, "visit counts are 1-based");
    let h = hp.horizon as f64;
    hp.c * (h.powi(3) * hp.iota / t as f64).sqrt()
}

/// V-learner bonus `β_t = c·√(N·H⁴ι/t)` for a player with `N` actions.
pub fn beta_v(t: u32, own_actions: usize, hp: &Hyperparams) -> f64 {
    assert!(t >= 1, "visit counts are 1-based");
    assert!(own_actions >= 1);
    let h = hp.horizon as f64;
    hp.c * (own_actions as f64 * h.powi(4) * hp.iota / t as f64).sqrt()
}

/// V-learner mixing rate `η_t = √(log N/(N·t))` for a player with `N` actions.
///
/// With a single action the rate degenerates to zero and the policy stays
/// deterministic.
pub fn eta_v(t: u32, own_actions: usize) -> f64 {
    assert!(t >= 1, "visit counts are 1-based");
    assert!(own_actions >= 1);
    ((own_actions as f64).ln() / (own_actions as f64 * t as f64)).sqrt()
}

/// Samples `i ∈ {1..t}` with probability `α_t^i` without materializing the
/// weight vector.
///
/// Scanning from `i = t` downward and accepting `i` with probability `α_i`
/// yields exactly `P(i) = α_i·Π_{j>i}(1-α_j) = α_t^i`; the scan always stops
/// because `α_1 = 1`.
pub fn sample_alpha_index(t: u32, horizon: usize, rng: &mut crate::rng::RngStream) -> u32 {
    assert!(t >= 1, "cannot sample from an empty visit list");
    for i in (2..=t).rev() {
        if rng.bernoulli(alpha(i, horizon)) {
            return i;
        }
    }
    1
}
