//! Optimistic self-play Q-learning for zero-sum Markov games.
//!
//! Both players share one learner. The learner keeps an upper table `Q̄`
//! (initialized at the horizon `H`) and a lower table `Q̲` (initialized at
//! zero); on the `t`-th visit to a cell `(h, s, a, b)` it blends in the
//! one-step target with the step size `α_t = (H+1)/(H+t)` and an exploration
//! bonus `β_t` added above and subtracted below:
//!
//! ```text
//! Q̄_h(s,a,b) ← (1-α_t)·Q̄_h(s,a,b) + α_t·(r + V̄_{h+1}(s') + β_t)
//! Q̲_h(s,a,b) ← (1-α_t)·Q̲_h(s,a,b) + α_t·(r + V̲_{h+1}(s') - β_t)
//! ```
//!
//! After every update the joint action policy at `(h, s)` is recomputed as a
//! coarse correlated equilibrium of the pair `(Q̄, Q̲)` and the state values
//! become the policy averages `V̄ = E_π Q̄`, `V̲ = E_π Q̲`. Within an
//! episode the levels update in increasing `h`, so the target at step `h`
//! reads the next level's value from the start of the episode.
//!
//! The run returns a [`HistoryQ`]: final tables plus, per `(h, s)`, the full
//! log of policy rows (tagged with the episode that wrote them) and, per
//! cell, the episodes of every visit. The certified output policies replay
//! this history, so the log is part of the learner's contract, not a debug
//! aid.

use crate::game::{MarkovGame, MarkovJointPolicy, MarkovPolicy, Side};
use crate::matrix_games::{compute_cce, Matrix};
use crate::rng::RngStream;
use crate::schedules::{alpha, beta_q, Hyperparams};

/// Options for a training run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record every per-visit update target (used to audit the streaming
    /// update against its closed-form weighted sum).
    pub record_updates: bool,
}

/// One recorded table update: the targets blended in at a visit.
#[derive(Clone, Copy, Debug)]
pub struct UpdateRecord {
    pub episode: u32,
    /// `r + V̄_{h+1}(s') + β_t` at the time of the update.
    pub up_target: f64,
    /// `r + V̲_{h+1}(s') - β_t` at the time of the update.
    pub low_target: f64,
}

/// Start-of-episode summary used for gap curves.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeRecord {
    /// `V̄_1(s_1)` before the episode ran.
    pub v_up_start: f64,
    /// `V̲_1(s_1)` before the episode ran.
    pub v_low_start: f64,
    /// Distinct `(h, s, a, b)` cells visited through the end of the episode.
    pub cells_visited: u32,
}

impl EpisodeRecord {
    /// Optimism gap `V̄_1(s_1) - V̲_1(s_1)` at the start of the episode.
    pub fn gap(&self) -> f64 {
        self.v_up_start - self.v_low_start
    }
}

/// Per-`(h, s)` log of joint policy rows; row `i` was written at
/// `episodes[i]` and is effective from episode `episodes[i] + 1`.
#[derive(Clone, Debug)]
struct PolicyLog {
    episodes: Vec<u32>,
    rows: Vec<Box<[f64]>>,
}

/// Complete record of one optimistic Q-learning run.
#[derive(Clone, Debug)]
pub struct HistoryQ {
    horizon: usize,
    states: usize,
    max_actions: usize,
    min_actions: usize,
    episodes_run: u32,
    policy_logs: Vec<PolicyLog>,
    visits: Vec<Vec<u32>>,
    q_up: Vec<f64>,
    q_low: Vec<f64>,
    v_up: Vec<f64>,
    v_low: Vec<f64>,
    episode_records: Vec<EpisodeRecord>,
    updates: Option<Vec<Vec<UpdateRecord>>>,
}

impl HistoryQ {
    /// An untrained history: uniform policies, zero visits, optimistic
    /// tables. Tests and tools can populate it through the `record_*`
    /// methods.
    pub fn with_uniform_policies(
        horizon: usize,
        states: usize,
        max_actions: usize,
        min_actions: usize,
    ) -> Self {
        let sites = horizon * states;
        let cells = sites * max_actions * min_actions;
        let uniform = vec![1.0 / (max_actions * min_actions) as f64; max_actions * min_actions];
        let policy_logs = (0..sites)
            .map(|_| PolicyLog {
                episodes: vec![0],
                rows: vec![uniform.clone().into_boxed_slice()],
            })
            .collect();
        HistoryQ {
            horizon,
            states,
            max_actions,
            min_actions,
            episodes_run: 0,
            policy_logs,
            visits: vec![Vec::new(); cells],
            q_up: vec![horizon as f64; cells],
            q_low: vec![0.0; cells],
            v_up: vec![horizon as f64; sites],
            v_low: vec![0.0; sites],
            episode_records: Vec::new(),
            updates: None,
        }
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

    pub fn episodes_run(&self) -> u32 {
        self.episodes_run
    }

    pub fn episode_records(&self) -> &[EpisodeRecord] {
        &self.episode_records
    }

    #[inline]
    fn site(&self, h: usize, s: usize) -> usize {
        debug_assert!(h < self.horizon && s < self.states);
        h * self.states + s
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize, b: usize) -> usize {
        debug_assert!(a < self.max_actions && b < self.min_actions);
        (self.site(h, s) * self.max_actions + a) * self.min_actions + b
    }

    pub fn q_up_at(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.q_up[self.cell(h, s, a, b)]
    }

    pub fn q_low_at(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.q_low[self.cell(h, s, a, b)]
    }

    pub fn v_up_at(&self, h: usize, s: usize) -> f64 {
        self.v_up[self.site(h, s)]
    }

    pub fn v_low_at(&self, h: usize, s: usize) -> f64 {
        self.v_low[self.site(h, s)]
    }

    /// Episodes (1-based, ascending) in which `(h, s, a, b)` was visited.
    pub fn visit_episodes(&self, h: usize, s: usize, a: usize, b: usize) -> &[u32] {
        &self.visits[self.cell(h, s, a, b)]
    }

    /// Number of visits to `(h, s, a, b)` strictly before episode `k`.
    pub fn visits_before(&self, h: usize, s: usize, a: usize, b: usize, k: u32) -> u32 {
        self.visits[self.cell(h, s, a, b)].partition_point(|&e| e < k) as u32
    }

    /// The joint policy row `(a, b) ↦ π(a, b | s)` that episode `k`
    /// (1-based) sampled from: the last row written before episode `k`.
    pub fn policy_row_at(&self, h: usize, s: usize, k: u32) -> &[f64] {
        let log = &self.policy_logs[self.site(h, s)];
        let idx = log.episodes.partition_point(|&e| e < k);
        debug_assert!(idx >= 1, "the initial row is always effective");
        &log.rows[idx - 1]
    }

    /// The most recently written joint policy row at `(h, s)`.
    pub fn latest_policy_row(&self, h: usize, s: usize) -> &[f64] {
        let log = &self.policy_logs[self.site(h, s)];
        log.rows.last().expect("log always holds the initial row")
    }

    /// The latest joint policy over all states.
    pub fn latest_joint_policy(&self) -> MarkovJointPolicy {
        let mut joint = MarkovJointPolicy::uniform(
            self.horizon,
            self.states,
            self.max_actions,
            self.min_actions,
        );
        for h in 0..self.horizon {
            for s in 0..self.states {
                joint.row_mut(h, s).copy_from_slice(self.latest_policy_row(h, s));
            }
        }
        joint
    }

    /// Per-side marginal of the latest joint policy.
    pub fn latest_marginal(&self, side: Side) -> MarkovPolicy {
        let actions = match side {
            Side::Max => self.max_actions,
            Side::Min => self.min_actions,
        };
        let mut policy = MarkovPolicy::uniform(side, self.horizon, self.states, actions);
        for h in 0..self.horizon {
            for s in 0..self.states {
                let (mu, nu) = MarkovJointPolicy::marginals(
                    self.latest_policy_row(h, s),
                    self.max_actions,
                    self.min_actions,
                );
                policy.row_mut(h, s).copy_from_slice(match side {
                    Side::Max => &mu,
                    Side::Min => &nu,
                });
            }
        }
        policy
    }

    /// Full policy-row log at `(h, s)`: `(episode, row)` pairs in recording
    /// order, starting with the initial uniform row at episode 0.
    pub fn policy_log(&self, h: usize, s: usize) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        let log = &self.policy_logs[self.site(h, s)];
        log.episodes.iter().copied().zip(log.rows.iter().map(|r| r.as_ref()))
    }

    /// Recorded update targets for a cell, if the run logged them.
    pub fn update_records(
        &self,
        h: usize,
        s: usize,
        a: usize,
        b: usize,
    ) -> Option<&[UpdateRecord]> {
        let cell = self.cell(h, s, a, b);
        self.updates.as_ref().map(|u| u[cell].as_slice())
    }

    /// Appends a policy row written during `episode` (effective from the
    /// next episode).
    pub fn record_policy_row(&mut self, h: usize, s: usize, episode: u32, row: Vec<f64>) {
        assert_eq!(row.len(), self.max_actions * self.min_actions);
        let site = self.site(h, s);
        let log = &mut self.policy_logs[site];
        assert!(
            *log.episodes.last().unwrap() <= episode,
            "policy rows must be recorded in episode order"
        );
        log.episodes.push(episode);
        log.rows.push(row.into_boxed_slice());
    }

    /// Appends a visit to `(h, s, a, b)` during `episode`.
    pub fn record_visit(&mut self, h: usize, s: usize, a: usize, b: usize, episode: u32) {
        let cell = self.cell(h, s, a, b);
        if let Some(last) = self.visits[cell].last() {
            assert!(*last < episode, "visits must be recorded in episode order");
        }
        self.visits[cell].push(episode);
    }

    /// Marks the history as covering episodes `1..=episodes`.
    pub fn set_episodes_run(&mut self, episodes: u32) {
        self.episodes_run = episodes;
    }
}

/// Analytic ceiling on `Q̄`: every target is at most `1 + V̄_max + β_1` and
/// values never exceed the running maximum of the tables, so
/// `Q̄ ≤ H·(1 + β_1)` throughout.
fn q_up_ceiling(horizon: usize, hp: &Hyperparams) -> f64 {
    let h = horizon as f64;
    h * (1.0 + beta_q(1, hp)) + 1e-6
}

/// Analytic floor on `Q̲`: targets are at least `-β_1` level by level, so
/// `Q̲ ≥ -H·β_1` throughout.
fn q_low_floor(horizon: usize, hp: &Hyperparams) -> f64 {
    -(horizon as f64) * beta_q(1, hp) - 1e-6
}

/// Runs optimistic Q-learning self-play for `episodes` episodes.
pub fn run_nash_q(
    game: &MarkovGame,
    episodes: u32,
    hp: &Hyperparams,
    options: &RunOptions,
    rng: &mut RngStream,
) -> HistoryQ {
    assert_eq!(hp.horizon, game.horizon(), "hyperparameters sized for a different horizon");
    let horizon = game.horizon();
    let states = game.states();
    let a_count = game.max_actions();
    let b_count = game.min_actions();
    let mut hist = HistoryQ::with_uniform_policies(horizon, states, a_count, b_count);
    if options.record_updates {
        hist.updates = Some(vec![Vec::new(); hist.q_up.len()]);
    }
    hist.episode_records.reserve(episodes as usize);
    let ceiling = q_up_ceiling(horizon, hp);
    let floor = q_low_floor(horizon, hp);
    let mut distinct_cells: u32 = 0;

    for k in 1..=episodes {
        let s1 = game.initial_state();
        let start_site = hist.site(0, s1);
        let v_up_start = hist.v_up[start_site];
        let v_low_start = hist.v_low[start_site];
        let mut s = s1;
        for h in 0..horizon {
            let site = hist.site(h, s);
            let pair = {
                let row = hist.policy_logs[site].rows.last().unwrap();
                rng.categorical(row)
            };
            let (a, b) = (pair / b_count, pair % b_count);
            let r = game.reward(h, s, a, b);
            let s_next = rng.categorical(game.transition_row(h, s, a, b));

            let cell = hist.cell(h, s, a, b);
            hist.visits[cell].push(k);
            let t = hist.visits[cell].len() as u32;
            if t == 1 {
                distinct_cells += 1;
            }
            let step = alpha(t, horizon);
            let bonus = beta_q(t, hp);
            // Step h+1 has not run yet, so these reads see the next level as
            // it stood when the episode began.
            let (v_up_next, v_low_next) = if h + 1 < horizon {
                let next_site = hist.site(h + 1, s_next);
                (hist.v_up[next_site], hist.v_low[next_site])
            } else {
                (0.0, 0.0)
            };
            let up_target = r + v_up_next + bonus;
            let low_target = r + v_low_next - bonus;
            hist.q_up[cell] = (1.0 - step) * hist.q_up[cell] + step * up_target;
            hist.q_low[cell] = (1.0 - step) * hist.q_low[cell] + step * low_target;
            assert!(
                hist.q_up[cell] >= hist.q_low[cell] - 1e-9,
                "upper table fell below lower table at (h={h}, s={s}, a={a}, b={b})"
            );
            assert!(
                hist.q_up[cell] <= ceiling && hist.q_low[cell] >= floor,
                "table left its analytic range at (h={h}, s={s}, a={a}, b={b}): \
                 up={} low={} ceiling={ceiling} floor={floor}",
                hist.q_up[cell],
                hist.q_low[cell]
            );
            if let Some(updates) = &mut hist.updates {
                updates[cell].push(UpdateRecord { episode: k, up_target, low_target });
            }

            let q_up_m = Matrix::from_fn(a_count, b_count, |i, j| hist.q_up[hist.cell(h, s, i, j)]);
            let q_low_m =
                Matrix::from_fn(a_count, b_count, |i, j| hist.q_low[hist.cell(h, s, i, j)]);
            let joint = compute_cce(&q_up_m, &q_low_m).expect("tables share one shape");
            let mut v_up_new = 0.0;
            let mut v_low_new = 0.0;
            for i in 0..a_count {
                for j in 0..b_count {
                    let w = joint.get(i, j);
                    v_up_new += w * hist.q_up[hist.cell(h, s, i, j)];
                    v_low_new += w * hist.q_low[hist.cell(h, s, i, j)];
                }
            }
            hist.v_up[site] = v_up_new;
            hist.v_low[site] = v_low_new;
            let log = &mut hist.policy_logs[site];
            log.episodes.push(k);
            log.rows.push(joint.weights.into_boxed_slice());

            s = s_next;
        }
        hist.episode_records.push(EpisodeRecord {
            v_up_start,
            v_low_start,
            cells_visited: distinct_cells,
        });
    }
    hist.episodes_run = episodes;
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::make_random_game;
    use crate::schedules::alpha_weights;

    fn constant_game(horizon: usize, reward: f64) -> MarkovGame {
        // One state, one action per side.
        MarkovGame::new(horizon, 1, 1, 1, 0, vec![1.0; horizon], vec![reward; horizon]).unwrap()
    }

    #[test]
    fn single_cell_matches_weighted_closed_form() {
        // With one state and one action every episode visits the same cell,
        // so after k episodes the tables must equal the weighted sum of the
        // per-visit targets under the visit weights.
        let game = constant_game(1, 0.7);
        let hp = Hyperparams::with_iota(1, 2.0, 0.01, 1.5);
        let mut rng = RngStream::from_seed(11);
        let episodes = 50;
        let hist = run_nash_q(&game, episodes, &hp, &RunOptions::default(), &mut rng);
        let w = alpha_weights(episodes, 1);
        let mut expect_up = w.initial * 1.0;
        let mut expect_low = 0.0;
        for i in 1..=episodes {
            let weight = w.per_visit[(i - 1) as usize];
            expect_up += weight * (0.7 + beta_q(i, &hp));
            expect_low += weight * (0.7 - beta_q(i, &hp));
        }
        assert!((hist.q_up_at(0, 0, 0, 0) - expect_up).abs() < 1e-9);
        assert!((hist.q_low_at(0, 0, 0, 0) - expect_low).abs() < 1e-9);
        // One action per side: values equal the tables.
        assert!((hist.v_up_at(0, 0) - expect_up).abs() < 1e-9);
        assert!((hist.v_low_at(0, 0) - expect_low).abs() < 1e-9);
    }

    #[test]
    fn first_episode_blends_initial_next_values() {
        // α_1 = 1, so after the very first episode the visited cells hold
        // exactly their targets: the last level sees a zero continuation,
        // inner levels see the optimistic initialization H of the next
        // level (the next level updates only after this one reads it).
        let mut rng = RngStream::from_seed(4);
        let game = make_random_game(2, 3, 2, 2, &mut rng);
        let hp = Hyperparams::for_game(
            2,
            3,
            2,
            2,
            1,
            crate::schedules::DEFAULT_C,
            crate::schedules::DEFAULT_P,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let mut run_rng = RngStream::from_seed(7);
        let hist = run_nash_q(&game, 1, &hp, &RunOptions::default(), &mut run_rng);
        let mut seen = 0;
        for h in 0..2 {
            for s in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        if hist.visit_episodes(h, s, a, b) == [1] {
                            seen += 1;
                            let r = game.reward(h, s, a, b);
                            let cont = if h == 0 { 2.0 } else { 0.0 };
                            let expect_up = r + cont + beta_q(1, &hp);
                            let expect_low = r + 0.0 - beta_q(1, &hp);
                            assert!((hist.q_up_at(h, s, a, b) - expect_up).abs() < 1e-12);
                            assert!((hist.q_low_at(h, s, a, b) - expect_low).abs() < 1e-12);
                        }
                    }
                }
            }
        }
        assert_eq!(seen, 2, "one cell per level is visited in one episode");
    }

    #[test]
    fn streaming_update_matches_recorded_decomposition() {
        let mut rng = RngStream::from_seed(21);
        let game = make_random_game(2, 2, 2, 2, &mut rng);
        let hp = Hyperparams::for_game(
            2,
            2,
            2,
            2,
            300,
            2.0,
            0.01,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let mut run_rng = RngStream::from_seed(22);
        let hist = run_nash_q(&game, 300, &hp, &RunOptions { record_updates: true }, &mut run_rng);
        let mut total_records = 0;
        for h in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let records = hist.update_records(h, s, a, b).unwrap();
                        let t = records.len() as u32;
                        if t == 0 {
                            assert_eq!(hist.q_up_at(h, s, a, b), 2.0);
                            assert_eq!(hist.q_low_at(h, s, a, b), 0.0);
                            continue;
                        }
                        total_records += records.len();
                        let w = alpha_weights(t, 2);
                        let mut up = w.initial * 2.0;
                        let mut low = 0.0;
                        for (i, rec) in records.iter().enumerate() {
                            up += w.per_visit[i] * rec.up_target;
                            low += w.per_visit[i] * rec.low_target;
                        }
                        assert!((hist.q_up_at(h, s, a, b) - up).abs() < 1e-9);
                        assert!((hist.q_low_at(h, s, a, b) - low).abs() < 1e-9);
                    }
                }
            }
        }
        // One cell per level per episode, however concentrated the policy is.
        assert_eq!(total_records, 600);
    }

    #[test]
    fn values_are_policy_averages_of_tables() {
        let mut rng = RngStream::from_seed(31);
        let game = make_random_game(3, 2, 2, 3, &mut rng);
        let hp = Hyperparams::for_game(
            3,
            2,
            2,
            3,
            200,
            2.0,
            0.01,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let mut run_rng = RngStream::from_seed(32);
        let hist = run_nash_q(&game, 200, &hp, &RunOptions::default(), &mut run_rng);
        for h in 0..3 {
            for s in 0..2 {
                let row = hist.latest_policy_row(h, s);
                let mut v_up = 0.0;
                let mut v_low = 0.0;
                for a in 0..2 {
                    for b in 0..3 {
                        let w = row[a * 3 + b];
                        v_up += w * hist.q_up_at(h, s, a, b);
                        v_low += w * hist.q_low_at(h, s, a, b);
                    }
                }
                assert!((hist.v_up_at(h, s) - v_up).abs() < 1e-9);
                assert!((hist.v_low_at(h, s) - v_low).abs() < 1e-9);
                assert!(hist.v_up_at(h, s) >= hist.v_low_at(h, s) - 1e-9);
            }
        }
    }

    #[test]
    fn policy_log_and_visit_lists_are_consistent() {
        let mut rng = RngStream::from_seed(41);
        let game = make_random_game(1, 1, 2, 2, &mut rng);
        let hp = Hyperparams::for_game(
            1,
            1,
            2,
            2,
            5,
            2.0,
            0.01,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let mut run_rng = RngStream::from_seed(42);
        let hist = run_nash_q(&game, 5, &hp, &RunOptions::default(), &mut run_rng);

        // Episode 1 samples from the initial uniform row.
        let first = hist.policy_row_at(0, 0, 1);
        for w in first {
            assert!((w - 0.25).abs() < 1e-15);
        }
        // State (0, 0) is visited every episode, so the row effective at
        // episode k+1 is the one written at episode k.
        for k in 1..=4u32 {
            let written = {
                let log = &hist.policy_logs[0];
                let idx = log.episodes.iter().position(|&e| e == k).unwrap();
                log.rows[idx].clone()
            };
            assert_eq!(hist.policy_row_at(0, 0, k + 1), &written[..]);
        }
        // Exactly one visit per episode across the four cells.
        let mut all: Vec<u32> = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                all.extend_from_slice(hist.visit_episodes(0, 0, a, b));
            }
        }
        all.sort_unstable();
        assert_eq!(all, vec![1, 2, 3, 4, 5]);
        // visits_before agrees with the lists.
        let direct: u32 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| hist.visits_before(0, 0, a, b, 4))
            .sum();
        assert_eq!(direct, 3);
    }

    #[test]
    fn start_values_tighten_and_stay_ordered() {
        let mut rng = RngStream::from_seed(51);
        let game = make_random_game(2, 2, 2, 2, &mut rng);
        let hp = Hyperparams::for_game(
            2,
            2,
            2,
            2,
            2000,
            2.0,
            0.01,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let mut run_rng = RngStream::from_seed(52);
        let hist = run_nash_q(&game, 2000, &hp, &RunOptions::default(), &mut run_rng);
        let records = hist.episode_records();
        assert_eq!(records.len(), 2000);
        for rec in records {
            assert!(rec.gap() >= -1e-9);
        }
        let early: f64 = records[..100].iter().map(EpisodeRecord::gap).sum::<f64>() / 100.0;
        let late: f64 = records[1900..].iter().map(EpisodeRecord::gap).sum::<f64>() / 100.0;
        assert!(late < early, "the optimism gap should shrink: early={early} late={late}");
        assert_eq!(records[0].v_up_start, 2.0);
        assert_eq!(records[0].v_low_start, 0.0);
    }

    #[test]
    fn reruns_with_same_seed_are_identical() {
        let mut rng = RngStream::from_seed(61);
        let game = make_random_game(2, 3, 2, 2, &mut rng);
        let hp = Hyperparams::for_game(
            2,
            3,
            2,
            2,
            100,
            2.0,
            0.01,
            crate::schedules::IotaTotal::EpisodesTimesHorizon,
        );
        let run = |seed: u64| {
            let mut r = RngStream::from_seed(seed);
            run_nash_q(&game, 100, &hp, &RunOptions::default(), &mut r)
        };
        let first = run(9);
        let second = run(9);
        let third = run(10);
        assert_eq!(first.q_up, second.q_up);
        assert_eq!(first.q_low, second.q_low);
        assert_eq!(first.visits, second.visits);
        assert_ne!(first.q_up, third.q_up);
    }
}
