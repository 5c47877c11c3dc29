//! One-shot matrix games: exact zero-sum values and coarse correlated
//! equilibria.
//!
//! `solve_zero_sum` computes the minimax value and a pair of optimal mixed
//! strategies by linear programming. `compute_cce` returns a joint action
//! distribution under which neither player gains by deviating to any fixed
//! action, where the max-player's incentives are measured on one payoff
//! matrix and the min-player's on another (the learners call it with their
//! optimistic and pessimistic estimates). When both matrices coincide, the
//! marginals of the returned joint distribution form a Nash pair of the
//! zero-sum game — callers rely on that collapse.

use thiserror::Error;

use crate::linprog::{Goal, LinearProgram, Relation};

/// A dense row-major payoff matrix (row player maximizes, column player
/// minimizes).
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum MatrixGameError {
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {got}")]
    BadShape { rows: usize, cols: usize, expected: usize, got: usize },
    #[error("matrices disagree in shape: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("matrix entry ({0}, {1}) is not finite")]
    NonFinite(usize, usize),
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixGameError> {
        assert!(rows >= 1 && cols >= 1);
        if data.len() != rows * cols {
            return Err(MatrixGameError::BadShape {
                rows,
                cols,
                expected: rows * cols,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixGameError::NonFinite(i / cols, i % cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, data).expect("from_fn produces the right shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn min_entry(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// A mixed strategy over one player's actions.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedStrategy {
    pub weights: Vec<f64>,
}

impl MixedStrategy {
    /// True when nonnegative and summing to one within `tol`.
    pub fn is_distribution(&self, tol: f64) -> bool {
        self.weights.iter().all(|&w| w >= -tol && w.is_finite())
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Expected payoff row `Σ_a w_a·Q[a][·]` against each opposing action.
    pub fn payoffs_as_rows(&self, q: &Matrix) -> Vec<f64> {
        (0..q.cols()).map(|b| (0..q.rows()).map(|a| self.weights[a] * q.get(a, b)).sum()).collect()
    }

    /// Expected payoff column `Σ_b w_b·Q[·][b]` against each of our actions.
    pub fn payoffs_as_cols(&self, q: &Matrix) -> Vec<f64> {
        (0..q.rows()).map(|a| (0..q.cols()).map(|b| self.weights[b] * q.get(a, b)).sum()).collect()
    }
}

/// Minimax value and optimal strategies of a zero-sum matrix game.
#[derive(Clone, Debug)]
pub struct ZeroSumSolution {
    pub value: f64,
    pub max_strategy: MixedStrategy,
    pub min_strategy: MixedStrategy,
}

/// Clamps simplex round-off below zero and renormalizes to a distribution.
///
/// LP variables are nonnegative only up to the solver's feasibility
/// tolerance (`1e-8`); a weight a couple of orders beyond that is a genuine
/// solver failure and aborts.
fn into_distribution(mut weights: Vec<f64>) -> Vec<f64> {
    for w in &mut weights {
        assert!(*w >= -1e-6, "solver produced a substantially negative weight {w}");
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "solver produced an all-zero weight vector");
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Solves the zero-sum game exactly (up to simplex arithmetic).
///
/// Both players' strategies come from a pair of covering programs on the
/// positively shifted matrix; the two optimal values must agree, and the
/// returned strategies are audited to leave at most `1e-8` of exploitable
/// slack. Any LP failure here is an internal bug, so it aborts loudly.
pub fn solve_zero_sum(q: &Matrix) -> ZeroSumSolution {
    // Shift entries to be >= 1 so the game value is strictly positive and the
    // covering form below is feasible and bounded.
    let shift = 1.0 - q.min_entry();
    let (rows, cols) = (q.rows(), q.cols());

    // Min-player: maximize Σy subject to (Q + shift)·y <= 1 per row.
    let mut lp = LinearProgram::new(cols, Goal::Maximize, vec![1.0; cols]);
    for a in 0..rows {
        lp.constrain((0..cols).map(|b| q.get(a, b) + shift).collect(), Relation::Le, 1.0);
    }
    let sol = lp.solve().unwrap_or_else(|e| panic!("zero-sum covering program failed: {e}"));
    let scale = sol.objective;
    assert!(scale > 0.0, "covering optimum must be positive");
    let min_strategy =
        MixedStrategy { weights: into_distribution(sol.x.iter().map(|y| y / scale).collect()) };
    let value = 1.0 / scale - shift;

    // Max-player: minimize Σx subject to xᵀ(Q + shift) >= 1 per column.
    let mut lp = LinearProgram::new(rows, Goal::Minimize, vec![1.0; rows]);
    for b in 0..cols {
        lp.constrain((0..rows).map(|a| q.get(a, b) + shift).collect(), Relation::Ge, 1.0);
    }
    let sol = lp.solve().unwrap_or_else(|e| panic!("zero-sum packing program failed: {e}"));
    let scale_x = sol.objective;
    assert!(scale_x > 0.0);
    let max_strategy =
        MixedStrategy { weights: into_distribution(sol.x.iter().map(|x| x / scale_x).collect()) };
    let dual_value = 1.0 / scale_x - shift;
    assert!(
        (value - dual_value).abs() <= 1e-8 * (1.0 + value.abs()),
        "primal and dual game values diverged: {value} vs {dual_value}"
    );

    // Audit: neither pure deviation may beat the value beyond tolerance.
    let worst_for_min = max_strategy.payoffs_as_rows(q).into_iter().fold(f64::INFINITY, f64::min);
    let best_for_max =
        min_strategy.payoffs_as_cols(q).into_iter().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        best_for_max <= value + 1e-8 && worst_for_min >= value - 1e-8,
        "zero-sum solution failed its optimality audit: value {value}, best response band [{worst_for_min}, {best_for_max}]"
    );

    ZeroSumSolution { value, max_strategy, min_strategy }
}

/// A joint distribution over action pairs, flattened as `a·cols + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
}

impl JointDistribution {
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.cols + b]
    }

    pub fn is_distribution(&self, tol: f64) -> bool {
        self.weights.iter().all(|&w| w >= -tol && w.is_finite())
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Per-player marginals of a joint distribution.
pub fn cce_marginals(joint: &JointDistribution) -> (MixedStrategy, MixedStrategy) {
    let mut mu = vec![0.0; joint.rows];
    let mut nu = vec![0.0; joint.cols];
    for a in 0..joint.rows {
        for b in 0..joint.cols {
            let w = joint.get(a, b);
            mu[a] += w;
            nu[b] += w;
        }
    }
    (MixedStrategy { weights: mu }, MixedStrategy { weights: nu })
}

/// Worst remaining deviation incentives of a joint distribution: the
/// max-player's best fixed-action gain measured on `q_up` and the
/// min-player's on `q_low`. Nonpositive values (up to tolerance) certify the
/// equilibrium property.
pub fn cce_residuals(q_up: &Matrix, q_low: &Matrix, joint: &JointDistribution) -> (f64, f64) {
    let (mu, nu) = cce_marginals(joint);
    let mut mean_up = 0.0;
    let mut mean_low = 0.0;
    for a in 0..joint.rows {
        for b in 0..joint.cols {
            let w = joint.get(a, b);
            mean_up += w * q_up.get(a, b);
            mean_low += w * q_low.get(a, b);
        }
    }
    let best_up = nu.payoffs_as_cols(q_up).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let best_low = mu.payoffs_as_rows(q_low).into_iter().fold(f64::INFINITY, f64::min);
    (best_up - mean_up, mean_low - best_low)
}

/// Computes a coarse correlated equilibrium for the pair `(q_up, q_low)`.
///
/// The returned joint distribution maximizes the smallest deviation slack, so
/// the outcome is a deterministic vertex of the feasible polytope. One always
/// exists: a Nash point of the bimatrix game `(q_up, -q_low)` is feasible
/// with slack zero. Internal LP failure aborts loudly.
pub fn compute_cce(q_up: &Matrix, q_low: &Matrix) -> Result<JointDistribution, MatrixGameError> {
    if q_up.rows() != q_low.rows() || q_up.cols() != q_low.cols() {
        return Err(MatrixGameError::ShapeMismatch(
            q_up.rows(),
            q_up.cols(),
            q_low.rows(),
            q_low.cols(),
        ));
    }
    let (rows, cols) = (q_up.rows(), q_up.cols());
    let cells = rows * cols;
    // Variables: the joint weights followed by the slack to maximize.
    let mut objective = vec![0.0; cells + 1];
    objective[cells] = 1.0;
    let mut lp = LinearProgram::new(cells + 1, Goal::Maximize, objective);
    // Max-player: E[q_up] - Σ_b marg(b)·q_up(a*, b) >= slack for every a*.
    for a_star in 0..rows {
        let mut coeffs = vec![0.0; cells + 1];
        for a in 0..rows {
            for b in 0..cols {
                coeffs[a * cols + b] = q_up.get(a, b) - q_up.get(a_star, b);
            }
        }
        coeffs[cells] = -1.0;
        lp.constrain(coeffs, Relation::Ge, 0.0);
    }
    // Min-player: Σ_a marg(a)·q_low(a, b*) - E[q_low] >= slack for every b*.
    for b_star in 0..cols {
        let mut coeffs = vec![0.0; cells + 1];
        for a in 0..rows {
            for b in 0..cols {
                coeffs[a * cols + b] = q_low.get(a, b_star) - q_low.get(a, b);
            }
        }
        coeffs[cells] = -1.0;
        lp.constrain(coeffs, Relation::Ge, 0.0);
    }
    lp.constrain(
        (0..cells + 1).map(|i| if i < cells { 1.0 } else { 0.0 }).collect(),
        Relation::Eq,
        1.0,
    );
    let sol = lp
        .solve()
        .unwrap_or_else(|e| panic!("equilibrium program failed — this cannot happen: {e}"));
    let joint =
        JointDistribution { rows, cols, weights: into_distribution(sol.x[..cells].to_vec()) };
    debug_assert!(joint.is_distribution(1e-9));
    Ok(joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn matching_pennies() {
        let q = Matrix::new(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 0.0, 1e-10);
        assert_close(sol.max_strategy.weights[0], 0.5, 1e-10);
        assert_close(sol.min_strategy.weights[0], 0.5, 1e-10);
    }

    #[test]
    fn fully_mixed_two_by_two() {
        // Interior equilibrium: value (ad-bc)/(a+d-b-c) = 0.42/0.9.
        let q = Matrix::new(2, 2, vec![0.8, 0.2, 0.3, 0.6]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 0.42 / 0.9, 1e-10);
        assert_close(sol.max_strategy.weights[0], 1.0 / 3.0, 1e-10);
        assert_close(sol.max_strategy.weights[1], 2.0 / 3.0, 1e-10);
        assert_close(sol.min_strategy.weights[0], 4.0 / 9.0, 1e-10);
        assert_close(sol.min_strategy.weights[1], 5.0 / 9.0, 1e-10);
    }

    #[test]
    fn saddle_point_game() {
        // Row 0 dominates row 1; column 1 then dominates column 0.
        let q = Matrix::new(2, 2, vec![3.0, 1.0, 2.0, 0.0]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 1.0, 1e-10);
        assert_close(sol.max_strategy.weights[0], 1.0, 1e-10);
        assert_close(sol.min_strategy.weights[1], 1.0, 1e-10);
    }

    #[test]
    fn degenerate_shapes() {
        let q = Matrix::new(1, 1, vec![0.7]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 0.7, 1e-12);

        let q = Matrix::new(1, 3, vec![0.5, 0.2, 0.9]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 0.2, 1e-10);
        assert_close(sol.min_strategy.weights[1], 1.0, 1e-10);

        let q = Matrix::new(3, 1, vec![0.5, 0.2, 0.9]).unwrap();
        let sol = solve_zero_sum(&q);
        assert_close(sol.value, 0.9, 1e-10);
        assert_close(sol.max_strategy.weights[2], 1.0, 1e-10);
    }

    #[test]
    fn transpose_negation_duality() {
        let mut rng = RngStream::from_seed(17);
        for trial in 0..200 {
            let rows = 1 + rng.uniform_usize(4);
            let cols = 1 + rng.uniform_usize(4);
            let q = Matrix::from_fn(rows, cols, |_, _| 4.0 * rng.next_f64() - 2.0);
            let sol = solve_zero_sum(&q);
            assert!(sol.max_strategy.is_distribution(1e-9));
            assert!(sol.min_strategy.is_distribution(1e-9));
            // Swapping the players negates and transposes the payoff matrix.
            let neg_t = Matrix::from_fn(cols, rows, |i, j| -q.get(j, i));
            let dual = solve_zero_sum(&neg_t);
            assert_close(sol.value, -dual.value, 1e-8);
            // And the optimal strategies swap roles; audit by exploitability.
            let worst = dual
                .min_strategy
                .payoffs_as_cols(&neg_t)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= -sol.value + 1e-8, "trial {trial}");
        }
    }

    #[test]
    fn cce_on_identical_inputs_yields_nash_marginals() {
        let mut rng = RngStream::from_seed(23);
        for _ in 0..60 {
            let rows = 1 + rng.uniform_usize(3);
            let cols = 1 + rng.uniform_usize(3);
            let q = Matrix::from_fn(rows, cols, |_, _| 3.0 * rng.next_f64());
            let joint = compute_cce(&q, &q).unwrap();
            assert!(joint.is_distribution(1e-9));
            let (up, low) = cce_residuals(&q, &q, &joint);
            assert!(up <= 1e-8 && low <= 1e-8, "residuals {up} {low}");
            // Marginals must form a Nash pair: neither side can beat the
            // game value against them.
            let sol = solve_zero_sum(&q);
            let (mu, nu) = cce_marginals(&joint);
            let best_vs_nu = nu.payoffs_as_cols(&q).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let best_vs_mu = mu.payoffs_as_rows(&q).into_iter().fold(f64::INFINITY, f64::min);
            assert!(best_vs_nu <= sol.value + 1e-8);
            assert!(best_vs_mu >= sol.value - 1e-8);
        }
    }

    #[test]
    fn cce_marginals_on_pennies() {
        let q = Matrix::new(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let joint = compute_cce(&q, &q).unwrap();
        let (mu, nu) = cce_marginals(&joint);
        assert_close(mu.weights[0], 0.5, 1e-9);
        assert_close(nu.weights[0], 0.5, 1e-9);
    }

    #[test]
    fn cce_with_split_estimates() {
        // Optimistic and pessimistic inputs differ; the joint must satisfy
        // both players' no-deviation audits on their own matrices.
        let mut rng = RngStream::from_seed(29);
        for _ in 0..60 {
            let rows = 1 + rng.uniform_usize(3);
            let cols = 1 + rng.uniform_usize(3);
            let q = Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.next_f64());
            let bonus = 0.5 * rng.next_f64();
            let q_up = Matrix::from_fn(rows, cols, |a, b| q.get(a, b) + bonus);
            let q_low = Matrix::from_fn(rows, cols, |a, b| q.get(a, b) - bonus);
            let joint = compute_cce(&q_up, &q_low).unwrap();
            assert!(joint.is_distribution(1e-9));
            let (up, low) = cce_residuals(&q_up, &q_low, &joint);
            assert!(up <= 1e-8 && low <= 1e-8, "residuals {up} {low}");
        }
    }

    #[test]
    fn cce_constant_matrix_still_valid() {
        let q = Matrix::from_fn(2, 3, |_, _| 1.25);
        let joint = compute_cce(&q, &q).unwrap();
        assert!(joint.is_distribution(1e-9));
        let (up, low) = cce_residuals(&q, &q, &joint);
        assert!(up.abs() <= 1e-9 && low.abs() <= 1e-9);
    }

    #[test]
    fn cce_shape_mismatch_is_reported() {
        let a = Matrix::from_fn(2, 2, |_, _| 0.0);
        let b = Matrix::from_fn(2, 3, |_, _| 0.0);
        assert!(matches!(compute_cce(&a, &b), Err(MatrixGameError::ShapeMismatch(..))));
    }

    #[test]
    fn cce_is_deterministic() {
        let q_up = Matrix::new(2, 2, vec![1.4, 0.3, 0.2, 1.1]).unwrap();
        let q_low = Matrix::new(2, 2, vec![1.0, 0.1, 0.0, 0.9]).unwrap();
        let j1 = compute_cce(&q_up, &q_low).unwrap();
        let j2 = compute_cce(&q_up, &q_low).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn cce_survives_a_degenerate_pivot_sequence() {
        // A matched pair whose equilibrium program once drove the solver onto
        // a noise-sized pivot element, corrupting the tableau into a phantom
        // infeasibility. Matched pairs force the deviation slack to exactly
        // zero, the maximally degenerate case.
        let q = Matrix::new(
            4,
            5,
            vec![
                2.309840132996383,
                0.550917826347604,
                2.219870502861877,
                0.5927008603667492,
                2.133851226763267,
                2.7266881435525643,
                0.5678215132790823,
                0.5086820674629413,
                1.403822854757796,
                2.398084069676556,
                2.6028195181135194,
                1.4479450396092859,
                2.640024113107332,
                1.052347936042882,
                1.4567466455980735,
                0.14019489852676303,
                0.8077049697995838,
                0.240950005792832,
                0.5653013726059992,
                0.730507808293851,
            ],
        )
        .unwrap();
        let joint = compute_cce(&q, &q).unwrap();
        assert!(joint.is_distribution(1e-9));
        let (up, low) = cce_residuals(&q, &q, &joint);
        assert!(up <= 1e-8 && low <= 1e-8, "residuals {up} {low}");
    }
}
