//! A small dense linear-program solver.
//!
//! Two-phase primal simplex on an explicit tableau. Columns enter by Bland's
//! rule; rows leave by a stability-first ratio test that refuses noise-sized
//! pivot elements and breaks near-ties toward the largest coefficient, which
//! keeps the tableau healthy through the heavily degenerate pivots that
//! equilibrium constructions produce (many zero right-hand sides). Problems
//! in this crate are tiny — a handful of rows and columns — so no sparsity or
//! factorization is attempted.

use thiserror::Error;

/// Constraint sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// Optimization direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Maximize,
    Minimize,
}

/// A linear program over nonnegative variables.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    vars: usize,
    goal: Goal,
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    relations: Vec<Relation>,
    rhs: Vec<f64>,
}

/// Optimal vertex returned by [`LinearProgram::solve`].
#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Values of the structural variables.
    pub x: Vec<f64>,
    /// Objective value at the vertex.
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("objective is unbounded")]
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-8;
/// Smallest pivot element the ratio test will divide by while any larger one
/// is available. Dividing a row by an entry that is itself round-off noise
/// (just above `PIVOT_TOL`) amplifies that noise by up to twelve orders of
/// magnitude and corrupts the tableau.
const STABLE_PIVOT: f64 = 1e-9;
/// Relative window within which two ratios count as tied.
const RATIO_TIE: f64 = 1e-9;

impl LinearProgram {
    /// Starts a program with `vars` nonnegative structural variables.
    pub fn new(vars: usize, goal: Goal, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), vars);
        Self { vars, goal, objective, rows: Vec::new(), relations: Vec::new(), rhs: Vec::new() }
    }

    /// Adds the constraint `coeffs · x REL rhs`.
    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.vars);
        self.rows.push(coeffs);
        self.relations.push(relation);
        self.rhs.push(rhs);
    }

    /// Runs two-phase simplex and returns an optimal vertex.
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let m = self.rows.len();
        let n = self.vars;

        // Normalize to nonnegative right-hand sides, then attach one slack or
        // surplus column per inequality and one artificial column per row
        // that lacks an identity column (Ge and Eq rows).
        let mut rows = self.rows.clone();
        let mut relations = self.relations.clone();
        let mut rhs = self.rhs.clone();
        for i in 0..m {
            if rhs[i] < 0.0 {
                for v in &mut rows[i] {
                    *v = -*v;
                }
                rhs[i] = -rhs[i];
                relations[i] = match relations[i] {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }
        let slacks = relations.iter().filter(|r| !matches!(r, Relation::Eq)).count();
        let artificials = relations.iter().filter(|r| !matches!(r, Relation::Le)).count();
        let total = n + slacks + artificials;
        let art_start = n + slacks;

        // tab[i] = constraint row i over all columns plus the right-hand side.
        let mut tab = vec![vec![0.0f64; total + 1]; m];
        let mut basis = vec![usize::MAX; m];
        let mut slack_idx = n;
        let mut art_idx = art_start;
        for i in 0..m {
            tab[i][..n].copy_from_slice(&rows[i]);
            tab[i][total] = rhs[i];
            match relations[i] {
                Relation::Le => {
                    tab[i][slack_idx] = 1.0;
                    basis[i] = slack_idx;
                    slack_idx += 1;
                }
                Relation::Ge => {
                    tab[i][slack_idx] = -1.0;
                    slack_idx += 1;
                    tab[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
                Relation::Eq => {
                    tab[i][art_idx] = 1.0;
                    basis[i] = art_idx;
                    art_idx += 1;
                }
            }
        }

        // Phase 1: minimize the sum of artificials.
        if artificials > 0 {
            let mut cost = vec![0.0; total];
            for j in art_start..total {
                cost[j] = 1.0;
            }
            run_simplex(&mut tab, &mut basis, &cost, total, total)?;
            let infeasibility: f64 = basis
                .iter()
                .zip(tab.iter())
                .filter(|(&b, _)| b >= art_start)
                .map(|(_, row)| row[total])
                .sum();
            if infeasibility > FEAS_TOL {
                return Err(LpError::Infeasible);
            }
            // Drive lingering zero-valued artificials out of the basis where a
            // structural or slack pivot exists (on the best-conditioned
            // column); otherwise the row is redundant and the artificial can
            // stay at zero (it is banned from entering in phase 2).
            for i in 0..m {
                if basis[i] >= art_start {
                    let j = (0..art_start)
                        .max_by(|&a, &b| tab[i][a].abs().total_cmp(&tab[i][b].abs()))
                        .filter(|&j| tab[i][j].abs() > PIVOT_TOL);
                    if let Some(j) = j {
                        pivot(&mut tab, &mut basis, i, j);
                    }
                }
            }
        }

        // Phase 2: the real objective (as a minimization), artificials banned.
        let mut cost = vec![0.0; total];
        for j in 0..n {
            cost[j] = match self.goal {
                Goal::Minimize => self.objective[j],
                Goal::Maximize => -self.objective[j],
            };
        }
        run_simplex(&mut tab, &mut basis, &cost, total, art_start)?;

        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = tab[i][total];
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective })
    }
}

/// Minimizes `cost` over the current tableau. Columns at `allowed..` may not
/// enter the basis. Entering column by Bland's rule (lowest eligible index);
/// leaving row by the stability-first ratio test, degrading to exact Bland
/// tie-breaking late in the iteration budget so termination stays guaranteed.
fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    total: usize,
    allowed: usize,
) -> Result<(), LpError> {
    let m = tab.len();
    // Reduced-cost row: cost minus the basic rows scaled by their costs.
    // Rebuilt from scratch every iteration — an incrementally updated row
    // drifts across the many degenerate pivots these programs produce, and a
    // masked entering column ends phase 1 at a falsely "optimal" vertex.
    let mut red = vec![0.0; total + 1];

    // The stable tie-break has no cycling proof, so the second half of the
    // budget switches to pure Bland pivoting, whose lexicographic argument
    // rules out cycling; the cap itself then only guards internal corruption.
    let max_iters = 50_000 + 200 * (m + total);
    for iter in 0..max_iters {
        red[..total].copy_from_slice(cost);
        red[total] = 0.0;
        for i in 0..m {
            let cb = cost[basis[i]];
            if cb != 0.0 {
                for j in 0..=total {
                    red[j] -= cb * tab[i][j];
                }
            }
        }
        let Some(enter) = (0..allowed).find(|&j| red[j] < -PIVOT_TOL) else {
            return Ok(());
        };
        let leave = if iter < max_iters / 2 {
            choose_leaving_stable(tab, enter, total)
        } else {
            choose_leaving_bland(tab, basis, enter, total)
        };
        let Some(leave) = leave else {
            return Err(LpError::Unbounded);
        };
        pivot(tab, basis, leave, enter);
    }
    panic!("simplex exceeded its iteration cap — tableau corrupted");
}

/// Ratio test that keeps the tableau numerically healthy: coefficients below
/// [`STABLE_PIVOT`] are ineligible while any row has a solid one, and among
/// rows within a hair of the minimum ratio the largest coefficient wins.
fn choose_leaving_stable(tab: &[Vec<f64>], enter: usize, total: usize) -> Option<usize> {
    for floor in [STABLE_PIVOT, PIVOT_TOL] {
        let mut best = f64::INFINITY;
        for row in tab {
            if row[enter] > floor {
                best = best.min(row[total] / row[enter]);
            }
        }
        if !best.is_finite() {
            continue;
        }
        let window = best + RATIO_TIE * (1.0 + best.abs());
        let mut leave = None;
        let mut strongest = 0.0;
        for (i, row) in tab.iter().enumerate() {
            let c = row[enter];
            if c > floor && row[total] / c <= window && c > strongest {
                strongest = c;
                leave = Some(i);
            }
        }
        return leave;
    }
    None
}

/// Textbook Bland leaving rule: minimum ratio, ties to the lowest basis
/// index. Cycling-free, but happy to divide by near-noise coefficients.
fn choose_leaving_bland(
    tab: &[Vec<f64>],
    basis: &[usize],
    enter: usize,
    total: usize,
) -> Option<usize> {
    let mut leave: Option<usize> = None;
    let mut best = f64::INFINITY;
    for (i, row) in tab.iter().enumerate() {
        if row[enter] > PIVOT_TOL {
            let ratio = row[total] / row[enter];
            if ratio < best - PIVOT_TOL
                || ((ratio - best).abs() <= PIVOT_TOL && leave.is_some_and(|l| basis[i] < basis[l]))
            {
                best = ratio;
                leave = Some(i);
            }
        }
    }
    leave
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let total = tab[row].len() - 1;
    let p = tab[row][col];
    debug_assert!(p.abs() > PIVOT_TOL);
    for v in &mut tab[row] {
        *v /= p;
    }
    for i in 0..tab.len() {
        if i != row && tab[i][col].abs() > 0.0 {
            let f = tab[i][col];
            for j in 0..=total {
                tab[i][j] -= f * tab[row][j];
            }
        }
    }
    basis[row] = col;
}
