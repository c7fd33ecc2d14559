//! The steady-state relaxation and the finite-horizon mean-field program.

pub mod simplex;

use crate::error::{Error, Result};
use crate::model::{
    dot, drift_unchecked, reward_unchecked, BudgetRule, ControlVector, OccupancyVector,
    RmabInstance, FEASIBILITY_TOL,
};
use simplex::{LinearProgram, RowKind};

/// Slack allowed on the dual objective when selecting among optimal duals.
const DUAL_FACE_TOL: f64 = 1e-9;

/// Optimal solution of the steady-state relaxation, with its duals.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x_star: OccupancyVector,
    pub u_star: ControlVector,
    /// Optimal relaxed gain `g*`.
    pub gain: f64,
    /// Dual of the flow-balance constraint, shifted so its minimum is 0.
    pub lambda: Vec<f64>,
    /// Dual of the budget constraint; nonnegative under
    /// [`BudgetRule::AtMost`], free under [`BudgetRule::Exact`].
    pub nu: f64,
    /// Dual of the normalization constraint; `gain_dual + nu * alpha` is the
    /// dual objective.
    pub gain_dual: f64,
    /// Occupation measure: `y[s] = [x*_s - u*_s, u*_s]`.
    pub y: Vec<[f64; 2]>,
}

impl LpSolution {
    pub fn dual_objective(&self, alpha: f64) -> f64 {
        self.gain_dual + self.nu * alpha
    }
}

/// Solves the steady-state relaxation over the state-action occupation
/// measure `y(s, a)`.
///
/// The flow balance of the last state is implied by the others together with
/// normalization, so it is dropped and its multiplier pinned to zero before
/// the min-shift. Optimal duals are often not unique; among them the one with
/// the smallest budget multiplier is returned.
pub fn solve_relaxation(instance: &RmabInstance) -> Result<LpSolution> {
    instance.ensure_valid()?;
    let n = instance.n_states;
    let var = |s: usize, a: usize| 2 * s + a;
    let mut lp = LinearProgram::new(2 * n);
    let mut c = vec![0.0; 2 * n];
    for s in 0..n {
        c[var(s, 0)] = instance.r0[s];
        c[var(s, 1)] = instance.r1[s];
    }
    lp.set_objective(c);

    let mut row = vec![0.0; 2 * n];
    for target in 0..n.saturating_sub(1) {
        row.fill(0.0);
        for a in 0..2 {
            row[var(target, a)] += 1.0;
            for s in 0..n {
                row[var(s, a)] -= instance.kernel(a)[s][target];
            }
        }
        lp.add_row(&row, RowKind::Eq, 0.0);
    }
    let norm_row = lp.add_row(&vec![1.0; 2 * n], RowKind::Eq, 1.0);
    row.fill(0.0);
    for s in 0..n {
        row[var(s, 1)] = 1.0;
    }
    let budget_kind = match instance.budget {
        BudgetRule::Exact => RowKind::Eq,
        BudgetRule::AtMost => RowKind::Le,
    };
    let budget_row = lp.add_row(&row, budget_kind, instance.alpha);

    let out = lp.solve().map_err(|e| match e {
        Error::LpInfeasible | Error::LpUnbounded => {
            Error::InvalidConfig(format!("relaxation of a valid instance failed: {e}"))
        }
        other => other,
    })?;

    let y: Vec<[f64; 2]> = (0..n)
        .map(|s| [out.x[var(s, 0)], out.x[var(s, 1)]])
        .collect();
    let x_star = OccupancyVector::new(y.iter().map(|p| p[0] + p[1]).collect())?;
    let u_star = clamp_control(y.iter().map(|p| p[1]).collect(), &x_star, instance.alpha);

    let mut h: Vec<f64> = (0..n)
        .map(|s| if s + 1 < n { out.duals[s] } else { 0.0 })
        .collect();
    let mut g = out.duals[norm_row];
    let mut nu = out.duals[budget_row];
    if instance.budget == BudgetRule::AtMost {
        nu = nu.max(0.0);
    }
    let bound = out.objective.max(g + nu * instance.alpha);
    if let Some((g2, h2, nu2)) = smallest_budget_dual(instance, bound)? {
        g = g2;
        h = h2;
        nu = nu2;
    }
    let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda = h.iter().map(|v| v - lo).collect();

    Ok(LpSolution {
        x_star,
        u_star,
        gain: out.objective,
        lambda,
        nu,
        gain_dual: g,
        y,
    })
}

/// Minimizes the budget multiplier over dual-feasible `(g, h, nu)` whose
/// objective `g + alpha nu` does not exceed `bound`. Returns `None` when the
/// face is empty at working precision, or when `nu` is unbounded below
/// (`alpha = 1` under an exact budget).
fn smallest_budget_dual(
    instance: &RmabInstance,
    bound: f64,
) -> Result<Option<(f64, Vec<f64>, f64)>> {
    let n = instance.n_states;
    let free_nu = instance.budget == BudgetRule::Exact;
    // Columns: g+, g-, (h_j+, h_j-) for j < n-1, nu+, then nu- when free.
    let h_col = |j: usize| 2 + 2 * j;
    let nu_col = 2 + 2 * (n - 1);
    let n_vars = nu_col + 1 + usize::from(free_nu);
    let mut lp = LinearProgram::new(n_vars);
    let mut c = vec![0.0; n_vars];
    c[nu_col] = -1.0;
    if free_nu {
        c[nu_col + 1] = 1.0;
    }
    lp.set_objective(c);
    let mut row = vec![0.0; n_vars];
    for s in 0..n {
        for a in 0..2 {
            row.fill(0.0);
            row[0] = 1.0;
            row[1] = -1.0;
            let p = &instance.kernel(a)[s];
            for j in 0..n - 1 {
                let coef = f64::from(u8::from(j == s)) - p[j];
                row[h_col(j)] = coef;
                row[h_col(j) + 1] = -coef;
            }
            if a == 1 {
                row[nu_col] = 1.0;
                if free_nu {
                    row[nu_col + 1] = -1.0;
                }
            }
            lp.add_row(&row, RowKind::Ge, instance.rewards(a)[s]);
        }
    }
    row.fill(0.0);
    row[0] = 1.0;
    row[1] = -1.0;
    row[nu_col] = instance.alpha;
    if free_nu {
        row[nu_col + 1] = -instance.alpha;
    }
    lp.add_row(
        &row,
        RowKind::Le,
        bound + DUAL_FACE_TOL * (1.0 + bound.abs()),
    );
    let out = match lp.solve_primal() {
        Ok(out) => out,
        Err(Error::LpInfeasible | Error::LpUnbounded) => return Ok(None),
        Err(e) => return Err(e),
    };
    let x = &out.x;
    let h = (0..n)
        .map(|j| {
            if j + 1 < n {
                x[h_col(j)] - x[h_col(j) + 1]
            } else {
                0.0
            }
        })
        .collect();
    let nu = x[nu_col] - if free_nu { x[nu_col + 1] } else { 0.0 };
    Ok(Some((x[0] - x[1], h, nu)))
}

/// Reduced-cost priority index of each state:
/// `r1 - r0 + (P1 - P0) lambda - nu`.
pub fn lp_priority_index(solution: &LpSolution, instance: &RmabInstance) -> Vec<f64> {
    (0..instance.n_states)
        .map(|i| {
            let flow: f64 = (0..instance.n_states)
                .map(|j| (instance.p1[i][j] - instance.p0[i][j]) * solution.lambda[j])
                .sum();
            instance.r1[i] - instance.r0[i] + flow - solution.nu
        })
        .collect()
}

/// States sorted by descending index; ties go to the lower state id.
pub fn priority_order(index: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..index.len()).collect();
    order.sort_by(|&a, &b| index[b].total_cmp(&index[a]).then(a.cmp(&b)));
    order
}

/// An optimal open-loop plan for the finite-horizon program.
#[derive(Clone, Debug)]
pub struct HorizonPlan {
    pub horizon: usize,
    pub xs: Vec<OccupancyVector>,
    pub us: Vec<ControlVector>,
    /// `W_tau(x0)`: accumulated reward plus the terminal term when used.
    pub value: f64,
    pub terminal_weight_used: bool,
}

impl HorizonPlan {
    /// The first control, `mu_tau(x0)`.
    pub fn first_control(&self) -> &ControlVector {
        &self.us[0]
    }
}

/// The finite-horizon program for a fixed instance, horizon and terminal
/// weight. The constraint matrix does not depend on the initial occupancy, so
/// it is assembled once and reused for every solve.
///
/// States are eliminated: `x(t) = x0 P0^t + sum_{s<t} u(s) (P1-P0) P0^(t-1-s)`,
/// leaving `u` as the only variables, with rows `u_i(t) <= x_i(t)` and one
/// budget row per step following the instance's [`BudgetRule`].
#[derive(Clone, Debug)]
pub struct FiniteHorizonSolver {
    instance: RmabInstance,
    horizon: usize,
    terminal: Option<Vec<f64>>,
    lp: LinearProgram,
    /// `r0 . P0^t` contributions: `reward_from_x0[t] = P0^t r0` (column form).
    reward_columns: Vec<Vec<f64>>,
    terminal_column: Vec<f64>,
}

impl FiniteHorizonSolver {
    pub fn new(instance: &RmabInstance, horizon: usize, terminal: Option<&[f64]>) -> Result<Self> {
        instance.ensure_valid()?;
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        let n = instance.n_states;
        if let Some(w) = terminal {
            if w.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: w.len(),
                });
            }
        }
        let diff: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| instance.p1[i][j] - instance.p0[i][j])
                    .collect()
            })
            .collect();
        // gains[k] = (P1 - P0) P0^k
        let mut gains = Vec::with_capacity(horizon);
        let mut current = diff;
        for _ in 0..horizon {
            let next = mat_mul(&current, &instance.p0);
            gains.push(current);
            current = next;
        }

        let n_vars = horizon * n;
        let mut lp = LinearProgram::new(n_vars);
        let mut row = vec![0.0; n_vars];
        for t in 0..horizon {
            for i in 0..n {
                row.fill(0.0);
                row[t * n + i] = 1.0;
                for s in 0..t {
                    let g = &gains[t - 1 - s];
                    for j in 0..n {
                        row[s * n + j] -= g[j][i];
                    }
                }
                lp.add_row(&row, RowKind::Le, 0.0);
            }
            row.fill(0.0);
            row[t * n..(t + 1) * n].fill(1.0);
            let kind = match instance.budget {
                BudgetRule::Exact => RowKind::Eq,
                BudgetRule::AtMost => RowKind::Le,
            };
            lp.add_row(&row, kind, instance.alpha);
        }

        let gap = instance.reward_gap();
        let mut c = vec![0.0; n_vars];
        for s in 0..horizon {
            for j in 0..n {
                let mut v = gap[j];
                for t in (s + 1)..horizon {
                    v += dot(&gains[t - 1 - s][j], &instance.r0);
                }
                if let Some(w) = terminal {
                    v += dot(&gains[horizon - 1 - s][j], w);
                }
                c[s * n + j] = v;
            }
        }
        lp.set_objective(c);

        // Columns P0^t r0 for the constant part, and P0^tau w.
        let mut reward_columns = Vec::with_capacity(horizon);
        let mut col = instance.r0.clone();
        for _ in 0..horizon {
            let next = mat_vec(&instance.p0, &col);
            reward_columns.push(col);
            col = next;
        }
        let terminal_column = match terminal {
            Some(w) => {
                let mut col = w.to_vec();
                for _ in 0..horizon {
                    col = mat_vec(&instance.p0, &col);
                }
                col
            }
            None => vec![0.0; n],
        };

        Ok(Self {
            instance: instance.clone(),
            horizon,
            terminal: terminal.map(<[f64]>::to_vec),
            lp,
            reward_columns,
            terminal_column,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn instance(&self) -> &RmabInstance {
        &self.instance
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    /// Solves from `x0` and returns the optimal plan.
    pub fn solve(&self, x0: &OccupancyVector) -> Result<HorizonPlan> {
        let n = self.instance.n_states;
        if x0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: x0.len(),
            });
        }
        let mut lp = self.lp.clone();
        let mut free = x0.as_slice().to_vec();
        for t in 0..self.horizon {
            for (i, &v) in free.iter().enumerate() {
                lp.set_rhs(t * (n + 1) + i, v.max(0.0));
            }
            free = drift_unchecked(&self.instance, &free, &vec![0.0; n]);
        }
        let out = lp.solve_primal()?;

        let mut xs = Vec::with_capacity(self.horizon + 1);
        let mut us = Vec::with_capacity(self.horizon);
        let mut x = x0.clone();
        let mut value = 0.0;
        for t in 0..self.horizon {
            let u = clamp_control(out.x[t * n..(t + 1) * n].to_vec(), &x, self.instance.alpha);
            value += reward_unchecked(&self.instance, x.as_slice(), u.as_slice());
            let next = drift_unchecked(&self.instance, x.as_slice(), u.as_slice());
            xs.push(x);
            us.push(u);
            x = OccupancyVector::new(next)?;
        }
        if let Some(w) = &self.terminal {
            value += dot(w, x.as_slice());
        }
        xs.push(x);
        Ok(HorizonPlan {
            horizon: self.horizon,
            xs,
            us,
            value,
            terminal_weight_used: self.terminal.is_some(),
        })
    }

    /// Optimal value from the LP objective, without rebuilding the plan.
    pub fn value(&self, x0: &OccupancyVector) -> Result<f64> {
        let n = self.instance.n_states;
        let mut lp = self.lp.clone();
        let mut free = x0.as_slice().to_vec();
        for t in 0..self.horizon {
            for (i, &v) in free.iter().enumerate() {
                lp.set_rhs(t * (n + 1) + i, v.max(0.0));
            }
            free = drift_unchecked(&self.instance, &free, &vec![0.0; n]);
        }
        let out = lp.solve_primal()?;
        let constant: f64 = self
            .reward_columns
            .iter()
            .map(|col| dot(col, x0.as_slice()))
            .sum::<f64>()
            + dot(&self.terminal_column, x0.as_slice());
        Ok(out.objective + constant)
    }
}

/// One-shot wrapper around [`FiniteHorizonSolver`].
pub fn solve_finite_horizon(
    instance: &RmabInstance,
    x0: &OccupancyVector,
    horizon: usize,
    terminal: Option<&[f64]>,
) -> Result<HorizonPlan> {
    FiniteHorizonSolver::new(instance, horizon, terminal)?.solve(x0)
}

/// Projects an LP output onto the feasible set. LP vertices can overshoot the
/// bounds by rounding error; anything beyond a loose tolerance is a bug.
fn clamp_control(mut u: Vec<f64>, x: &OccupancyVector, alpha: f64) -> ControlVector {
    for (ui, &xi) in u.iter_mut().zip(x.as_slice()) {
        debug_assert!(*ui <= xi + 1e-6 && *ui >= -1e-6, "LP control {ui} vs {xi}");
        *ui = ui.clamp(0.0, xi);
    }
    let total: f64 = u.iter().sum();
    if total > alpha {
        let s = alpha / total;
        u.iter_mut().for_each(|v| *v *= s);
    }
    ControlVector::checked(u, x, alpha + FEASIBILITY_TOL).expect("clamped control is feasible")
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b.len();
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; b[0].len()];
            for k in 0..n {
                if row[k] != 0.0 {
                    for (o, &v) in out.iter_mut().zip(&b[k]) {
                        *o += row[k] * v;
                    }
                }
            }
            out
        })
        .collect()
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, v)).collect()
}
