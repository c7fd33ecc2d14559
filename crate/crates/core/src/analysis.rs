//! Diagnostics: the ergodicity coefficient, non-degeneracy and local
//! stability of the fixed point, the rotated cost and its finite-horizon
//! accumulation, the finite-N performance bound, and an exact optimum for
//! very small systems.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::simplex::{LinearProgram, RowKind};
use crate::lp::{lp_priority_index, solve_relaxation, FiniteHorizonSolver, LpSolution};
use crate::model::{
    dot, drift_unchecked, normalize, reward_unchecked, BudgetRule, ControlVector, OccupancyVector,
    RmabInstance,
};

/// Largest `k` accepted by [`compute_rho`]; the cost grows as `2^k`.
pub const K_MAX_LIMIT: usize = 20;
/// Default search depth for [`find_k`].
pub const DEFAULT_K_MAX: usize = 12;
/// Coupling probabilities at or below this count as zero.
pub const RHO_TOL: f64 = 1e-12;
/// Tolerance used to classify `u*_i` against `0` and `x*_i`.
pub const DEGENERACY_TOL: f64 = 1e-7;
/// Non-unit eigenvalue moduli must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Span of `Tv - v` at which value iteration stops.
pub const ORACLE_SPAN_TOL: f64 = 1e-9;
pub const ORACLE_MAX_STATES: usize = 10_000;
pub const ORACLE_MAX_ACTIONS: usize = 1_000;
/// Cap on stored transition entries across all state-action pairs.
pub const ORACLE_MAX_ENTRIES: usize = 50_000_000;
pub const ORACLE_MAX_ITERS: usize = 1_000_000;

/// Outcome of the search for a positive ergodicity coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub k: usize,
    pub rho_k: f64,
    pub satisfied: bool,
}

/// Worst-case probability, under the best coupling, that an arm following
/// any fixed action sequence of length `k` and an arm that is never pulled
/// meet after `k` steps, over all pairs of starting states.
pub fn compute_rho(instance: &RmabInstance, k: usize) -> Result<f64> {
    instance.ensure_valid()?;
    if k == 0 || k > K_MAX_LIMIT {
        return Err(Error::KTooLarge {
            k,
            k_max: K_MAX_LIMIT,
        });
    }
    let n = instance.n_states;
    let p0 = to_matrix(&instance.p0);
    let p1 = to_matrix(&instance.p1);
    let passive = p0.pow(k as u32);
    let mut best = f64::INFINITY;
    // Depth-first over action sequences, carrying the partial product.
    let mut stack = vec![(DMatrix::<f64>::identity(n, n), 0usize)];
    while let Some((prod, depth)) = stack.pop() {
        if depth == k {
            for s in 0..n {
                for s2 in 0..n {
                    let overlap: f64 = (0..n).map(|j| prod[(s, j)].min(passive[(s2, j)])).sum();
                    best = best.min(overlap);
                }
            }
            continue;
        }
        stack.push((&prod * &p1, depth + 1));
        stack.push((&prod * &p0, depth + 1));
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Smallest `k <= k_max` with a positive coefficient.
pub fn find_k(instance: &RmabInstance, k_max: usize) -> Result<ErgodicityReport> {
    let k_max = k_max.clamp(1, K_MAX_LIMIT);
    let mut last = 0.0;
    for k in 1..=k_max {
        last = compute_rho(instance, k)?;
        if last > RHO_TOL {
            return Ok(ErgodicityReport {
                k,
                rho_k: last,
                satisfied: true,
            });
        }
    }
    Ok(ErgodicityReport {
        k: k_max,
        rho_k: last,
        satisfied: false,
    })
}

/// How the optimal control treats a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateClass {
    /// `u*_i = x*_i`.
    Pulled,
    /// `u*_i = 0`.
    Idle,
    /// `0 < u*_i < x*_i`.
    Interior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub i_star: Option<usize>,
    pub classes: Vec<StateClass>,
    /// Full support and exactly one interior state.
    pub nondegenerate: bool,
    pub p_star: Option<Vec<Vec<f64>>>,
    /// Sorted in decreasing order.
    pub eigen_moduli: Vec<f64>,
    pub stable: Option<bool>,
}

/// Classifies every state of the relaxed optimum.
pub fn check_nondegenerate(solution: &LpSolution) -> StabilityReport {
    let x = solution.x_star.as_slice();
    let u = solution.u_star.as_slice();
    let classes: Vec<StateClass> = x
        .iter()
        .zip(u)
        .map(|(&xi, &ui)| {
            if ui >= xi - DEGENERACY_TOL {
                StateClass::Pulled
            } else if ui <= DEGENERACY_TOL {
                StateClass::Idle
            } else {
                StateClass::Interior
            }
        })
        .collect();
    let interior: Vec<usize> = (0..classes.len())
        .filter(|&i| classes[i] == StateClass::Interior)
        .collect();
    let full_support = x.iter().all(|&xi| xi > DEGENERACY_TOL);
    let nondegenerate = full_support && interior.len() == 1;
    StabilityReport {
        i_star: if interior.len() == 1 {
            Some(interior[0])
        } else {
            None
        },
        classes,
        nondegenerate,
        p_star: None,
        eigen_moduli: Vec::new(),
        stable: None,
    }
}

/// Builds the linearization of the fluid dynamics around the fixed point
/// and checks whether every eigenvalue but the unit one lies strictly inside
/// the unit disc.
pub fn build_p_star_and_spectrum(
    instance: &RmabInstance,
    report: &StabilityReport,
) -> Result<StabilityReport> {
    let i_star = match (report.nondegenerate, report.i_star) {
        (true, Some(i)) => i,
        _ => {
            return Err(Error::Degenerate(
                "the relaxed optimum needs full support and exactly one interior state".into(),
            ))
        }
    };
    let n = instance.n_states;
    let p_star: Vec<Vec<f64>> = (0..n)
        .map(|i| match report.classes[i] {
            StateClass::Pulled => (0..n)
                .map(|j| instance.p1[i][j] - instance.p1[i_star][j] + instance.p0[i_star][j])
                .collect(),
            _ => instance.p0[i].clone(),
        })
        .collect();
    let mut moduli: Vec<f64> = to_matrix(&p_star)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let stable = moduli.iter().skip(1).all(|&m| m < 1.0 - STABILITY_MARGIN);
    Ok(StabilityReport {
        p_star: Some(p_star),
        eigen_moduli: moduli,
        stable: Some(stable),
        ..report.clone()
    })
}

/// `g* - R(x,u) + lambda.x - lambda.Phi(x,u)`.
pub fn rotated_cost(
    instance: &RmabInstance,
    solution: &LpSolution,
    x: &OccupancyVector,
    u: &ControlVector,
) -> Result<f64> {
    let u = ControlVector::checked(u.as_slice().to_vec(), x, instance.alpha)?;
    Ok(rotated_cost_unchecked(
        instance,
        solution,
        x.as_slice(),
        u.as_slice(),
    ))
}

pub(crate) fn rotated_cost_unchecked(
    instance: &RmabInstance,
    solution: &LpSolution,
    x: &[f64],
    u: &[f64],
) -> f64 {
    let next = drift_unchecked(instance, x, u);
    solution.gain - reward_unchecked(instance, x, u) + dot(&solution.lambda, x)
        - dot(&solution.lambda, &next)
}

/// Minimum of the rotated cost over the feasible `(x, u)` polytope, by LP.
pub fn min_rotated_cost(instance: &RmabInstance, solution: &LpSolution) -> Result<f64> {
    let n = instance.n_states;
    let lam = &solution.lambda;
    // Variables: x_0..x_{n-1}, u_0..u_{n-1}. Maximize R - lambda.x + lambda.Phi.
    let mut c = vec![0.0; 2 * n];
    for s in 0..n {
        let flow0: f64 = dot(&instance.p0[s], lam);
        let flow1: f64 = dot(&instance.p1[s], lam);
        c[s] = instance.r0[s] - lam[s] + flow0;
        c[n + s] = instance.r1[s] - instance.r0[s] + flow1 - flow0;
    }
    let mut lp = LinearProgram::new(2 * n);
    lp.set_objective(c);
    let mut row = vec![0.0; 2 * n];
    row[..n].fill(1.0);
    lp.add_row(&row, RowKind::Eq, 1.0);
    for s in 0..n {
        row.fill(0.0);
        row[n + s] = 1.0;
        row[s] = -1.0;
        lp.add_row(&row, RowKind::Le, 0.0);
    }
    row.fill(0.0);
    row[n..].fill(1.0);
    let kind = match instance.budget {
        BudgetRule::Exact => RowKind::Eq,
        BudgetRule::AtMost => RowKind::Le,
    };
    lp.add_row(&row, kind, instance.alpha);
    let out = lp.solve_primal()?;
    Ok(solution.gain - out.objective)
}

/// Draws `x` from the flat Dirichlet distribution and `u_i ~ U(0, x_i)`,
/// then moves `|u|_1` onto the budget set: scaled down when above `alpha`,
/// and under an exact budget pushed toward `x` until it equals `alpha`.
pub fn sample_feasible<R: Rng + ?Sized>(
    instance: &RmabInstance,
    rng: &mut R,
) -> (OccupancyVector, ControlVector) {
    let n = instance.n_states;
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let x = OccupancyVector::new(raw.iter().map(|v| v / total).collect())
        .expect("Dirichlet draw lies on the simplex");
    let mut u: Vec<f64> = x
        .as_slice()
        .iter()
        .map(|&xi| xi * rng.random::<f64>())
        .collect();
    let mass: f64 = u.iter().sum();
    if mass > instance.alpha {
        let s = instance.alpha / mass;
        u.iter_mut().for_each(|v| *v *= s);
    } else if instance.budget == BudgetRule::Exact && mass < instance.alpha {
        let theta = (instance.alpha - mass) / (1.0 - mass);
        for (ui, &xi) in u.iter_mut().zip(x.as_slice()) {
            *ui += theta * (xi - *ui);
        }
    }
    let u = ControlVector::checked(u, &x, instance.alpha).expect("sampled control is feasible");
    (x, u)
}

/// `L_tau(x) = tau g* + lambda.x - W_tau(x)`, where `W_tau` uses `lambda` as
/// terminal reward: the rotated cost accumulated along an optimal
/// `tau`-step plan.
#[derive(Clone, Debug)]
pub struct CumulativeRotatedCost {
    solver: FiniteHorizonSolver,
    gain: f64,
    lambda: Vec<f64>,
}

impl CumulativeRotatedCost {
    pub fn new(instance: &RmabInstance, solution: &LpSolution, tau: usize) -> Result<Self> {
        Ok(Self {
            solver: FiniteHorizonSolver::new(instance, tau, Some(&solution.lambda))?,
            gain: solution.gain,
            lambda: solution.lambda.clone(),
        })
    }

    /// `W_tau(x)` with terminal reward `lambda . x(tau)`.
    pub fn horizon_value(&self, x: &OccupancyVector) -> Result<f64> {
        self.solver.value(x)
    }

    pub fn eval(&self, x: &OccupancyVector) -> Result<f64> {
        let tau = self.solver.horizon() as f64;
        Ok(tau * self.gain + dot(&self.lambda, x.as_slice()) - self.horizon_value(x)?)
    }
}

/// Largest `|L_long(x) - L_short(x)|` over the given points.
pub fn cauchy_gap(
    instance: &RmabInstance,
    solution: &LpSolution,
    short: usize,
    long: usize,
    points: &[OccupancyVector],
) -> Result<f64> {
    let a = CumulativeRotatedCost::new(instance, solution, short)?;
    let b = CumulativeRotatedCost::new(instance, solution, long)?;
    points.iter().try_fold(0.0_f64, |worst, x| {
        Ok(worst.max((b.eval(x)? - a.eval(x)?).abs()))
    })
}

/// Right-hand side of the finite-N guarantee for rewards in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub n_arms: usize,
    pub epsilon: f64,
    pub tau_used: Option<usize>,
    pub k: usize,
    pub rho_k: f64,
    pub rounding_term: f64,
    pub concentration_term: f64,
    pub bound: f64,
}

/// `2 eps + (2k/rho (3 + 2k alpha/rho) + 1) (alpha N - floor(alpha N))/N
///  + (k/rho)(3 + 2k alpha/rho) sqrt(|S|/N)`.
pub fn theorem1_bound(
    report: &ErgodicityReport,
    alpha: f64,
    n_states: usize,
    n_arms: usize,
    epsilon: f64,
) -> Result<GapBound> {
    if !report.satisfied || report.rho_k <= RHO_TOL {
        return Err(Error::ZeroErgodicity);
    }
    let k = report.k as f64;
    let rho = report.rho_k;
    let n = n_arms as f64;
    let lead = (k / rho) * (3.0 + 2.0 * k * alpha / rho);
    let residue = alpha * n - (alpha * n + 1e-9).floor();
    let rounding_term = (2.0 * lead + 1.0) * residue.max(0.0) / n;
    let concentration_term = lead * (n_states as f64 / n).sqrt();
    Ok(GapBound {
        n_arms,
        epsilon,
        tau_used: None,
        k: report.k,
        rho_k: rho,
        rounding_term,
        concentration_term,
        bound: 2.0 * epsilon + rounding_term + concentration_term,
    })
}

/// `(k/rho)(1 + k alpha/rho)`, the sup-norm bound on the flow multiplier for
/// rewards in `[0, 1]`; infinite when the coefficient vanishes.
pub fn lambda_bound(report: &ErgodicityReport, alpha: f64) -> f64 {
    if !report.satisfied || report.rho_k <= RHO_TOL {
        return f64::INFINITY;
    }
    let r = report.k as f64 / report.rho_k;
    r * (1.0 + alpha * r)
}

/// Checks `max lambda - min lambda <= scale * (k/rho)(1 + k alpha/rho)`, where
/// `scale` is the reward span of the instance.
pub fn lambda_bound_check(
    instance: &RmabInstance,
    solution: &LpSolution,
    report: &ErgodicityReport,
) -> bool {
    let (_, scale, _) = normalize(instance);
    let norm = solution.lambda.iter().copied().fold(0.0, f64::max);
    norm <= scale * lambda_bound(report, instance.alpha) + 1e-9
}

/// Exact optimal average reward of the N-arm system with exactly
/// `floor(alpha N)` pulls per step, by relative value iteration on count
/// vectors.
pub fn exact_small_oracle(instance: &RmabInstance, n_arms: usize) -> Result<f64> {
    instance.ensure_valid()?;
    if n_arms == 0 {
        return Err(Error::InvalidConfig("at least one arm is required".into()));
    }
    let n = instance.n_states;
    let size = binomial(n_arms + n - 1, n - 1);
    if size > ORACLE_MAX_STATES as f64 {
        return Err(Error::OracleTooLarge(format!(
            "{size} joint states exceed {ORACLE_MAX_STATES}"
        )));
    }
    let states = compositions(n_arms, n);
    let index: HashMap<Vec<usize>, usize> = states
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    let budget = instance.budget(n_arms).min(n_arms);
    let mut moves = MultinomialCache::new(instance);

    let mut model: Vec<Vec<ActionModel>> = Vec::with_capacity(states.len());
    let mut entries = 0usize;
    for counts in &states {
        let actions = pull_vectors(counts, budget);
        if actions.len() > ORACLE_MAX_ACTIONS {
            return Err(Error::OracleTooLarge(format!(
                "{} actions in state {counts:?} exceed {ORACLE_MAX_ACTIONS}",
                actions.len()
            )));
        }
        let mut options = Vec::with_capacity(actions.len());
        for pulls in actions {
            let reward = (0..n)
                .map(|i| {
                    (counts[i] - pulls[i]) as f64 * instance.r0[i]
                        + pulls[i] as f64 * instance.r1[i]
                })
                .sum::<f64>()
                / n_arms as f64;
            let mut dist: HashMap<Vec<usize>, f64> = HashMap::from([(vec![0; n], 1.0)]);
            for i in 0..n {
                for (a, m) in [(0, counts[i] - pulls[i]), (1, pulls[i])] {
                    if m == 0 {
                        continue;
                    }
                    let part = moves.get(i, a, m);
                    let mut next = HashMap::with_capacity(dist.len() * part.len());
                    for (base, p) in &dist {
                        for (add, q) in part {
                            let key: Vec<usize> =
                                base.iter().zip(add).map(|(x, y)| x + y).collect();
                            *next.entry(key).or_insert(0.0) += p * q;
                        }
                    }
                    dist = next;
                }
            }
            let mut trans: Vec<(usize, f64)> =
                dist.into_iter().map(|(k, p)| (index[&k], p)).collect();
            trans.sort_by_key(|t| t.0);
            entries += trans.len();
            if entries > ORACLE_MAX_ENTRIES {
                return Err(Error::OracleTooLarge(format!(
                    "more than {ORACLE_MAX_ENTRIES} transition entries"
                )));
            }
            options.push((reward, trans));
        }
        model.push(options);
    }

    // Lazy chain 0.5 I + 0.5 P: same gain, aperiodic.
    let mut v = vec![0.0; states.len()];
    let mut next = vec![0.0; states.len()];
    for _ in 0..ORACLE_MAX_ITERS {
        for (s, options) in model.iter().enumerate() {
            next[s] = options
                .iter()
                .map(|(r, trans)| {
                    r + 0.5 * v[s] + 0.5 * trans.iter().map(|&(j, p)| p * v[j]).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let (lo, hi) = next
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        if hi - lo < ORACLE_SPAN_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let anchor = next[0];
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni - anchor;
        }
    }
    Err(Error::OracleNoConvergence(ORACLE_MAX_ITERS))
}

/// Reward of one action and its sparse transitions.
type ActionModel = (f64, Vec<(usize, f64)>);

/// Landing counts with their probabilities.
type Landing = Vec<(Vec<usize>, f64)>;

/// Distributions of where `m` arms in one state land, per action.
struct MultinomialCache<'a> {
    instance: &'a RmabInstance,
    cache: HashMap<(usize, usize, usize), Landing>,
}

impl<'a> MultinomialCache<'a> {
    fn new(instance: &'a RmabInstance) -> Self {
        Self {
            instance,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, state: usize, action: usize, m: usize) -> &[(Vec<usize>, f64)] {
        let inst = self.instance;
        self.cache.entry((state, action, m)).or_insert_with(|| {
            let row = &inst.kernel(action)[state];
            compositions(m, inst.n_states)
                .into_iter()
                .filter_map(|c| {
                    let mut p = ln_factorial(m);
                    for (&k, &q) in c.iter().zip(row) {
                        if k > 0 {
                            if q <= 0.0 {
                                return None;
                            }
                            p += k as f64 * q.ln() - ln_factorial(k);
                        }
                    }
                    Some((c, p.exp()))
                })
                .collect()
        })
    }
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All vectors of `parts` nonnegative integers summing to `total`, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            rec(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

/// Pull vectors `p <= counts` with `sum p = budget`.
fn pull_vectors(counts: &[usize], budget: usize) -> Vec<Vec<usize>> {
    fn rec(counts: &[usize], left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let Some((&c, rest)) = counts.split_first() else {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        };
        let capacity: usize = rest.iter().sum();
        for p in left.saturating_sub(capacity)..=c.min(left) {
            prefix.push(p);
            rec(rest, left - p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        counts,
        budget,
        &mut Vec::with_capacity(counts.len()),
        &mut out,
    );
    out
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Finite-N bound evaluated at one population size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAtN {
    pub n: usize,
    pub bound: Option<f64>,
}

/// Everything reported by the `analyze` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub instance: String,
    pub alpha: f64,
    pub budget_rule: BudgetRule,
    pub rho_k: f64,
    pub k: usize,
    pub assumption1: bool,
    pub g_star: f64,
    pub x_star: Vec<f64>,
    pub u_star: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: f64,
    pub index: Vec<f64>,
    pub i_star: Option<usize>,
    pub classes: Vec<StateClass>,
    pub nondegenerate: bool,
    pub eigen_moduli: Vec<f64>,
    pub stable: Option<bool>,
    pub reward_scale: f64,
    pub lambda_bound: Option<f64>,
    pub lambda_bound_ok: bool,
    pub epsilon: f64,
    pub theorem1_bound: Vec<BoundAtN>,
}

/// Runs every diagnostic. Bounds are expressed in the instance's reward
/// units, i.e. scaled by its reward span.
pub fn analyze(
    instance: &RmabInstance,
    k_max: usize,
    n_list: &[usize],
    epsilon: f64,
) -> Result<AnalysisReport> {
    let solution = solve_relaxation(instance)?;
    let ergodicity = find_k(instance, k_max)?;
    let partial = check_nondegenerate(&solution);
    let stability = if partial.nondegenerate {
        build_p_star_and_spectrum(instance, &partial)?
    } else {
        partial
    };
    let (_, scale, _) = normalize(instance);
    let lam_bound = lambda_bound(&ergodicity, instance.alpha);
    let theorem1 = n_list
        .iter()
        .map(|&n| BoundAtN {
            n,
            bound: theorem1_bound(&ergodicity, instance.alpha, instance.n_states, n, epsilon)
                .ok()
                .map(|b| b.bound * scale),
        })
        .collect();
    Ok(AnalysisReport {
        instance: instance.name.clone(),
        alpha: instance.alpha,
        budget_rule: instance.budget,
        rho_k: ergodicity.rho_k,
        k: ergodicity.k,
        assumption1: ergodicity.satisfied,
        g_star: solution.gain,
        x_star: solution.x_star.as_slice().to_vec(),
        u_star: solution.u_star.as_slice().to_vec(),
        index: lp_priority_index(&solution, instance),
        lambda_bound_ok: lambda_bound_check(instance, &solution, &ergodicity),
        lambda: solution.lambda,
        nu: solution.nu,
        i_star: stability.i_star,
        classes: stability.classes,
        nondegenerate: stability.nondegenerate,
        eigen_moduli: stability.eigen_moduli,
        stable: stability.stable,
        reward_scale: scale,
        lambda_bound: lam_bound.is_finite().then_some(lam_bound * scale),
        epsilon,
        theorem1_bound: theorem1,
    })
}
