//! Policies mapping the N-arm state to integer pull counts: LP-update (model
//! predictive control), randomized rounding, LP-priority and FTVA.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{lp_priority_index, priority_order, FiniteHorizonSolver, LpSolution};
use crate::model::{ControlVector, RmabInstance, SystemState};

/// Scaled pull masses this close to an integer are snapped to it before
/// taking fractional parts.
pub const SNAP_TOL: f64 = 1e-9;
/// States with index at least `-INDEX_TOL` count as nonnegative for the
/// threshold variant of LP-priority.
pub const INDEX_TOL: f64 = 1e-9;
/// Memoized LP-update controls kept per policy before the cache is reset.
const CACHE_LIMIT: usize = 1 << 18;

/// Number of arms pulled in each state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionAllocation {
    pulls: Vec<usize>,
}

impl ActionAllocation {
    /// Checks `pulls_i <= counts_i` and `sum pulls <= budget`.
    pub fn new(pulls: Vec<usize>, state: &SystemState, budget: usize) -> Result<Self> {
        if pulls.len() != state.n_states() {
            return Err(Error::Dimension {
                expected: state.n_states(),
                got: pulls.len(),
            });
        }
        for (i, (&p, &c)) in pulls.iter().zip(state.counts()).enumerate() {
            if p > c {
                return Err(Error::InfeasibleControl(format!(
                    "{p} pulls in state {i} holding {c} arms"
                )));
            }
        }
        let total: usize = pulls.iter().sum();
        if total > budget {
            return Err(Error::InfeasibleControl(format!(
                "{total} pulls exceed the budget {budget}"
            )));
        }
        Ok(Self { pulls })
    }

    pub fn pulls(&self) -> &[usize] {
        &self.pulls
    }

    pub fn total(&self) -> usize {
        self.pulls.iter().sum()
    }

    /// `U = pulls / N`.
    pub fn fraction(&self, n_arms: usize) -> Vec<f64> {
        self.pulls
            .iter()
            .map(|&p| p as f64 / n_arms as f64)
            .collect()
    }
}

/// Randomized rounding of a fluid control to integer pull counts.
///
/// First `v <= u` is chosen with `|v|_1 = min(|u|_1, budget / N)` by removing
/// any excess from states in `reduction_order`. The integer parts of `N v` are
/// always pulled; the fractional parts `z` are resolved by systematic sampling
/// with a single uniform offset against their cumulative sums, so each state
/// gets an extra pull with probability `z_i` and the number of extra pulls is
/// `floor(sum z)` or `ceil(sum z)`.
pub fn round_control<R: Rng + ?Sized>(
    u: &ControlVector,
    state: &SystemState,
    budget: usize,
    reduction_order: &[usize],
    rng: &mut R,
) -> Result<ActionAllocation> {
    let n_arms = state.n_arms();
    let counts = state.counts();
    if u.as_slice().len() != counts.len() {
        return Err(Error::Dimension {
            expected: counts.len(),
            got: u.as_slice().len(),
        });
    }
    let nf = n_arms as f64;
    let mut mass: Vec<f64> = u
        .as_slice()
        .iter()
        .zip(counts)
        .map(|(&ui, &c)| (ui * nf).clamp(0.0, c as f64))
        .collect();
    let mut excess = mass.iter().sum::<f64>() - budget as f64;
    for &i in reduction_order {
        if excess <= 0.0 {
            break;
        }
        let cut = mass[i].min(excess);
        mass[i] -= cut;
        excess -= cut;
    }

    let mut pulls = Vec::with_capacity(mass.len());
    let mut frac = Vec::with_capacity(mass.len());
    for m in &mass {
        let nearest = m.round();
        let m = if (m - nearest).abs() < SNAP_TOL {
            nearest
        } else {
            *m
        };
        let whole = m.floor();
        pulls.push(whole as usize);
        frac.push(m - whole);
    }
    if frac.iter().any(|&z| z > 0.0) {
        let offset: f64 = rng.random();
        let mut before = 0.0_f64;
        let mut cum = 0.0_f64;
        for (p, &z) in pulls.iter_mut().zip(&frac) {
            cum += z;
            let extra = (cum - offset).ceil() - (before - offset).ceil();
            *p += extra.max(0.0) as usize;
            before = cum;
        }
    }
    // Cumulative rounding can leave one extra pull beyond the budget when the
    // fractional total sits a hair above an integer.
    let mut total: usize = pulls.iter().sum();
    for &i in reduction_order {
        if total <= budget {
            break;
        }
        if pulls[i] > 0 {
            pulls[i] -= 1;
            total -= 1;
        }
    }
    for (p, &c) in pulls.iter_mut().zip(counts) {
        *p = (*p).min(c);
    }
    ActionAllocation::new(pulls, state, budget)
}

/// Policy identifiers accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    LpUpdate,
    LpPriority,
    LpPriorityThreshold,
    Ftva,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::LpUpdate,
        PolicyKind::LpPriority,
        PolicyKind::LpPriorityThreshold,
        PolicyKind::Ftva,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PolicyKind::LpUpdate => "lp-update",
            PolicyKind::LpPriority => "lp-priority",
            PolicyKind::LpPriorityThreshold => "lp-priority-threshold",
            PolicyKind::Ftva => "ftva",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy '{s}'")))
    }
}

/// Order in which excess control mass is removed during rounding: ascending
/// LP index, so the least valuable states lose mass first.
pub fn reduction_order(solution: &LpSolution, instance: &RmabInstance) -> Vec<usize> {
    let mut order = priority_order(&lp_priority_index(solution, instance));
    order.reverse();
    order
}

/// The LP-update policy: solve the finite-horizon program from the current
/// empirical occupancy, keep the first control and round it.
///
/// Solves are deterministic, so first controls are memoized by count vector.
#[derive(Debug)]
pub struct LpUpdatePolicy {
    solver: FiniteHorizonSolver,
    reduction_order: Vec<usize>,
    cache: Mutex<HashMap<Vec<usize>, ControlVector>>,
}

impl LpUpdatePolicy {
    pub fn new(instance: &RmabInstance, solution: &LpSolution, tau: usize) -> Result<Self> {
        Ok(Self {
            solver: FiniteHorizonSolver::new(instance, tau, None)?,
            reduction_order: reduction_order(solution, instance),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn horizon(&self) -> usize {
        self.solver.horizon()
    }

    /// `mu_tau(counts / N)`.
    pub fn control(&self, state: &SystemState) -> Result<ControlVector> {
        if let Some(u) = self.cache.lock().expect("cache lock").get(state.counts()) {
            return Ok(u.clone());
        }
        let plan = self.solver.solve(&state.occupancy())?;
        let u = plan.first_control().clone();
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(state.counts().to_vec(), u.clone());
        Ok(u)
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &SystemState,
        rng: &mut R,
    ) -> Result<ActionAllocation> {
        let u = self.control(state)?;
        let budget = self.solver.instance().budget(state.n_arms());
        round_control(&u, state, budget, &self.reduction_order, rng)
    }
}

/// Convenience form of [`LpUpdatePolicy::act`] without memoization.
pub fn lp_update_action<R: Rng + ?Sized>(
    instance: &RmabInstance,
    solution: &LpSolution,
    state: &SystemState,
    tau: usize,
    rng: &mut R,
) -> Result<ActionAllocation> {
    LpUpdatePolicy::new(instance, solution, tau)?.act(state, rng)
}

/// Static LP-priority policy. The plain variant pulls down the whole order
/// until the budget runs out; the threshold variant never pulls states with a
/// negative index.
#[derive(Clone, Debug)]
pub struct PriorityPolicy {
    order: Vec<usize>,
    /// Number of leading entries of `order` that may be pulled.
    eligible: usize,
}

impl PriorityPolicy {
    pub fn new(index: &[f64], threshold: bool) -> Self {
        let order = priority_order(index);
        let eligible = if threshold {
            order
                .iter()
                .take_while(|&&i| index[i] >= -INDEX_TOL)
                .count()
        } else {
            order.len()
        };
        Self { order, eligible }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn act(&self, state: &SystemState, budget: usize) -> ActionAllocation {
        let counts = state.counts();
        let mut pulls = vec![0; counts.len()];
        let mut remaining = budget;
        for &i in &self.order[..self.eligible] {
            if remaining == 0 {
                break;
            }
            pulls[i] = counts[i].min(remaining);
            remaining -= pulls[i];
        }
        ActionAllocation { pulls }
    }
}

/// Greedy allocation down the priority order given by `index`.
pub fn lp_priority_action(state: &SystemState, index: &[f64], budget: usize) -> ActionAllocation {
    PriorityPolicy::new(index, false).act(state, budget)
}

/// Per-arm labels for FTVA: real arm states and their virtual twins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FtvaState {
    pub real_states: Vec<usize>,
    pub virtual_states: Vec<usize>,
}

impl FtvaState {
    /// Real and virtual arms start together, labelled in ascending state
    /// order.
    pub fn new(state: &SystemState) -> Self {
        let labels: Vec<usize> = state
            .counts()
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(s, c))
            .collect();
        Self {
            real_states: labels.clone(),
            virtual_states: labels,
        }
    }

    pub fn counts(&self, n_states: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states];
        for &s in &self.real_states {
            counts[s] += 1;
        }
        counts
    }

    pub fn virtual_counts(&self, n_states: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states];
        for &s in &self.virtual_states {
            counts[s] += 1;
        }
        counts
    }
}

/// Actions chosen for each arm in one FTVA step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingPlan {
    pub real_actions: Vec<u8>,
    pub virtual_actions: Vec<u8>,
}

impl CouplingPlan {
    /// Arms whose real and virtual actions agree share their transition draw.
    pub fn coupled(&self, arm: usize) -> bool {
        self.real_actions[arm] == self.virtual_actions[arm]
    }
}

/// Follow-the-virtual-advice: virtual arms run the relaxed single-arm policy
/// and real arms copy their actions while the budget allows.
#[derive(Clone, Debug)]
pub struct FtvaPolicy {
    pull_prob: Vec<f64>,
    /// `cdf[a][s]`: cumulative transition row.
    cdf: [Vec<Vec<f64>>; 2],
}

impl FtvaPolicy {
    pub fn new(instance: &RmabInstance, solution: &LpSolution) -> Self {
        let pull_prob = solution
            .y
            .iter()
            .map(|&[y0, y1]| {
                let x = y0 + y1;
                if x > 0.0 {
                    (y1 / x).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let cdf = [0, 1].map(|a| {
            instance
                .kernel(a)
                .iter()
                .map(|row| {
                    row.iter()
                        .scan(0.0, |acc, &p| {
                            *acc += p;
                            Some(*acc)
                        })
                        .collect()
                })
                .collect()
        });
        Self { pull_prob, cdf }
    }

    /// `pi(a | s)` as rows `[pi(0|s), pi(1|s)]`.
    pub fn single_arm_policy(&self) -> Vec<[f64; 2]> {
        self.pull_prob.iter().map(|&p| [1.0 - p, p]).collect()
    }

    /// Samples virtual actions and admits real pulls in ascending arm order.
    pub fn act<R: Rng + ?Sized>(
        &self,
        ftva: &FtvaState,
        budget: usize,
        rng: &mut R,
    ) -> (ActionAllocation, CouplingPlan) {
        let n_states = self.pull_prob.len();
        let n = ftva.real_states.len();
        let mut real_actions = vec![0u8; n];
        let mut virtual_actions = vec![0u8; n];
        let mut pulls = vec![0; n_states];
        let mut used = 0;
        for arm in 0..n {
            let draw: f64 = rng.random();
            if draw < self.pull_prob[ftva.virtual_states[arm]] {
                virtual_actions[arm] = 1;
                if used < budget {
                    real_actions[arm] = 1;
                    pulls[ftva.real_states[arm]] += 1;
                    used += 1;
                }
            }
        }
        (
            ActionAllocation { pulls },
            CouplingPlan {
                real_actions,
                virtual_actions,
            },
        )
    }

    /// Moves every real and virtual arm one step.
    pub fn advance<R: Rng + ?Sized>(&self, ftva: &mut FtvaState, plan: &CouplingPlan, rng: &mut R) {
        for arm in 0..ftva.real_states.len() {
            let a = usize::from(plan.real_actions[arm]);
            let va = usize::from(plan.virtual_actions[arm]);
            let draw: f64 = rng.random();
            let vdraw: f64 = if plan.coupled(arm) {
                draw
            } else {
                rng.random()
            };
            ftva.real_states[arm] = sample_row(&self.cdf[a][ftva.real_states[arm]], draw);
            ftva.virtual_states[arm] = sample_row(&self.cdf[va][ftva.virtual_states[arm]], vdraw);
        }
    }
}

/// Inverse-CDF draw from a cumulative row.
pub(crate) fn sample_row(cdf: &[f64], draw: f64) -> usize {
    cdf.iter()
        .position(|&c| draw < c)
        .unwrap_or_else(|| cdf.iter().rposition(|&c| c > 0.0).unwrap_or(0))
}
