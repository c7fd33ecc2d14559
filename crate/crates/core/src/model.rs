//! Restless bandit instances and the deterministic mean-field dynamics.
//!
//! All vectors use the row convention: an occupancy `x` evolves as
//! `x(t+1) = x(t) P0 + u(t) (P1 - P0)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for membership in the feasible control set and the simplex.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Negative occupancy entries above `-CLAMP_TOL` are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;
/// Row sums of transition kernels must be within this of one.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// One family of statistically identical arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmabInstance {
    pub name: String,
    pub n_states: usize,
    #[serde(rename = "P0")]
    pub p0: Vec<Vec<f64>>,
    #[serde(rename = "P1")]
    pub p1: Vec<Vec<f64>>,
    pub r0: Vec<f64>,
    pub r1: Vec<f64>,
    pub alpha: f64,
    /// How the budget enters the relaxed programs. Omitted from JSON when it
    /// takes the default.
    #[serde(default, skip_serializing_if = "BudgetRule::is_default")]
    pub budget: BudgetRule,
}

/// Budget constraint used by the fluid programs. The N-arm system always
/// allows at most `floor(alpha N)` pulls per step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetRule {
    /// `|u|_1 = alpha`.
    #[default]
    Exact,
    /// `|u|_1 <= alpha`.
    AtMost,
}

impl BudgetRule {
    pub fn is_default(&self) -> bool {
        *self == BudgetRule::Exact
    }
}

/// A single broken invariant, reported by [`validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl RmabInstance {
    pub fn kernel(&self, action: usize) -> &[Vec<f64>] {
        if action == 0 {
            &self.p0
        } else {
            &self.p1
        }
    }

    pub fn rewards(&self, action: usize) -> &[f64] {
        if action == 0 {
            &self.r0
        } else {
            &self.r1
        }
    }

    /// `r1 - r0`, the marginal reward of pulling in each state.
    pub fn reward_gap(&self) -> Vec<f64> {
        self.r1.iter().zip(&self.r0).map(|(a, b)| a - b).collect()
    }

    /// Smallest and largest reward over all state-action pairs.
    pub fn reward_range(&self) -> (f64, f64) {
        self.r0
            .iter()
            .chain(&self.r1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// Returns a copy with the budget fraction replaced.
    pub fn with_alpha(&self, alpha: f64) -> RmabInstance {
        RmabInstance {
            alpha,
            ..self.clone()
        }
    }

    /// Returns a copy with the budget rule replaced.
    pub fn with_budget(&self, budget: BudgetRule) -> RmabInstance {
        RmabInstance {
            budget,
            ..self.clone()
        }
    }

    /// Fails with every violation found by [`validate`].
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }

    /// Number of arms that may be pulled per step with `n_arms` arms.
    pub fn budget(&self, n_arms: usize) -> usize {
        // Guard against alpha * N landing a hair below an integer.
        ((self.alpha * n_arms as f64) + 1e-9).floor() as usize
    }
}

/// Lists every broken instance invariant. Empty iff the instance is valid.
pub fn validate(instance: &RmabInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = instance.n_states;
    let mut push = |location: String, message: String| out.push(Violation { location, message });

    if n == 0 {
        push("n_states".into(), "must be positive".into());
    }
    for (label, kernel) in [("P0", &instance.p0), ("P1", &instance.p1)] {
        if kernel.len() != n {
            push(
                label.into(),
                format!("has {} rows, expected {n}", kernel.len()),
            );
        }
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != n {
                push(
                    format!("{label} row {i}"),
                    format!("has {} entries, expected {n}", row.len()),
                );
                continue;
            }
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    push(
                        format!("{label}[{i}][{j}]"),
                        format!("entry {p} outside [0,1]"),
                    );
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                push(
                    format!("{label} row {i}"),
                    format!("sums to {sum}, expected 1"),
                );
            }
        }
    }
    for (label, r) in [("r0", &instance.r0), ("r1", &instance.r1)] {
        if r.len() != n {
            push(
                label.into(),
                format!("has {} entries, expected {n}", r.len()),
            );
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            push(format!("{label}[{j}]"), "is not finite".into());
        }
    }
    if !(instance.alpha > 0.0 && instance.alpha <= 1.0) {
        push("alpha".into(), format!("{} not in (0,1]", instance.alpha));
    }
    out
}

/// Maps rewards affinely into `[0,1]`.
///
/// Returns `(normalized, scale, shift)` such that an average reward `V` of the
/// normalized instance corresponds to `scale * V + shift` on the original.
pub fn normalize(instance: &RmabInstance) -> (RmabInstance, f64, f64) {
    let (lo, hi) = instance.reward_range();
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let shift = lo;
    let map = |r: &Vec<f64>| r.iter().map(|v| (v - shift) / scale).collect::<Vec<_>>();
    let out = RmabInstance {
        r0: map(&instance.r0),
        r1: map(&instance.r1),
        ..instance.clone()
    };
    (out, scale, shift)
}

/// A point of the probability simplex over arm states.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyVector(Vec<f64>);

impl OccupancyVector {
    /// Clamps entries in `(-1e-12, 0)` to zero and renormalizes; rejects
    /// anything further from the simplex.
    pub fn new(mut x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidOccupancy("empty vector".into()));
        }
        for (i, v) in x.iter_mut().enumerate() {
            if !v.is_finite() || *v < -CLAMP_TOL {
                return Err(Error::InvalidOccupancy(format!("entry {i} = {v}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::InvalidOccupancy(format!("sums to {sum}")));
        }
        x.iter_mut().for_each(|v| *v /= sum);
        Ok(Self(x))
    }

    /// Point mass on `state`.
    pub fn vertex(n_states: usize, state: usize) -> Self {
        let mut x = vec![0.0; n_states];
        x[state] = 1.0;
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &OccupancyVector) -> f64 {
        l1_distance(&self.0, &other.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Fraction of arms pulled in each state. Only meaningful next to the
/// occupancy it was checked against.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    /// Checks `0 <= u <= x` and `|u|_1 <= alpha` up to [`FEASIBILITY_TOL`],
    /// clamping small violations.
    pub fn checked(u: Vec<f64>, x: &OccupancyVector, alpha: f64) -> Result<Self> {
        if u.len() != x.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: u.len(),
            });
        }
        let mut u = u;
        for (i, (ui, &xi)) in u.iter_mut().zip(x.as_slice()).enumerate() {
            if !ui.is_finite() || *ui < -FEASIBILITY_TOL || *ui > xi + FEASIBILITY_TOL {
                return Err(Error::InfeasibleControl(format!(
                    "u[{i}] = {ui} not in [0, {xi}]"
                )));
            }
            *ui = ui.clamp(0.0, xi);
        }
        let total: f64 = u.iter().sum();
        if total > alpha + FEASIBILITY_TOL {
            return Err(Error::InfeasibleControl(format!(
                "|u|_1 = {total} exceeds alpha = {alpha}"
            )));
        }
        if total > alpha {
            let s = alpha / total;
            u.iter_mut().for_each(|v| *v *= s);
        }
        Ok(Self(u))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Occupancy counts of the `N` real arms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SystemState {
    counts: Vec<usize>,
}

impl SystemState {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() || counts.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidConfig(
                "system state needs at least one arm".into(),
            ));
        }
        Ok(Self { counts })
    }

    /// All `n_arms` arms in `state`.
    pub fn concentrated(n_states: usize, n_arms: usize, state: usize) -> Result<Self> {
        if state >= n_states {
            return Err(Error::InvalidConfig(format!(
                "initial state {state} out of range for {n_states} states"
            )));
        }
        let mut counts = vec![0; n_states];
        counts[state] = n_arms;
        Self::new(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn n_arms(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_states(&self) -> usize {
        self.counts.len()
    }

    pub fn occupancy(&self) -> OccupancyVector {
        let n = self.n_arms() as f64;
        OccupancyVector(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

fn check_dims(instance: &RmabInstance, x: &[f64], u: &[f64]) -> Result<()> {
    for len in [x.len(), u.len()] {
        if len != instance.n_states {
            return Err(Error::Dimension {
                expected: instance.n_states,
                got: len,
            });
        }
    }
    Ok(())
}

/// The mean-field map `x P0 + u (P1 - P0)`.
pub fn drift(
    instance: &RmabInstance,
    x: &OccupancyVector,
    u: &ControlVector,
) -> Result<OccupancyVector> {
    check_dims(instance, x.as_slice(), u.as_slice())?;
    let u = ControlVector::checked(u.0.clone(), x, instance.alpha)?;
    OccupancyVector::new(drift_unchecked(instance, x.as_slice(), u.as_slice()))
}

/// [`drift`] without feasibility checks, for hot loops that already hold a
/// feasible pair.
pub fn drift_unchecked(instance: &RmabInstance, x: &[f64], u: &[f64]) -> Vec<f64> {
    let n = instance.n_states;
    let mut next = vec![0.0; n];
    for i in 0..n {
        let passive = x[i] - u[i];
        let active = u[i];
        let row0 = &instance.p0[i];
        let row1 = &instance.p1[i];
        for j in 0..n {
            next[j] += passive * row0[j] + active * row1[j];
        }
    }
    next
}

/// Instantaneous mean-field reward `r0 . x + (r1 - r0) . u`.
pub fn reward(instance: &RmabInstance, x: &OccupancyVector, u: &ControlVector) -> Result<f64> {
    check_dims(instance, x.as_slice(), u.as_slice())?;
    let u = ControlVector::checked(u.0.clone(), x, instance.alpha)?;
    Ok(reward_unchecked(instance, x.as_slice(), u.as_slice()))
}

pub fn reward_unchecked(instance: &RmabInstance, x: &[f64], u: &[f64]) -> f64 {
    (0..instance.n_states)
        .map(|i| instance.r0[i] * (x[i] - u[i]) + instance.r1[i] * u[i])
        .sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
