//! Bundled benchmark instances, a random generator, and JSON file I/O.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{BudgetRule, RmabInstance};

/// Golden values published alongside a bundled instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    pub lp_value: f64,
    /// Tolerance on `lp_value` (wider when the printed matrices are rounded).
    pub lp_value_tol: f64,
    /// Priority indices; `None` entries were not printed.
    pub lp_index: Vec<Option<f64>>,
    pub tau: usize,
}

#[derive(Clone, Debug)]
pub struct InstanceCatalogEntry {
    pub id: &'static str,
    pub instance: RmabInstance,
    pub expected: Expected,
}

pub const BUILTIN_IDS: [&str; 3] = ["hong8", "chen3", "random8-seed3"];

/// Looks up a bundled instance by id.
///
/// Matrices are transcribed as printed (three decimals, blanks are zero).
/// Printed rows can sum to 0.999 or 1.001, so each row is rescaled to sum to
/// one.
pub fn builtin(id: &str) -> Result<InstanceCatalogEntry> {
    let (instance, expected) = match id {
        "hong8" => (
            hong8(),
            Expected {
                lp_value: 0.0125,
                lp_value_tol: 1e-3,
                lp_index: [0.025, 0.025, 0.025, 0.025, 0.0, -0.113, -0.110, -0.108]
                    .into_iter()
                    .map(Some)
                    .collect(),
                tau: 10,
            },
        ),
        "chen3" => (
            chen3(),
            Expected {
                lp_value: 0.1238,
                lp_value_tol: 2e-3,
                lp_index: vec![Some(0.199), Some(-0.000), Some(-0.133)],
                tau: 50,
            },
        ),
        "random8-seed3" => (
            random8_seed3(),
            Expected {
                lp_value: 1.3885,
                lp_value_tol: 1.5e-2,
                // One entry is missing from the published vector.
                lp_index: vec![
                    Some(0.377),
                    Some(3.273),
                    Some(0.846),
                    Some(-0.116),
                    Some(0.802),
                    None,
                    Some(-1.230),
                    Some(-0.562),
                ],
                tau: 10,
            },
        ),
        other => return Err(Error::UnknownInstance(other.to_string())),
    };
    let id = BUILTIN_IDS
        .iter()
        .find(|&&b| b == id)
        .copied()
        .expect("listed id");
    Ok(InstanceCatalogEntry {
        id,
        instance,
        expected,
    })
}

fn stochastic_rows(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn hong8() -> RmabInstance {
    let p0: [&[f64]; 8] = [
        &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.48, 0.52, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.47, 0.53, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.1, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.1],
        &[0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.9],
    ];
    let p1: [&[f64]; 8] = [
        &[0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.46, 0.54, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.45, 0.55, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.44, 0.56, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.43, 0.57],
    ];
    RmabInstance {
        name: "hong8".into(),
        n_states: 8,
        p0: stochastic_rows(&p0),
        p1: stochastic_rows(&p1),
        r0: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1],
        r1: vec![0.0; 8],
        alpha: 0.5,
        budget: BudgetRule::default(),
    }
}

fn chen3() -> RmabInstance {
    let p0: [&[f64]; 3] = [
        &[0.022, 0.102, 0.875],
        &[0.034, 0.172, 0.794],
        &[0.523, 0.455, 0.022],
    ];
    let p1: [&[f64]; 3] = [
        &[0.149, 0.304, 0.547],
        &[0.568, 0.411, 0.020],
        &[0.253, 0.273, 0.474],
    ];
    RmabInstance {
        name: "chen3".into(),
        n_states: 3,
        p0: stochastic_rows(&p0),
        p1: stochastic_rows(&p1),
        r0: vec![0.0; 3],
        r1: vec![0.374, 0.117, 0.079],
        alpha: 0.4,
        budget: BudgetRule::default(),
    }
}

fn random8_seed3() -> RmabInstance {
    let p0: [&[f64]; 8] = [
        &[0.101, 0.155, 0.043, 0.090, 0.281, 0.285, 0.017, 0.029],
        &[0.006, 0.207, 0.076, 0.136, 0.085, 0.299, 0.147, 0.043],
        &[0.317, 0.254, 0.065, 0.013, 0.144, 0.111, 0.061, 0.035],
        &[0.098, 0.183, 0.069, 0.068, 0.218, 0.028, 0.200, 0.136],
        &[0.053, 0.080, 0.009, 0.038, 0.483, 0.036, 0.159, 0.143],
        &[0.018, 0.105, 0.027, 0.397, 0.150, 0.102, 0.161, 0.040],
        &[0.110, 0.050, 0.088, 0.024, 0.023, 0.142, 0.169, 0.393],
        &[0.055, 0.043, 0.017, 0.494, 0.227, 0.034, 0.119, 0.011],
    ];
    let p1: [&[f64]; 8] = [
        &[0.011, 0.124, 0.006, 0.131, 0.224, 0.070, 0.241, 0.191],
        &[0.071, 0.138, 0.033, 0.023, 0.045, 0.250, 0.339, 0.101],
        &[0.093, 0.113, 0.056, 0.061, 0.109, 0.351, 0.157, 0.059],
        &[0.158, 0.176, 0.151, 0.150, 0.060, 0.142, 0.053, 0.109],
        &[0.370, 0.185, 0.261, 0.020, 0.022, 0.064, 0.047, 0.030],
        &[0.199, 0.139, 0.099, 0.050, 0.141, 0.104, 0.082, 0.187],
        &[0.214, 0.088, 0.011, 0.075, 0.295, 0.174, 0.075, 0.068],
        &[0.028, 0.157, 0.126, 0.078, 0.039, 0.127, 0.376, 0.069],
    ];
    RmabInstance {
        name: "random8-seed3".into(),
        n_states: 8,
        p0: stochastic_rows(&p0),
        p1: stochastic_rows(&p1),
        r0: vec![0.073, 0.087, 0.778, 0.186, 1.178, 0.417, 1.996, 1.351],
        r1: vec![0.059, 3.212, 1.817, 0.302, 2.259, 0.067, 0.344, 0.172],
        alpha: 0.5,
        budget: BudgetRule::default(),
    }
}

/// Random instance: transition weights and rewards i.i.d. Exponential(1),
/// each kernel row normalized to sum to one. Rewards are left raw.
///
/// Draw order is state-major, then action, then target state, followed by the
/// rewards in `(state, action)` order.
pub fn generate_random(n_states: usize, seed: u64, alpha: f64) -> Result<RmabInstance> {
    if n_states < 2 {
        return Err(Error::InvalidConfig(
            "random instances need at least 2 states".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = [vec![Vec::new(); n_states], vec![Vec::new(); n_states]];
    for s in 0..n_states {
        for kernel in p.iter_mut() {
            let row: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = row.iter().sum();
            kernel[s] = row.into_iter().map(|v| v / total).collect();
        }
    }
    let mut r0 = Vec::with_capacity(n_states);
    let mut r1 = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        r0.push(Exp1.sample(&mut rng));
        r1.push(Exp1.sample(&mut rng));
    }
    let [p0, p1] = p;
    let instance = RmabInstance {
        name: format!("random{n_states}-s{seed}"),
        n_states,
        p0,
        p1,
        r0,
        r1,
        alpha,
        budget: BudgetRule::default(),
    };
    instance.ensure_valid()?;
    Ok(instance)
}

/// Reads and validates an instance file.
pub fn load(path: impl AsRef<Path>) -> Result<RmabInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let instance: RmabInstance = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    instance.ensure_valid()?;
    Ok(instance)
}

pub fn to_json(instance: &RmabInstance) -> String {
    serde_json::to_string_pretty(instance).expect("instance serializes")
}

pub fn save(path: impl AsRef<Path>, instance: &RmabInstance) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(instance);
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lookahead used for an instance in the published experiments, or the
/// simulator default.
pub fn default_tau(spec: &str) -> usize {
    builtin(spec)
        .map(|entry| entry.expected.tau)
        .unwrap_or(crate::simulator::DEFAULT_TAU)
}

/// Resolves a builtin id or a path to an instance file.
pub fn resolve(spec: &str) -> Result<RmabInstance> {
    if BUILTIN_IDS.contains(&spec) {
        return Ok(builtin(spec)?.instance);
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        // random:<states>:<seed>[:<alpha>]
        let parts: Vec<&str> = rest.split(':').collect();
        let bad = || {
            Error::InvalidConfig(format!(
                "expected random:<states>:<seed>[:<alpha>], got '{spec}'"
            ))
        };
        if parts.len() < 2 || parts.len() > 3 {
            return Err(bad());
        }
        let states = parts[0].parse().map_err(|_| bad())?;
        let seed = parts[1].parse().map_err(|_| bad())?;
        let alpha = match parts.get(2) {
            Some(a) => a.parse().map_err(|_| bad())?,
            None => 0.5,
        };
        return generate_random(states, seed, alpha);
    }
    let path = Path::new(spec);
    if path.exists() {
        return load(path);
    }
    Err(Error::UnknownInstance(spec.to_string()))
}
