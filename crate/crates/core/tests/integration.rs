use rmab_mpc::instances::{self, builtin, generate_random, resolve, BUILTIN_IDS};
use rmab_mpc::policies::PolicyKind;
use rmab_mpc::simulator::{SimConfig, Simulator};
use rmab_mpc::{lp_priority_index, solve_relaxation, BudgetRule, SystemState};

#[test]
fn bundled_gains_and_indices_match_published_values() {
    for id in BUILTIN_IDS {
        let entry = builtin(id).unwrap();
        let sol = solve_relaxation(&entry.instance).unwrap();
        let expected = &entry.expected;
        assert!(
            (sol.gain - expected.lp_value).abs() <= expected.lp_value_tol,
            "{id}: {} vs {}",
            sol.gain,
            expected.lp_value
        );
        let index = lp_priority_index(&sol, &entry.instance);
        for (i, (got, want)) in index.iter().zip(&expected.lp_index).enumerate() {
            if let Some(want) = want {
                assert!((got - want).abs() < 2e-3, "{id} state {i}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn instances_round_trip_through_json_files() {
    let dir = tempfile::tempdir().unwrap();
    for id in BUILTIN_IDS {
        let inst = builtin(id).unwrap().instance;
        let path = dir.path().join(format!("{id}.json"));
        instances::save(&path, &inst).unwrap();
        assert_eq!(instances::load(&path).unwrap(), inst);
        assert_eq!(resolve(path.to_str().unwrap()).unwrap(), inst);
    }
}

#[test]
fn default_budget_rule_is_omitted_from_json() {
    let inst = builtin("chen3").unwrap().instance;
    assert!(!instances::to_json(&inst).contains("budget"));
    let loose = inst.with_budget(BudgetRule::AtMost);
    let text = instances::to_json(&loose);
    assert!(text.contains("\"budget\": \"at-most\""));
    let back: rmab_mpc::RmabInstance = serde_json::from_str(&text).unwrap();
    assert_eq!(back, loose);
}

#[test]
fn random_specs_resolve_to_the_generator() {
    assert_eq!(
        resolve("random:6:4").unwrap(),
        generate_random(6, 4, 0.5).unwrap()
    );
    assert_eq!(
        resolve("random:6:4:0.3").unwrap(),
        generate_random(6, 4, 0.3).unwrap()
    );
    assert!(resolve("random:6").is_err());
    assert!(resolve("random:1:0").is_err());
    assert!(resolve("missing-instance").is_err());
}

#[test]
fn malformed_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut inst = builtin("chen3").unwrap().instance;
    inst.p0[0][0] += 0.5;
    std::fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
    assert!(instances::load(&path).is_err());
    std::fs::write(&path, "{").unwrap();
    assert!(instances::load(&path).is_err());
}

#[test]
fn every_policy_keeps_arms_and_budget() {
    let inst = builtin("random8-seed3").unwrap().instance;
    let n_arms = 25;
    let cap = inst.budget(n_arms) as f64 / n_arms as f64;
    for policy in PolicyKind::ALL {
        let mut config = SimConfig::new(n_arms, policy);
        config.horizon = 60;
        config.warmup = 10;
        config.replications = 2;
        config.tau = 4;
        let sim = Simulator::new(&inst, &config).unwrap();
        for log in sim.run_all().unwrap() {
            assert_eq!(log.steps.len(), 60);
            for step in &log.steps {
                let total: f64 = step.occupancy.iter().sum();
                assert!((total - 1.0).abs() < 1e-12, "{policy}");
                assert!(step.pulled_frac() <= cap + 1e-12, "{policy}");
                let counts: Vec<usize> = step
                    .occupancy
                    .iter()
                    .map(|v| (v * n_arms as f64).round() as usize)
                    .collect();
                assert!(SystemState::new(counts).is_ok());
            }
        }
    }
}

#[test]
fn replications_are_reproducible() {
    let inst = builtin("chen3").unwrap().instance;
    let mut config = SimConfig::new(30, PolicyKind::Ftva);
    config.horizon = 80;
    config.warmup = 20;
    config.replications = 3;
    config.seed = 9;
    let a = Simulator::new(&inst, &config).unwrap().run_all().unwrap();
    let b = Simulator::new(&inst, &config).unwrap().run_all().unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn simulated_gain_stays_near_relaxation() {
    let inst = builtin("chen3").unwrap().instance;
    let mut config = SimConfig::new(100, PolicyKind::LpPriority);
    config.horizon = 400;
    config.replications = 4;
    let sim = Simulator::new(&inst, &config).unwrap();
    let estimate = sim.estimate().unwrap();
    let g = sim.solution().gain;
    assert!(estimate.mean <= g + 0.01);
    assert!(estimate.mean >= 0.8 * g);
}
