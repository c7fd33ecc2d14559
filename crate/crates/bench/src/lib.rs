//! Shared fixtures for the benchmarks.

use rmab_mpc::instances::builtin;
use rmab_mpc::RmabInstance;

pub fn fixture(id: &str) -> RmabInstance {
    builtin(id).expect("bundled instance").instance
}
