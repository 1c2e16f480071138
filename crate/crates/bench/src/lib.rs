//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use scopf_core::caseio::parse_case;
use scopf_core::{PowerSystem, RunConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Loads `data/<name>.m` with the given config.
pub fn load(name: &str, config: &RunConfig) -> PowerSystem {
    let path = data_dir().join(format!("{name}.m"));
    parse_case(&path, config).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// A nominal dispatch proportional to capacity that meets the load.
pub fn proportional_dispatch(system: &PowerSystem) -> Vec<f64> {
    let total: f64 = system.generators.iter().map(|g| g.g_max).sum();
    let share = system.total_load_mw() / total;
    system.generators.iter().map(|g| g.g_max * share).collect()
}
