//! Benchmark workloads shared by the criterion targets.

use evdpor::bench_programs::{generate, with_n};
use evdpor::{explore, Algorithm, ExploreConfig, Program};

pub use evdpor::bench_programs;

/// A sized builtin, panicking on bad parameters.
pub fn sized(name: &str, n: u32) -> Program {
    generate(name, &with_n(n)).expect("builtin in range")
}

/// Trace count of one full exploration.
pub fn traces(p: &Program, algo: Algorithm) -> u64 {
    explore(p, &ExploreConfig::new(algo)).expect("valid config").traces
}
