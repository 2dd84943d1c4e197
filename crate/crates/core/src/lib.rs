//! Stateless model checking of event-driven programs with Event-DPOR.
//!
//! A [`Program`] is explored by [`explore`], which visits one execution per
//! happens-before equivalence class. [`brute_force`] enumerates every schedule
//! and serves as the reference oracle.

pub mod bench_programs;
pub mod consistency;
pub mod error;
pub mod event;
pub mod explorer;
pub mod program;
pub mod relation;
pub mod reversal;
pub mod trace;
pub mod wakeup;

pub use error::{BenchError, ExploreError, GraphError, ParseError, RunError};
pub use event::{Access, ConflictMode, Event, ExecutionRecord, HandlerId, InstanceId, VarId};
pub use explorer::{brute_force, explore, explore_coarse, Algorithm, ExplorationStats, ExploreConfig};
pub use program::{parse_program, run, to_source, Machine, Program};
pub use trace::{compute_hb, detect_races, is_hb_prefix, trace_key, HbRelation, TraceKey};
