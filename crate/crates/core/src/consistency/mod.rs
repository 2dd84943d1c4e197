//! Weak-initial membership and event-driven consistency of happens-before graphs.

mod graph;
mod wi;

pub use graph::{check_consistency, check_consistency_brute, ConsistencyGraph, GraphEvent};
pub use wi::{
    extension_events, first_on_handler, stage_report, wi_decide, wi_member, NextInfo, Observed, StageReport, Summary, Wi, WiQuery,
    WiStats,
};
