//! The event-driven program language: syntax tree, parser, emitter and interpreter.

mod ast;
mod emit;
mod machine;
mod parse;

pub use ast::{BinOp, Body, Expr, MsgId, Program, Stmt};
pub use emit::to_source;
pub use machine::{InstView, Machine, MachineState, Status};
pub use parse::parse_program;

use crate::error::RunError;
use crate::event::{ExecutionRecord, InstanceId};

/// Replays `schedule` on `prog` from the initial state.
pub fn run(prog: &Program, schedule: &[InstanceId]) -> Result<ExecutionRecord, RunError> {
    Machine::new(prog).run(schedule)
}
