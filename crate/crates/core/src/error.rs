use thiserror::Error;

use crate::event::InstanceId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared identifier `{name}`")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: repeat bound must be a non-negative integer literal")]
    NonLiteralRepeat { line: usize, col: usize },
    #[error("{line}:{col}: duplicate declaration `{name}`")]
    Duplicate { line: usize, col: usize, name: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("schedule position {position}: instance {instance} is not enabled")]
    NotEnabled { position: usize, instance: InstanceId },
    #[error("arithmetic overflow in {instance}")]
    Overflow { instance: InstanceId },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExploreError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("exploration cap of {cap} exceeded")]
    CapExceeded { cap: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed graph: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("unknown benchmark `{0}`")]
    Unknown(String),
    #[error("parameter `{name}` out of range: {msg}")]
    Param { name: String, msg: String },
}
