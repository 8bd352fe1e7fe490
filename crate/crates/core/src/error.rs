use thiserror::Error;

/// Errors produced by the analysis, simulation and checker-flow layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible configuration: {0}")]
    InfeasibleConfiguration(String),

    #[error("task-set generation failed after {attempts} attempts: {reason}")]
    GenerationFailure { attempts: usize, reason: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("memory fault at pc {pc}: address {addr} outside {size} words")]
    MemoryFault { pc: usize, addr: u64, size: usize },

    #[error("step limit of {0} instructions exceeded")]
    StepLimit(u64),

    #[error("illegal instruction {op} on core {core} with attribute {attr}")]
    IllegalInstruction {
        op: &'static str,
        core: usize,
        attr: &'static str,
    },

    #[error("channel protocol error: {0}")]
    Protocol(String),

    #[error("simulator invariant violated: {0}")]
    InvariantViolated(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
