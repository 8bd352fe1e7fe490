//! Behavioural model of asynchronous error detection between a main core
//! and one or two checker cores.
//!
//! The main core cuts its user-mode instruction stream into checking
//! segments and forwards, per segment and in order: a start checkpoint
//! (SCP), the log of committed memory accesses, the instruction count (IC)
//! and an end checkpoint (ECP). Words travel through bounded FIFO channels;
//! a full channel stalls the main core. Checkers replay each segment from
//! its SCP and compare every forwarded value they consume.

mod channel;
mod checker;
mod cosim;
mod isa;
mod machine;
mod main_core;

pub use channel::{ChannelWord, FifoChannel, LogKind, MemLogEntry, WordField};
pub use checker::{Activity, CheckerCore, DetectSite, Detection};
pub use cosim::{
    cosimulate, histogram_csv, inject_and_measure, latency_histogram, random_fault, CosimConfig, CosimReport,
    DetectionRecord, FaultSpec, FaultTarget, Injection, CSV_HEADER, DEFAULT_CAPACITY, MIN_CAPACITY,
};
pub use isa::{context_switch, Checking, CoreAttr, CoreState, IsaMachine, IsaOp, IsaReply, NextTask, Verdict};
pub use machine::{
    execute, random_program, AluOp, ArchState, Instruction, Interpreter, MemPort, Memory, Program, ProgramShape,
    RegCheckpoint, CHECKPOINT_WORDS, DEFAULT_MEM_WORDS, NUM_REGS,
};
pub use main_core::{run_main, EndCause, MainCore, MainStep, Segment, Tagged, DEFAULT_SEG_LIMIT, MAX_MAIN_STEPS};
