//! Schedulability analysis, simulation and checker-flow modelling for
//! fault-tolerant multicores that verify computations asynchronously on
//! spare cores.
//!
//! * [`model`]: tasks, reliability classes, scheduling entities, partitions.
//! * [`gen`]: reproducible random task sets.
//! * [`analysis`]: virtual deadlines, densities, the density test.
//! * [`partition`]: partitioners for FlexStep, LockStep and HMR.
//! * [`simkernel`]: discrete-event EDF simulation of a partition.
//! * [`checkerflow`]: segments, channels, checker replay and fault injection.

pub mod analysis;
pub mod checkerflow;
pub mod error;
pub mod gen;
pub mod model;
pub mod partition;
pub mod simkernel;

pub use error::{Error, Result};
pub use model::{Outcome, Partition, SchemeId, Task, TaskClass, TaskSet};
