//! Virtual deadlines, original/checker densities and the per-core density
//! test for partitioned EDF with asynchronous verification.
//!
//! A verification task's original computation is scheduled against a
//! virtual deadline `D' < D`; its checker copies are released at `D'` and
//! must finish by `D`. The split point minimises `C/D' + k·C/(D - D')`
//! where `k` is the number of checker copies.

use crate::error::{Error, Result};
use crate::model::{entity_id, Partition, Role, SchedEntity, Task, TaskClass, Time, EPS};

/// `D/2` for double-check, `(√2 − 1)·D` for triple-check.
pub fn virtual_deadline(task: &Task) -> Result<Time> {
    virtual_deadline_fraction(task.class).map(|f| f * task.deadline)
}

/// The virtual deadline as a fraction of `D`.
pub fn virtual_deadline_fraction(class: TaskClass) -> Result<f64> {
    match class {
        TaskClass::DoubleCheck => Ok(0.5),
        TaskClass::TripleCheck => Ok(std::f64::consts::SQRT_2 - 1.0),
        TaskClass::NonVerify => Err(Error::InvalidArgument(
            "non-verification tasks have no virtual deadline".into(),
        )),
    }
}

/// `(δ^o, δ^v) = (C/D', C/(D − D'))`. Densities above one are returned
/// as-is; the density test rejects them.
pub fn densities(task: &Task) -> Result<(f64, f64)> {
    let vd = virtual_deadline(task)?;
    Ok((task.wcet / vd, task.wcet / (task.deadline - vd)))
}

/// Brute-force argmin of `C/D' + k·C/(D − D')` over the grid
/// `D' = D·j/steps`, `1 <= j < steps`.
///
/// Independent of [`virtual_deadline`]: it never uses the closed form.
pub fn optimal_virtual_deadline_oracle(class: TaskClass, wcet: Time, deadline: Time, grid_steps: usize) -> Time {
    let k = class.checks() as f64;
    let mut best = (f64::INFINITY, deadline / 2.0);
    for j in 1..grid_steps {
        let vd = deadline * j as f64 / grid_steps as f64;
        let total = wcet / vd + k * wcet / (deadline - vd);
        if total < best.0 {
            best = (total, vd);
        }
    }
    best.1
}

/// Splits a task into its schedulable entities.
///
/// Non-verification tasks yield one entity with density `C/D`. Verification
/// tasks yield the original (deadline `D'`) and one or two checkers released
/// at `D'` with deadline `D`.
pub fn split_task(task: &Task) -> Vec<SchedEntity> {
    let base = SchedEntity {
        entity_id: entity_id(task.id, Role::Original),
        task_id: task.id,
        role: Role::Original,
        release_offset: 0.0,
        rel_deadline: task.deadline,
        exec: task.wcet,
        period: task.period,
        density: task.wcet / task.deadline,
    };
    if !task.class.is_verification() {
        return vec![base];
    }
    let vd = virtual_deadline(task).expect("verification class");
    let (d_orig, d_check) = densities(task).expect("verification class");
    let mut out = vec![SchedEntity {
        rel_deadline: vd,
        density: d_orig,
        ..base
    }];
    for role in [Role::Check1, Role::Check2].into_iter().take(task.class.checks()) {
        out.push(SchedEntity {
            entity_id: entity_id(task.id, role),
            role,
            release_offset: vd,
            density: d_check,
            ..base
        });
    }
    out
}

/// True iff every core's accumulated density is at most one.
pub fn density_test(partition: &Partition) -> bool {
    partition.core_density.iter().all(|&d| d <= 1.0 + EPS)
}
