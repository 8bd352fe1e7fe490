//! Allocation policies for the three verification schemes.
//!
//! All three are worst-fit (min-density core first) with ties broken by the
//! lowest core index, and all are deterministic in the task set.

use std::cmp::Ordering;

use crate::analysis::{density_test, split_task};
use crate::error::{Error, Result};
use crate::model::{
    entity_id, CoreGroup, HmrBinding, Outcome, Partition, Role, SchedEntity, SchemeId, Task, TaskClass, TaskSet, EPS,
};

/// One placement decision, with the core densities seen just before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub entity_id: u64,
    pub task_id: u32,
    pub core: usize,
    pub density_before: Vec<f64>,
}

pub fn partition(ts: &TaskSet, m: usize, scheme: SchemeId) -> Result<Partition> {
    match scheme {
        SchemeId::FlexStep => partition_flexstep(ts, m),
        SchemeId::LockStep => partition_lockstep(ts, m),
        SchemeId::Hmr => partition_hmr(ts, m),
    }
}

/// Tasks of one class in descending utilization, stable in task order.
fn by_descending_util(ts: &TaskSet, class: TaskClass) -> Vec<&Task> {
    let mut tasks: Vec<&Task> = ts.tasks.iter().filter(|t| t.class == class).collect();
    tasks.sort_by(|a, b| b.utilization().partial_cmp(&a.utilization()).unwrap_or(Ordering::Equal));
    tasks
}

/// Index of the min-density core among `candidates`, lowest index on ties.
fn argmin(density: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for k in candidates {
        match best {
            Some(b) if density[k] >= density[b] => {}
            _ => best = Some(k),
        }
    }
    best
}

fn check_core_count(ts: &TaskSet, m: usize, scheme: SchemeId) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one core".into()));
    }
    let need = ts.tasks.iter().map(|t| t.class.checks() + 1).max().unwrap_or(1);
    if need > m {
        return Err(Error::InfeasibleConfiguration(format!(
            "{scheme} needs {need} distinct cores for its verification tasks, only {m} available"
        )));
    }
    Ok(())
}

fn finish(mut p: Partition) -> Partition {
    p.outcome = if p.unplaced.is_empty() && density_test(&p) {
        Outcome::Success
    } else {
        Outcome::Fail
    };
    p
}

/// Worst-fit partitioning with virtual deadlines: verification tasks first
/// (triple-check, then double-check, each by descending utilization) with
/// their original and checker computations on pairwise distinct cores, then
/// non-verification tasks. Fails iff some core's density exceeds one; the
/// full assignment is returned either way.
pub fn partition_flexstep(ts: &TaskSet, m: usize) -> Result<Partition> {
    partition_flexstep_traced(ts, m).map(|(p, _)| p)
}

/// [`partition_flexstep`] plus the sequence of placement decisions.
pub fn partition_flexstep_traced(ts: &TaskSet, m: usize) -> Result<(Partition, Vec<Placement>)> {
    check_core_count(ts, m, SchemeId::FlexStep)?;
    let mut p = Partition::empty(SchemeId::FlexStep, m);
    let mut trace = Vec::with_capacity(ts.len() * 2);

    let order = [TaskClass::TripleCheck, TaskClass::DoubleCheck, TaskClass::NonVerify];
    for class in order {
        for task in by_descending_util(ts, class) {
            let mut used: Vec<usize> = Vec::with_capacity(3);
            for entity in split_task(task) {
                let core = argmin(&p.core_density, (0..m).filter(|k| !used.contains(k))).expect("core count checked");
                trace.push(Placement {
                    entity_id: entity.entity_id,
                    task_id: task.id,
                    core,
                    density_before: p.core_density.clone(),
                });
                p.assign(core, entity);
                used.push(core);
            }
        }
    }
    Ok((finish(p), trace))
}

fn whole_task_entity(task: &Task, role: Role) -> SchedEntity {
    SchedEntity {
        entity_id: entity_id(task.id, role),
        task_id: task.id,
        role,
        release_offset: 0.0,
        rel_deadline: task.deadline,
        exec: task.wcet,
        period: task.period,
        density: task.utilization(),
    }
}

/// LockStep baseline. Verification tasks open class-homogeneous DCLS (2
/// cores) or TCLS (3 cores) groups on demand, first-fit into the groups
/// already open; each group is one logical core of capacity one whose
/// entities live on its first member core. Non-verification tasks then go
/// worst-fit over all logical cores. Running out of cores for a group is a
/// schedulability failure, not an error.
pub fn partition_lockstep(ts: &TaskSet, m: usize) -> Result<Partition> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one core".into()));
    }
    let mut p = Partition::empty(SchemeId::LockStep, m);
    let mut groups: Vec<CoreGroup> = Vec::new();
    let mut next_free = 0usize;

    for class in [TaskClass::TripleCheck, TaskClass::DoubleCheck] {
        let size = class.checks() + 1;
        for task in by_descending_util(ts, class) {
            let entity = whole_task_entity(task, Role::Original);
            let fits = groups
                .iter()
                .find(|g| g.class == class && p.core_density[g.main_core()] + entity.density <= 1.0 + EPS);
            let main = match fits {
                Some(g) => g.main_core(),
                None if next_free + size <= m => {
                    let members: Vec<usize> = (next_free..next_free + size).collect();
                    next_free += size;
                    groups.push(CoreGroup {
                        member_cores: members,
                        logical_index: groups.len(),
                        class,
                    });
                    next_free - size
                }
                None => {
                    p.unplaced.push(task.id);
                    continue;
                }
            };
            p.assign(main, entity);
        }
    }

    let logical: Vec<usize> = groups.iter().map(CoreGroup::main_core).chain(next_free..m).collect();
    let mut sorted_logical = logical.clone();
    sorted_logical.sort_unstable();
    for task in by_descending_util(ts, TaskClass::NonVerify) {
        let core = argmin(&p.core_density, sorted_logical.iter().copied()).expect("m >= 1");
        p.assign(core, whole_task_entity(task, Role::Original));
    }
    p.groups = Some(groups);
    Ok(finish(p))
}

/// HMR baseline. Each verification task is bound to its own main core and
/// one or two checker cores, chosen as the min-density cores; the mirrored
/// synchronous check adds the task's utilization to every bound core.
/// Non-verification tasks fill cores that host no verification load first,
/// then fall back to the global min-density core.
///
/// `outcome` here only reflects the necessary per-core utilization bound;
/// the schedulability verdict comes from simulation.
pub fn partition_hmr(ts: &TaskSet, m: usize) -> Result<Partition> {
    check_core_count(ts, m, SchemeId::Hmr)?;
    let mut p = Partition::empty(SchemeId::Hmr, m);
    let mut bindings = Vec::new();
    let mut hosts_verification = vec![false; m];

    for class in [TaskClass::TripleCheck, TaskClass::DoubleCheck] {
        for task in by_descending_util(ts, class) {
            let mut cores: Vec<usize> = (0..m).collect();
            cores.sort_by(|&a, &b| {
                p.core_density[a]
                    .partial_cmp(&p.core_density[b])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            cores.truncate(class.checks() + 1);
            let roles = [Role::Original, Role::Check1, Role::Check2];
            for (&core, &role) in cores.iter().zip(roles.iter()) {
                p.assign(core, whole_task_entity(task, role));
                hosts_verification[core] = true;
            }
            bindings.push(HmrBinding {
                task_id: task.id,
                main: cores[0],
                checkers: cores[1..].to_vec(),
            });
        }
    }

    for task in by_descending_util(ts, TaskClass::NonVerify) {
        let entity = whole_task_entity(task, Role::Original);
        let free = argmin(&p.core_density, (0..m).filter(|&k| !hosts_verification[k]))
            .filter(|&k| p.core_density[k] + entity.density <= 1.0 + EPS);
        let core = free.or_else(|| argmin(&p.core_density, 0..m)).expect("m >= 1");
        p.assign(core, entity);
    }
    p.bindings = Some(bindings);
    Ok(finish(p))
}
