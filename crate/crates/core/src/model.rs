//! Domain types shared by every other module: tasks, reliability classes,
//! schedulable entities and per-scheme partitions.
//!
//! Time is a 64-bit float in base ticks; every comparison goes through
//! [`EPS`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gen::GenConfig;

/// Time in base ticks.
pub type Time = f64;

/// Absolute tolerance for every time and density comparison.
pub const EPS: f64 = 1e-9;

/// Reliability class of a task: how many redundant executions each job needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskClass {
    NonVerify,
    DoubleCheck,
    TripleCheck,
}

impl TaskClass {
    /// Number of checker copies each job of this class spawns.
    pub fn checks(self) -> usize {
        match self {
            TaskClass::NonVerify => 0,
            TaskClass::DoubleCheck => 1,
            TaskClass::TripleCheck => 2,
        }
    }

    pub fn is_verification(self) -> bool {
        self != TaskClass::NonVerify
    }

    /// Short label used by the task-set text format.
    pub fn label(self) -> &'static str {
        match self {
            TaskClass::NonVerify => "N",
            TaskClass::DoubleCheck => "V2",
            TaskClass::TripleCheck => "V3",
        }
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(TaskClass::NonVerify),
            "V2" => Ok(TaskClass::DoubleCheck),
            "V3" => Ok(TaskClass::TripleCheck),
            other => Err(Error::InvalidArgument(format!("unknown task class `{other}`"))),
        }
    }
}

/// A sporadic task with an implicit deadline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Task {
    pub id: u32,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
    pub class: TaskClass,
}

impl Task {
    /// Builds an implicit-deadline task, rejecting non-positive or
    /// over-length execution times.
    pub fn new(id: u32, wcet: Time, period: Time, class: TaskClass) -> Result<Self> {
        let task = Task {
            id,
            wcet,
            period,
            deadline: period,
            class,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wcet > 0.0 && self.wcet.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "task {}: wcet must be positive, got {}",
                self.id, self.wcet
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "task {}: period must be positive, got {}",
                self.id, self.period
            )));
        }
        if (self.deadline - self.period).abs() > EPS {
            return Err(Error::InvalidArgument(format!(
                "task {}: only implicit deadlines are supported (D = T)",
                self.id
            )));
        }
        if self.wcet > self.deadline + EPS {
            return Err(Error::InvalidArgument(format!(
                "task {}: wcet {} exceeds deadline {}",
                self.id, self.wcet, self.deadline
            )));
        }
        Ok(())
    }

    pub fn utilization(&self) -> f64 {
        task_utilization(self)
    }
}

/// `C / T`.
pub fn task_utilization(task: &Task) -> f64 {
    task.wcet / task.period
}

/// An ordered collection of tasks plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    pub target_util: f64,
    pub seed: u64,
    pub meta: Option<GenConfig>,
}

impl TaskSet {
    /// Wraps hand-built tasks; the target utilization is their actual sum.
    pub fn from_tasks(tasks: Vec<Task>) -> Self {
        let target_util = tasks.iter().map(Task::utilization).sum();
        TaskSet {
            tasks,
            target_util,
            seed: 0,
            meta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn total_utilization(&self) -> f64 {
        self.tasks.iter().map(Task::utilization).sum()
    }

    pub fn count_class(&self, class: TaskClass) -> usize {
        self.tasks.iter().filter(|t| t.class == class).count()
    }

    /// Renders the line-oriented text format: a `n U seed` header and one
    /// `id wcet period class` line per task.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.tasks.len(), fmt_sig12(self.target_util), self.seed);
        for t in &self.tasks {
            out.push_str(&format!(
                "{} {} {} {}\n",
                t.id,
                fmt_sig12(t.wcet),
                fmt_sig12(t.period),
                t.class
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header needs `n U seed`, got `{header}`"),
            });
        }
        let n: usize = parse_field(fields[0], hline, "n")?;
        let target_util: f64 = parse_field(fields[1], hline, "U")?;
        let seed: u64 = parse_field(fields[2], hline, "seed")?;

        let mut tasks = Vec::with_capacity(n);
        for (lno, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse {
                    line: lno,
                    msg: format!("task line needs `id wcet period class`, got `{line}`"),
                });
            }
            let id: u32 = parse_field(f[0], lno, "id")?;
            let wcet: f64 = parse_field(f[1], lno, "wcet")?;
            let period: f64 = parse_field(f[2], lno, "period")?;
            let class: TaskClass = f[3].parse().map_err(|e: Error| Error::Parse {
                line: lno,
                msg: e.to_string(),
            })?;
            let task = Task::new(id, wcet, period, class).map_err(|e| Error::Parse {
                line: lno,
                msg: e.to_string(),
            })?;
            tasks.push(task);
        }
        if tasks.len() != n {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header announces {n} tasks, found {}", tasks.len()),
            });
        }
        Ok(TaskSet {
            tasks,
            target_util,
            seed,
            meta: None,
        })
    }
}

fn parse_field<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} `{s}`"),
    })
}

/// Decimal rendering with 12 significant digits, trailing zeros trimmed
/// (the `%.12g` convention).
pub fn fmt_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // The exponent is taken after rounding to 12 digits so that
    // 9.9999999999995 renders as 10.
    let sci = format!("{:.11e}", x);
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let exp: i32 = e.parse().expect("exponent");
    if !(-5..12).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Which computation of a task an entity stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Original,
    Check1,
    Check2,
}

impl Role {
    pub fn index(self) -> u64 {
        match self {
            Role::Original => 0,
            Role::Check1 => 1,
            Role::Check2 => 2,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Role::Original => "orig",
            Role::Check1 => "chk1",
            Role::Check2 => "chk2",
        }
    }

    pub fn is_checker(self) -> bool {
        self != Role::Original
    }
}

/// Entity IDs follow task order, then role order.
pub fn entity_id(task_id: u32, role: Role) -> u64 {
    u64::from(task_id) * 3 + role.index()
}

/// A schedulable unit derived from a task: its original computation or one
/// checker copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedEntity {
    pub entity_id: u64,
    pub task_id: u32,
    pub role: Role,
    /// Offset of this entity's release from the origin job's release.
    pub release_offset: Time,
    /// Deadline relative to the origin job's release.
    pub rel_deadline: Time,
    pub exec: Time,
    pub period: Time,
    pub density: f64,
}

impl SchedEntity {
    /// Demand per period, independent of the scheduling window.
    pub fn utilization(&self) -> f64 {
        self.exec / self.period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    LockStep,
    Hmr,
    FlexStep,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::LockStep, SchemeId::Hmr, SchemeId::FlexStep];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::LockStep => "LockStep",
            SchemeId::Hmr => "HMR",
            SchemeId::FlexStep => "FlexStep",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lockstep" => Ok(SchemeId::LockStep),
            "hmr" => Ok(SchemeId::Hmr),
            "flexstep" => Ok(SchemeId::FlexStep),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Fail,
}

/// A LockStep binding of 2 (DCLS) or 3 (TCLS) physical cores acting as one
/// logical core. The first member is the one whose `assignment` slot holds
/// the group's entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreGroup {
    pub member_cores: Vec<usize>,
    pub logical_index: usize,
    pub class: TaskClass,
}

impl CoreGroup {
    pub fn main_core(&self) -> usize {
        self.member_cores[0]
    }
}

/// HMR split-lock binding of one verification task to a main core and its
/// synchronous checker core(s).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HmrBinding {
    pub task_id: u32,
    pub main: usize,
    pub checkers: Vec<usize>,
}

/// Per-core entity assignment produced by one of the allocation policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub scheme: SchemeId,
    pub core_count: usize,
    pub assignment: Vec<Vec<SchedEntity>>,
    pub core_density: Vec<f64>,
    /// LockStep only.
    pub groups: Option<Vec<CoreGroup>>,
    /// HMR only.
    pub bindings: Option<Vec<HmrBinding>>,
    /// Tasks the policy could not place (LockStep group exhaustion).
    pub unplaced: Vec<u32>,
    pub outcome: Outcome,
}

impl Partition {
    pub fn empty(scheme: SchemeId, core_count: usize) -> Self {
        Partition {
            scheme,
            core_count,
            assignment: vec![Vec::new(); core_count],
            core_density: vec![0.0; core_count],
            groups: None,
            bindings: None,
            unplaced: Vec::new(),
            outcome: Outcome::Success,
        }
    }

    pub fn assign(&mut self, core: usize, entity: SchedEntity) {
        self.core_density[core] += entity.density;
        self.assignment[core].push(entity);
    }

    /// Core hosting the given entity, if any.
    pub fn core_of(&self, entity_id: u64) -> Option<usize> {
        self.assignment
            .iter()
            .position(|es| es.iter().any(|e| e.entity_id == entity_id))
    }

    pub fn entities(&self) -> impl Iterator<Item = (usize, &SchedEntity)> {
        self.assignment
            .iter()
            .enumerate()
            .flat_map(|(k, es)| es.iter().map(move |e| (k, e)))
    }

    /// Σ exec/period per core.
    pub fn core_utilization(&self) -> Vec<f64> {
        self.assignment
            .iter()
            .map(|es| es.iter().map(SchedEntity::utilization).sum())
            .collect()
    }

    /// Diagnostic rendering: one `core k: density Δ, entities [...]` line per
    /// core, followed by group or binding lines where the scheme has them.
    pub fn to_text(&self) -> String {
        let outcome = match self.outcome {
            Outcome::Success => "Success",
            Outcome::Fail => "Fail",
        };
        let mut out = format!("scheme {} cores {} outcome {}\n", self.scheme, self.core_count, outcome);
        for (k, es) in self.assignment.iter().enumerate() {
            let names: Vec<String> = es
                .iter()
                .map(|e| format!("t{}/{}", e.task_id, e.role.short()))
                .collect();
            out.push_str(&format!(
                "core {}: density {}, entities [{}]\n",
                k,
                fmt_sig12(self.core_density[k]),
                names.join(", ")
            ));
        }
        if let Some(groups) = &self.groups {
            for g in groups {
                out.push_str(&format!(
                    "group {} ({}): cores {:?}\n",
                    g.logical_index, g.class, g.member_cores
                ));
            }
        }
        if let Some(bindings) = &self.bindings {
            for b in bindings {
                out.push_str(&format!(
                    "binding t{}: main {} checkers {:?}\n",
                    b.task_id, b.main, b.checkers
                ));
            }
        }
        if !self.unplaced.is_empty() {
            out.push_str(&format!("unplaced {:?}\n", self.unplaced));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(c: f64, t: f64) -> Task {
        Task::new(0, c, t, TaskClass::NonVerify).unwrap()
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(task_utilization(&task(1.0, 2.0)), 0.5);
        assert_eq!(task_utilization(&task(5.0, 5.0)), 1.0);
        assert!((task_utilization(&task(3.0, 12.0)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn task_validation() {
        assert!(Task::new(1, 0.0, 2.0, TaskClass::NonVerify).is_err());
        assert!(Task::new(1, 1.0, -2.0, TaskClass::NonVerify).is_err());
        assert!(Task::new(1, 3.0, 2.0, TaskClass::NonVerify).is_err());
        assert!(Task::new(1, 2.0, 2.0, TaskClass::DoubleCheck).is_ok());
    }

    #[test]
    fn sig12_rendering() {
        assert_eq!(fmt_sig12(0.5), "0.5");
        assert_eq!(fmt_sig12(10.0), "10");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(123.456789012345), "123.456789012");
        assert_eq!(fmt_sig12(9.99999999999951), "10");
        assert_eq!(fmt_sig12(1.5e-7), "1.5e-7");
    }

    #[test]
    fn text_round_trip() {
        let ts = TaskSet {
            tasks: vec![
                Task::new(0, 1.0 / 3.0, 10.0, TaskClass::NonVerify).unwrap(),
                Task::new(1, 2.5, 123.456, TaskClass::DoubleCheck).unwrap(),
                Task::new(2, 0.125, 999.0, TaskClass::TripleCheck).unwrap(),
            ],
            target_util: 0.0541,
            seed: 42,
            meta: None,
        };
        let text = ts.to_text();
        assert!(text.starts_with("3 0.0541 42\n"));
        assert!(text.contains("1 2.5 123.456 V2\n"));
        let back = TaskSet::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        for (a, b) in ts.tasks.iter().zip(&back.tasks) {
            assert_eq!(a.class, b.class);
            assert!((a.wcet - b.wcet).abs() <= 1e-11 * a.wcet);
        }
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(TaskSet::parse("").is_err());
        assert!(TaskSet::parse("2 1.0 0\n0 1 2 N\n").is_err());
        assert!(TaskSet::parse("1 1.0 0\n0 1 2 X\n").is_err());
        assert!(TaskSet::parse("1 1.0 0\n0 3 2 N\n").is_err());
    }

    #[test]
    fn entity_ids_follow_task_then_role_order() {
        assert!(entity_id(0, Role::Check2) < entity_id(1, Role::Original));
        assert_eq!(entity_id(4, Role::Check1), 13);
    }
}
