//! Discrete-event, preemptive, per-core EDF simulation of a [`Partition`].
//!
//! Releases are synchronous at `t = 0` and strictly periodic afterwards.
//! Each scheme adds its own execution semantics:
//!
//! * FlexStep: checker jobs are ordinary preemptible EDF jobs with the task's
//!   deadline. They are released at the virtual deadline, or (optionally)
//!   become eligible as soon as the original runs, never executing more work
//!   than the original has completed.
//! * LockStep: each group is one logical core hosted on its first member.
//! * HMR: a verification job runs on its main core under ordinary EDF, and
//!   while it runs it also occupies every bound checker core. Non-verification
//!   jobs cannot preempt that checker occupancy; verification jobs preempt
//!   each other by EDF, and a main whose checker is held by an
//!   earlier-deadline job stalls.
//!
//! Jobs still holding work at their deadline are recorded as misses and
//! dropped.
//!
//! Two time representations share one engine: 64-bit floats compared with
//! [`EPS`], and exact integers at [`EXACT_TICKS_PER_UNIT`] ticks per base
//! unit. In integer mode derived window boundaries that fall between ticks
//! are rounded inwards (deadlines down, releases up), so the simulated
//! system is never easier than the analysed one.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::model::{Outcome, Partition, Role, SchemeId, TaskSet, EPS};
use crate::partition::partition;

/// Integer ticks per base time unit in [`TimeMode::ExactInteger`].
pub const EXACT_TICKS_PER_UNIT: i64 = 1 << 16;

/// Upper bound on the default horizon, in base units.
pub const HORIZON_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseModel {
    SynchronousPeriodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckerRelease {
    /// Checker jobs release at `job release + D'`.
    AtVirtualDeadline,
    /// Checker jobs may run once the original has started, trailing its
    /// completed work.
    AtOriginalStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    Float,
    ExactInteger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// No job is released at or after this time (base units).
    pub horizon: f64,
    pub release_model: ReleaseModel,
    pub checker_release: CheckerRelease,
    pub time_mode: TimeMode,
    pub stop_at_first_miss: bool,
    pub record_trace: bool,
    /// Verify EDF order, work conservation and progress coupling at every
    /// dispatch; a violation aborts with [`Error::InvariantViolated`].
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(horizon: f64) -> Self {
        SimConfig {
            horizon,
            release_model: ReleaseModel::SynchronousPeriodic,
            checker_release: CheckerRelease::AtVirtualDeadline,
            time_mode: TimeMode::Float,
            stop_at_first_miss: false,
            record_trace: false,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Miss {
    pub entity_id: u64,
    pub job_index: u64,
    pub abs_deadline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Dispatch,
    Preempt,
    Complete,
    Release,
    Miss,
}

impl TraceKind {
    fn as_str(self) -> &'static str {
        match self {
            TraceKind::Dispatch => "dispatch",
            TraceKind::Preempt => "preempt",
            TraceKind::Complete => "complete",
            TraceKind::Release => "release",
            TraceKind::Miss => "miss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub t: f64,
    pub core: usize,
    pub kind: TraceKind,
    pub entity_id: u64,
    pub job: u64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} core={} event={} entity={} job={}",
            self.t,
            self.core,
            self.kind.as_str(),
            self.entity_id,
            self.job
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimResult {
    pub misses: Vec<Miss>,
    pub preemptions: u64,
    /// Worst observed completion time relative to the origin job's release.
    pub max_response: BTreeMap<u64, f64>,
    pub busiest_core_util: f64,
    pub trace: Vec<TraceEvent>,
}

impl SimResult {
    pub fn schedulable(&self) -> bool {
        self.misses.is_empty()
    }

    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&ev.to_string());
            out.push('\n');
        }
        out
    }
}

/// Least common multiple of the (integral) periods, capped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub value: f64,
    /// The lcm exceeded the cap (or overflowed) and `value` is the cap.
    pub approximate: bool,
}

pub fn hyperperiod_horizon(ts: &TaskSet, cap: f64) -> Result<Horizon> {
    let mut lcm: u64 = 1;
    for t in &ts.tasks {
        let p = integral(t.period).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "hyperperiod needs integer periods, task {} has {}",
                t.id, t.period
            ))
        })?;
        let g = lcm.gcd(&p);
        match (lcm / g).checked_mul(p) {
            Some(l) if (l as f64) <= cap => lcm = l,
            _ => {
                return Ok(Horizon {
                    value: cap,
                    approximate: true,
                })
            }
        }
    }
    Ok(Horizon {
        value: lcm as f64,
        approximate: false,
    })
}

/// `min(2 × hyperperiod, 10^6)`; task sets with non-integral periods get
/// the cap.
pub fn default_horizon(ts: &TaskSet) -> f64 {
    match hyperperiod_horizon(ts, HORIZON_CAP) {
        Ok(h) => (2.0 * h.value).min(HORIZON_CAP),
        Err(_) => HORIZON_CAP,
    }
}

fn integral(x: f64) -> Option<u64> {
    let r = x.round();
    ((x - r).abs() <= EPS && r >= 1.0).then_some(r as u64)
}

/// How a verdict is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictMode {
    /// Density test for FlexStep and LockStep; HMR always simulates.
    Analytic,
    /// Simulation for every scheme.
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictOptions {
    pub mode: VerdictMode,
    /// `None` selects [`default_horizon`].
    pub horizon: Option<f64>,
    pub checker_release: CheckerRelease,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions {
            mode: VerdictMode::Analytic,
            horizon: None,
            checker_release: CheckerRelease::AtVirtualDeadline,
        }
    }
}

/// Schedulability verdict of a task set under one scheme.
///
/// Simulation verdicts first reject any partition with a core whose
/// utilization exceeds one (a necessary condition that a finite horizon may
/// not expose), then simulate until the first miss.
pub fn schedulable(ts: &TaskSet, m: usize, scheme: SchemeId, opts: VerdictOptions) -> Result<bool> {
    let p = partition(ts, m, scheme)?;
    let simulate_it = scheme == SchemeId::Hmr || opts.mode == VerdictMode::Sim;
    if !simulate_it {
        return Ok(p.outcome == Outcome::Success);
    }
    if !p.unplaced.is_empty() || p.core_utilization().iter().any(|&u| u > 1.0 + EPS) {
        return Ok(false);
    }
    let mut cfg = SimConfig::new(opts.horizon.unwrap_or_else(|| default_horizon(ts)));
    cfg.checker_release = opts.checker_release;
    cfg.stop_at_first_miss = true;
    Ok(simulate(&p, &cfg)?.schedulable())
}

pub fn simulate(partition: &Partition, cfg: &SimConfig) -> Result<SimResult> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {}",
            cfg.horizon
        )));
    }
    match cfg.time_mode {
        TimeMode::Float => Engine::<FTime>::build(partition, cfg)?.run(),
        TimeMode::ExactInteger => Engine::<ITime>::build(partition, cfg)?.run(),
    }
}

// ---------------------------------------------------------------------------
// Time representations

trait Tick: Copy + Ord + fmt::Debug + Add<Output = Self> + Sub<Output = Self> + AddAssign + SubAssign {
    const ZERO: Self;
    /// Work at or below this amount counts as finished.
    fn is_done(self) -> bool;
    fn to_base(self) -> f64;
    fn times(self, k: u64) -> Self;
    /// A window start (rounded up in integer mode).
    fn release_from(x: f64) -> Self;
    /// A window end (rounded down in integer mode).
    fn deadline_from(x: f64) -> Self;
    /// An execution demand or period; must be exact in integer mode.
    fn exact_from(x: f64) -> Result<Self>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FTime(f64);

impl Eq for FTime {}

impl PartialOrd for FTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for FTime {
    type Output = FTime;
    fn add(self, o: FTime) -> FTime {
        FTime(self.0 + o.0)
    }
}

impl Sub for FTime {
    type Output = FTime;
    fn sub(self, o: FTime) -> FTime {
        FTime(self.0 - o.0)
    }
}

impl AddAssign for FTime {
    fn add_assign(&mut self, o: FTime) {
        self.0 += o.0;
    }
}

impl SubAssign for FTime {
    fn sub_assign(&mut self, o: FTime) {
        self.0 -= o.0;
    }
}

impl Tick for FTime {
    const ZERO: Self = FTime(0.0);
    fn is_done(self) -> bool {
        self.0 <= EPS
    }
    fn to_base(self) -> f64 {
        self.0
    }
    fn times(self, k: u64) -> Self {
        FTime(k as f64 * self.0)
    }
    fn release_from(x: f64) -> Self {
        FTime(x)
    }
    fn deadline_from(x: f64) -> Self {
        FTime(x)
    }
    fn exact_from(x: f64) -> Result<Self> {
        Ok(FTime(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct ITime(i64);

impl Add for ITime {
    type Output = ITime;
    fn add(self, o: ITime) -> ITime {
        ITime(self.0 + o.0)
    }
}

impl Sub for ITime {
    type Output = ITime;
    fn sub(self, o: ITime) -> ITime {
        ITime(self.0 - o.0)
    }
}

impl AddAssign for ITime {
    fn add_assign(&mut self, o: ITime) {
        self.0 += o.0;
    }
}

impl SubAssign for ITime {
    fn sub_assign(&mut self, o: ITime) {
        self.0 -= o.0;
    }
}

impl ITime {
    fn scaled(x: f64) -> f64 {
        x * EXACT_TICKS_PER_UNIT as f64
    }
}

impl Tick for ITime {
    const ZERO: Self = ITime(0);
    fn is_done(self) -> bool {
        self.0 <= 0
    }
    fn to_base(self) -> f64 {
        self.0 as f64 / EXACT_TICKS_PER_UNIT as f64
    }
    fn times(self, k: u64) -> Self {
        ITime(self.0 * k as i64)
    }
    fn release_from(x: f64) -> Self {
        // Snap values that are integral up to float noise before rounding.
        let s = Self::scaled(x);
        let r = s.round();
        ITime(if (s - r).abs() < 1e-6 { r } else { s.ceil() } as i64)
    }
    fn deadline_from(x: f64) -> Self {
        let s = Self::scaled(x);
        let r = s.round();
        ITime(if (s - r).abs() < 1e-6 { r } else { s.floor() } as i64)
    }
    fn exact_from(x: f64) -> Result<Self> {
        let r = x.round();
        if (x - r).abs() > EPS {
            return Err(Error::InvalidArgument(format!(
                "exact-integer mode needs integral task parameters, got {x}"
            )));
        }
        Ok(ITime(r as i64 * EXACT_TICKS_PER_UNIT))
    }
}

// ---------------------------------------------------------------------------
// Engine

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobState {
    NoJob,
    Ready,
    Running,
    Done,
    Missed,
}

impl JobState {
    fn active(self) -> bool {
        matches!(self, JobState::Ready | JobState::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum EntKind {
    /// Independently released, scheduled from its core's ready queue.
    Plain,
    /// HMR verification original: needs its checker cores at the same time.
    Gang { checkers: Vec<usize> },
    /// HMR checker occupancy; never released on its own.
    Mirror,
    /// FlexStep checker trailing its original's progress.
    Coupled { orig: usize },
}

#[derive(Debug, Clone)]
struct Ent<T> {
    id: u64,
    core: usize,
    period: T,
    offset: T,
    rel_deadline: T,
    exec: T,
    kind: EntKind,
    /// An original whose coupled checkers depend on its progress.
    has_dependents: bool,
    job: u64,
    next_k: u64,
    origin_release: T,
    deadline: T,
    remaining: T,
    executed: T,
    state: JobState,
}

impl<T: Tick> Ent<T> {
    fn key(&self) -> (T, u64) {
        (self.deadline, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Occupant {
    Idle,
    Job(usize),
    Mirror(usize),
    Stall(usize),
}

struct Core<T> {
    ready: BinaryHeap<Reverse<(T, u64, usize, u64)>>,
    coupled: Vec<usize>,
    running: Occupant,
    run_since: T,
    gen: u64,
    busy: T,
    dirty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EvKind {
    Completion { core: usize, gen: u64 },
    CatchUp { core: usize, gen: u64 },
    Deadline { ent: usize, job: u64 },
    Release { ent: usize },
}

impl EvKind {
    fn class(&self) -> u8 {
        match self {
            EvKind::Completion { .. } | EvKind::CatchUp { .. } => 0,
            EvKind::Deadline { .. } => 1,
            EvKind::Release { .. } => 2,
        }
    }
}

struct Engine<T> {
    ents: Vec<Ent<T>>,
    cores: Vec<Core<T>>,
    events: BinaryHeap<Reverse<(T, u8, u64, EvKind)>>,
    seq: u64,
    horizon: T,
    global: bool,
    hmr: bool,
    /// HMR verification jobs that are ready or running.
    gang_jobs: Vec<usize>,
    cfg: SimConfig,
    result: SimResult,
}

impl<T: Tick> Engine<T> {
    fn build(p: &Partition, cfg: &SimConfig) -> Result<Self> {
        let coupled_mode = p.scheme == SchemeId::FlexStep && cfg.checker_release == CheckerRelease::AtOriginalStart;
        let hmr = p.scheme == SchemeId::Hmr;

        let mut ents: Vec<Ent<T>> = Vec::new();
        let mut index_of: BTreeMap<u64, usize> = BTreeMap::new();
        for (core, e) in p.entities() {
            let is_checker = e.role.is_checker();
            let offset = if coupled_mode && is_checker {
                T::ZERO
            } else {
                T::release_from(e.release_offset)
            };
            let ent = Ent {
                id: e.entity_id,
                core,
                period: T::exact_from(e.period)?,
                offset,
                rel_deadline: T::deadline_from(e.rel_deadline),
                exec: T::exact_from(e.exec)?,
                kind: EntKind::Plain,
                has_dependents: false,
                job: 0,
                next_k: 0,
                origin_release: T::ZERO,
                deadline: T::ZERO,
                remaining: T::ZERO,
                executed: T::ZERO,
                state: JobState::NoJob,
            };
            index_of.insert(e.entity_id, ents.len());
            ents.push(ent);
        }

        // Wire up scheme-specific coupling.
        let lookup = |task_id: u32, role: Role| index_of.get(&crate::model::entity_id(task_id, role)).copied();
        if hmr {
            for b in p.bindings.iter().flatten() {
                let orig = lookup(b.task_id, Role::Original)
                    .ok_or_else(|| Error::InvalidArgument(format!("binding for unknown task {}", b.task_id)))?;
                ents[orig].kind = EntKind::Gang {
                    checkers: b.checkers.clone(),
                };
                for role in [Role::Check1, Role::Check2] {
                    if let Some(i) = lookup(b.task_id, role) {
                        ents[i].kind = EntKind::Mirror;
                    }
                }
            }
        }
        if coupled_mode {
            for i in 0..ents.len() {
                let e = &p.assignment[ents[i].core]
                    .iter()
                    .find(|e| e.entity_id == ents[i].id)
                    .copied()
                    .expect("entity from partition");
                if e.role.is_checker() {
                    let orig = lookup(e.task_id, Role::Original).ok_or_else(|| {
                        Error::InvalidArgument(format!("checker without original, task {}", e.task_id))
                    })?;
                    ents[i].kind = EntKind::Coupled { orig };
                    ents[orig].has_dependents = true;
                }
            }
        }

        let cores = (0..p.core_count)
            .map(|_| Core {
                ready: BinaryHeap::new(),
                coupled: Vec::new(),
                running: Occupant::Idle,
                run_since: T::ZERO,
                gen: 0,
                busy: T::ZERO,
                dirty: false,
            })
            .collect();

        let mut engine = Engine {
            ents,
            cores,
            events: BinaryHeap::new(),
            seq: 0,
            horizon: T::release_from(cfg.horizon),
            global: hmr || coupled_mode,
            hmr,
            gang_jobs: Vec::new(),
            cfg: cfg.clone(),
            result: SimResult::default(),
        };
        for i in 0..engine.ents.len() {
            if engine.ents[i].kind != EntKind::Mirror && engine.ents[i].offset < engine.horizon {
                let t = engine.ents[i].offset;
                engine.push(t, EvKind::Release { ent: i });
            }
        }
        Ok(engine)
    }

    fn push(&mut self, t: T, kind: EvKind) {
        self.seq += 1;
        self.events.push(Reverse((t, kind.class(), self.seq, kind)));
    }

    fn trace(&mut self, t: T, core: usize, kind: TraceKind, ent: usize) {
        if self.cfg.record_trace {
            let e = &self.ents[ent];
            self.result.trace.push(TraceEvent {
                t: t.to_base(),
                core,
                kind,
                entity_id: e.id,
                job: e.job,
            });
        }
    }

    fn run(mut self) -> Result<SimResult> {
        let mut now = T::ZERO;
        while let Some(Reverse((t, _, _, kind))) = self.events.pop() {
            now = t;
            self.handle(t, kind);
            while let Some(Reverse((t2, ..))) = self.events.peek() {
                if *t2 != t {
                    break;
                }
                let Reverse((_, _, _, kind)) = self.events.pop().expect("peeked");
                self.handle(t, kind);
            }
            if self.cfg.stop_at_first_miss && !self.result.misses.is_empty() {
                break;
            }
            self.dispatch(t);
            if self.cfg.check_invariants {
                self.verify(t)?;
            }
        }
        for k in 0..self.cores.len() {
            self.stop(k, now);
        }
        let span = now.max(self.horizon).to_base();
        self.result.busiest_core_util = self.cores.iter().map(|c| c.busy.to_base() / span).fold(0.0, f64::max);
        Ok(self.result)
    }

    fn handle(&mut self, t: T, kind: EvKind) {
        match kind {
            EvKind::Release { ent } => self.release(ent, t),
            EvKind::Deadline { ent, job } => {
                let e = &self.ents[ent];
                if e.job == job && e.state.active() {
                    if self.remaining_at(ent, t).is_done() {
                        self.complete(ent, t);
                    } else {
                        self.miss(ent, t);
                    }
                }
            }
            EvKind::Completion { core, gen } => {
                if self.cores[core].gen == gen {
                    if let Occupant::Job(e) = self.cores[core].running {
                        self.complete(e, t);
                    }
                }
            }
            EvKind::CatchUp { core, gen } => {
                if self.cores[core].gen == gen {
                    self.cores[core].dirty = true;
                }
            }
        }
    }

    fn running_on(&self, ent: usize) -> bool {
        self.cores[self.ents[ent].core].running == Occupant::Job(ent)
    }

    fn remaining_at(&self, ent: usize, t: T) -> T {
        let e = &self.ents[ent];
        if self.running_on(ent) {
            e.remaining - (t - self.cores[e.core].run_since)
        } else {
            e.remaining
        }
    }

    fn executed_at(&self, ent: usize, t: T) -> T {
        let e = &self.ents[ent];
        if self.running_on(ent) {
            e.executed + (t - self.cores[e.core].run_since)
        } else {
            e.executed
        }
    }

    fn release(&mut self, ent: usize, t: T) {
        if self.ents[ent].state.active() {
            // Float noise can order a release just ahead of the previous
            // job's deadline; settle that job first.
            if self.remaining_at(ent, t).is_done() {
                self.complete(ent, t);
            } else {
                self.miss(ent, t);
            }
        }
        let e = &mut self.ents[ent];
        let k = e.next_k;
        e.job = k;
        e.next_k += 1;
        e.origin_release = e.period.times(k);
        e.deadline = e.origin_release + e.rel_deadline;
        e.remaining = e.exec;
        e.executed = T::ZERO;
        e.state = JobState::Ready;
        let (core, deadline, id) = (e.core, e.deadline, e.id);
        let next = e.period.times(k + 1) + e.offset;
        match &e.kind {
            EntKind::Plain => self.cores[core].ready.push(Reverse((deadline, id, ent, k))),
            EntKind::Gang { .. } => self.gang_jobs.push(ent),
            EntKind::Coupled { .. } => {
                if !self.cores[core].coupled.contains(&ent) {
                    self.cores[core].coupled.push(ent);
                }
            }
            EntKind::Mirror => unreachable!("mirrors are never released"),
        }
        self.cores[core].dirty = true;
        self.push(deadline, EvKind::Deadline { ent, job: k });
        if next < self.horizon {
            self.push(next, EvKind::Release { ent });
        }
        self.trace(t, core, TraceKind::Release, ent);
    }

    fn complete(&mut self, ent: usize, t: T) {
        let core = self.ents[ent].core;
        if self.running_on(ent) {
            self.stop(core, t);
        }
        let e = &mut self.ents[ent];
        e.remaining = T::ZERO;
        e.executed = e.exec;
        e.state = JobState::Done;
        let response = (t - e.origin_release).to_base();
        let slot = self.result.max_response.entry(e.id).or_insert(0.0);
        *slot = slot.max(response);
        self.gang_jobs.retain(|&g| g != ent);
        self.cores[core].dirty = true;
        self.trace(t, core, TraceKind::Complete, ent);
    }

    fn miss(&mut self, ent: usize, t: T) {
        let core = self.ents[ent].core;
        if self.running_on(ent) {
            self.stop(core, t);
        }
        let e = &mut self.ents[ent];
        e.state = JobState::Missed;
        self.result.misses.push(Miss {
            entity_id: e.id,
            job_index: e.job,
            abs_deadline: e.deadline.to_base(),
        });
        self.gang_jobs.retain(|&g| g != ent);
        self.cores[core].dirty = true;
        self.trace(t, core, TraceKind::Miss, ent);
    }

    /// Ends the current occupancy of `core`, charging elapsed time.
    fn stop(&mut self, core: usize, t: T) {
        let c = &mut self.cores[core];
        let elapsed = t - c.run_since;
        match c.running {
            Occupant::Job(e) => {
                c.busy += elapsed;
                let e = &mut self.ents[e];
                e.remaining -= elapsed;
                e.executed += elapsed;
                if e.state == JobState::Running {
                    e.state = JobState::Ready;
                }
            }
            Occupant::Mirror(_) => c.busy += elapsed,
            Occupant::Idle | Occupant::Stall(_) => {}
        }
        c.running = Occupant::Idle;
        c.run_since = t;
        c.gen += 1;
        c.dirty = true;
    }

    fn start(&mut self, core: usize, occ: Occupant, t: T) {
        let c = &mut self.cores[core];
        c.running = occ;
        c.run_since = t;
        c.gen += 1;
        let gen = c.gen;
        if let Occupant::Job(ent) = occ {
            let e = &mut self.ents[ent];
            e.state = JobState::Running;
            let done_at = t + e.remaining;
            self.push(done_at, EvKind::Completion { core, gen });
            self.trace(t, core, TraceKind::Dispatch, ent);
        }
    }

    /// Drops stale heap entries and returns the EDF head of `core`.
    fn heap_top(&mut self, core: usize) -> Option<usize> {
        while let Some(&Reverse((_, _, ent, job))) = self.cores[core].ready.peek() {
            let e = &self.ents[ent];
            if e.job == job && e.state == JobState::Ready {
                return Some(ent);
            }
            self.cores[core].ready.pop();
        }
        None
    }

    fn dispatch(&mut self, t: T) {
        if self.global {
            let desired = if self.hmr {
                self.plan_hmr()
            } else {
                self.plan_coupled(t)
            };
            self.apply(desired, t);
            if !self.hmr {
                self.schedule_catch_ups(t);
            }
        } else {
            for k in 0..self.cores.len() {
                if self.cores[k].dirty {
                    self.cores[k].dirty = false;
                    self.dispatch_local(k, t);
                }
            }
        }
    }

    fn dispatch_local(&mut self, k: usize, t: T) {
        let Some(top) = self.heap_top(k) else {
            return;
        };
        match self.cores[k].running {
            Occupant::Job(r) if self.ents[r].key() <= self.ents[top].key() => {}
            Occupant::Job(r) => {
                self.stop(k, t);
                self.result.preemptions += 1;
                self.trace(t, k, TraceKind::Preempt, r);
                let e = &self.ents[r];
                let entry = Reverse((e.deadline, e.id, r, e.job));
                self.cores[k].ready.push(entry);
                self.cores[k].ready.pop();
                self.start(k, Occupant::Job(top), t);
            }
            _ => {
                self.cores[k].ready.pop();
                self.start(k, Occupant::Job(top), t);
            }
        }
        self.cores[k].dirty = false;
    }

    /// Best plain candidate on `core`: its running plain job or heap head.
    fn best_plain(&mut self, core: usize) -> Option<usize> {
        let top = self.heap_top(core);
        let running = match self.cores[core].running {
            Occupant::Job(e) if self.ents[e].kind == EntKind::Plain => Some(e),
            _ => None,
        };
        match (running, top) {
            (Some(r), Some(h)) => Some(if self.ents[h].key() < self.ents[r].key() { h } else { r }),
            (a, b) => a.or(b),
        }
    }

    fn plan_hmr(&mut self) -> Vec<Occupant> {
        let m = self.cores.len();
        let mut plan = vec![Occupant::Idle; m];
        let mut gangs = self.gang_jobs.clone();
        gangs.sort_by_key(|&g| self.ents[g].key());
        for g in gangs {
            let main = self.ents[g].core;
            if plan[main] != Occupant::Idle {
                continue;
            }
            if let Some(n) = self.best_plain(main) {
                if self.ents[n].key() < self.ents[g].key() {
                    continue;
                }
            }
            let EntKind::Gang { checkers } = &self.ents[g].kind else {
                unreachable!("gang list holds gang entities");
            };
            if checkers.iter().all(|&c| plan[c] == Occupant::Idle) {
                for &c in checkers {
                    plan[c] = Occupant::Mirror(g);
                }
                plan[main] = Occupant::Job(g);
            } else {
                plan[main] = Occupant::Stall(g);
            }
        }
        for (k, slot) in plan.iter_mut().enumerate() {
            if *slot == Occupant::Idle {
                if let Some(n) = self.best_plain(k) {
                    *slot = Occupant::Job(n);
                }
            }
        }
        plan
    }

    /// Coupled checker may run now, ahead of the original's progress check.
    fn strictly_behind(&self, c: usize, t: T) -> bool {
        let EntKind::Coupled { orig } = self.ents[c].kind else {
            return true;
        };
        let o = &self.ents[orig];
        if o.job != self.ents[c].job {
            return false;
        }
        if o.state == JobState::Done {
            return true;
        }
        let lead = self.executed_at(orig, t) - self.executed_at(c, t);
        !lead.is_done()
    }

    fn plan_coupled(&mut self, t: T) -> Vec<Occupant> {
        let m = self.cores.len();
        let mut plan = vec![Occupant::Idle; m];
        for (k, slot) in plan.iter_mut().enumerate() {
            let mut best = self.best_plain(k);
            let coupled = self.cores[k].coupled.clone();
            for c in coupled {
                if self.ents[c].state.active()
                    && self.strictly_behind(c, t)
                    && best.is_none_or(|b| self.ents[c].key() < self.ents[b].key())
                {
                    best = Some(c);
                }
            }
            if let Some(b) = best {
                *slot = Occupant::Job(b);
            }
        }
        // Checkers with no lead may follow a running original, but never
        // displace an original that others depend on.
        for k in 0..m {
            let current = match plan[k] {
                Occupant::Job(e) if self.ents[e].has_dependents => continue,
                Occupant::Job(e) => Some(e),
                _ => None,
            };
            let mut best = current;
            for &c in &self.cores[k].coupled {
                let EntKind::Coupled { orig } = self.ents[c].kind else {
                    continue;
                };
                let o = &self.ents[orig];
                let follows = self.ents[c].state.active()
                    && o.job == self.ents[c].job
                    && o.state.active()
                    && plan[o.core] == Occupant::Job(orig)
                    && !self.strictly_behind(c, t);
                if follows && best.is_none_or(|b| self.ents[c].key() < self.ents[b].key()) {
                    best = Some(c);
                }
            }
            if let Some(b) = best {
                plan[k] = Occupant::Job(b);
            }
        }
        plan
    }

    fn apply(&mut self, plan: Vec<Occupant>, t: T) {
        for (k, want) in plan.iter().enumerate() {
            let current = self.cores[k].running;
            if current == *want {
                continue;
            }
            if let Occupant::Job(e) = current {
                let unfinished = self.ents[e].state.active();
                self.stop(k, t);
                if unfinished {
                    self.result.preemptions += 1;
                    self.trace(t, k, TraceKind::Preempt, e);
                    if self.ents[e].kind == EntKind::Plain {
                        let en = &self.ents[e];
                        let entry = Reverse((en.deadline, en.id, e, en.job));
                        self.cores[k].ready.push(entry);
                    }
                }
            } else {
                self.stop(k, t);
            }
        }
        for (k, want) in plan.into_iter().enumerate() {
            if self.cores[k].running == want {
                continue;
            }
            if let Occupant::Job(e) = want {
                if self.ents[e].kind == EntKind::Plain {
                    let top = self.heap_top(k);
                    debug_assert_eq!(top, Some(e));
                    self.cores[k].ready.pop();
                }
            }
            self.start(k, want, t);
        }
        for c in &mut self.cores {
            c.dirty = false;
        }
    }

    fn schedule_catch_ups(&mut self, t: T) {
        for k in 0..self.cores.len() {
            let Occupant::Job(c) = self.cores[k].running else {
                continue;
            };
            let EntKind::Coupled { orig } = self.ents[c].kind else {
                continue;
            };
            let o = &self.ents[orig];
            if o.state == JobState::Done || self.running_on(orig) {
                continue;
            }
            let lead = self.executed_at(orig, t) - self.executed_at(c, t);
            let gen = self.cores[k].gen;
            self.push(t + lead, EvKind::CatchUp { core: k, gen });
        }
    }

    fn verify(&mut self, t: T) -> Result<()> {
        let fail = |msg: String| Err(Error::InvariantViolated(format!("t={:?}: {msg}", t)));
        for k in 0..self.cores.len() {
            let running = self.cores[k].running;
            let mut ready: Vec<usize> = self.cores[k]
                .ready
                .iter()
                .map(|Reverse((_, _, e, j))| (*e, *j))
                .filter(|&(e, j)| self.ents[e].job == j && self.ents[e].state == JobState::Ready)
                .map(|(e, _)| e)
                .collect();
            if !self.hmr {
                let coupled = self.cores[k].coupled.clone();
                ready.extend(
                    coupled
                        .into_iter()
                        .filter(|&c| self.ents[c].state == JobState::Ready && self.strictly_behind(c, t)),
                );
            }
            let min_ready = ready.iter().map(|&e| self.ents[e].key()).min();
            match running {
                Occupant::Job(r) => {
                    if let Some(min) = min_ready {
                        if self.ents[r].key() > min {
                            return fail(format!("core {k} runs a job later than the EDF head"));
                        }
                    }
                }
                Occupant::Idle => {
                    if min_ready.is_some() {
                        return fail(format!("core {k} idles with ready work"));
                    }
                    if self.hmr
                        && self
                            .gang_jobs
                            .iter()
                            .any(|&g| self.ents[g].core == k && self.ents[g].state == JobState::Ready)
                    {
                        return fail(format!("core {k} idles with a ready verification job"));
                    }
                }
                Occupant::Stall(g) => {
                    let EntKind::Gang { checkers } = &self.ents[g].kind else {
                        return fail(format!("core {k} stalls on a non-gang job"));
                    };
                    let held = checkers.iter().any(|&c| {
                        // A stalled earlier-deadline main keeps its own core.
                        matches!(
                            self.cores[c].running,
                            Occupant::Job(o) | Occupant::Mirror(o) | Occupant::Stall(o) if o != g
                        )
                    });
                    if !held {
                        return fail(format!("core {k} stalls although its checkers are free"));
                    }
                }
                Occupant::Mirror(g) => {
                    if !self.running_on(g) {
                        return fail(format!("core {k} mirrors a job that is not running"));
                    }
                }
            }
            if let Occupant::Job(r) = running {
                if let EntKind::Coupled { orig } = self.ents[r].kind {
                    let ahead = self.executed_at(r, t) - self.executed_at(orig, t);
                    if !ahead.is_done() {
                        return fail(format!("checker on core {k} ran ahead of its original"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Release offset of a task's checkers in `p` (its virtual deadline).
pub fn checker_release_offset(p: &Partition, task_id: u32) -> Option<f64> {
    p.entities()
        .find(|(_, e)| e.task_id == task_id && e.role.is_checker())
        .map(|(_, e)| e.release_offset)
}
