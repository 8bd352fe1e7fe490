//! The consuming side: a checker core replaying segments from its channel.
//!
//! Per segment the checker saves its context, applies the SCP, jumps to its
//! npc and replays user instructions, serving memory reads from the log.
//! Every logged word is checked when its instruction commits: addresses
//! against the replayed address, store and write data against the replayed
//! value, and read data against the checker's own view of memory (the
//! initial image plus every store it has verified). At the ECP the replayed
//! state and instruction count are compared with the forwarded ones. An SCP
//! is also compared with the state the checker expects the segment to start
//! from, i.e. the previous verified ECP advanced past kernel markers.

use std::collections::VecDeque;

use super::channel::{ChannelWord, FifoChannel, LogKind, MemLogEntry};
use super::isa::{Checking, IsaMachine, IsaOp, Verdict};
use super::machine::{execute, ArchState, Instruction, MemPort, Program};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectSite {
    LogCompare,
    EcpCompare,
}

impl DetectSite {
    pub fn name(self) -> &'static str {
        match self {
            DetectSite::LogCompare => "LogCompare",
            DetectSite::EcpCompare => "EcpCompare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub site: DetectSite,
    pub cycle: u64,
    pub segment: usize,
}

/// What a checker did in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    /// Not in the busy state.
    Idle,
    /// Nothing to consume.
    Waiting,
    Consumed,
    Executed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitScp,
    Replay,
    AwaitIc,
    AwaitEcp,
    /// Drop the rest of a segment that already failed.
    Discard,
}

struct ReplayPort<'a> {
    buffer: &'a mut VecDeque<MemLogEntry>,
    shadow: &'a mut [u64],
}

impl ReplayPort<'_> {
    fn take(&mut self, kind: LogKind, part: Option<(u8, u8)>, addr: u64) -> Result<MemLogEntry, ()> {
        let e = self.buffer.pop_front().ok_or(())?;
        if e.kind != kind || e.part != part || e.addr != addr || addr >= self.shadow.len() as u64 {
            return Err(());
        }
        Ok(e)
    }

    fn read(&mut self, kind: LogKind, part: Option<(u8, u8)>, addr: u64) -> Result<u64, ()> {
        let e = self.take(kind, part, addr)?;
        if self.shadow[addr as usize] != e.data {
            return Err(());
        }
        Ok(e.data)
    }

    fn write(&mut self, kind: LogKind, part: Option<(u8, u8)>, addr: u64, data: u64) -> Result<(), ()> {
        let e = self.take(kind, part, addr)?;
        if e.data != data {
            return Err(());
        }
        self.shadow[addr as usize] = data;
        Ok(())
    }
}

impl MemPort for ReplayPort<'_> {
    type Error = ();
    fn load(&mut self, addr: u64) -> Result<u64, ()> {
        self.read(LogKind::Load, None, addr)
    }
    fn store(&mut self, addr: u64, data: u64) -> Result<(), ()> {
        self.write(LogKind::Store, None, addr, data)
    }
    fn amo_read(&mut self, addr: u64) -> Result<u64, ()> {
        self.read(LogKind::AmoPart, Some((1, 2)), addr)
    }
    fn amo_write(&mut self, addr: u64, data: u64) -> Result<(), ()> {
        self.write(LogKind::AmoPart, Some((2, 2)), addr, data)
    }
}

pub struct CheckerCore<'p> {
    core: usize,
    program: &'p Program,
    seg_limit: u64,
    shadow: Vec<u64>,
    expected_scp: ArchState,
    resync: bool,
    phase: Phase,
    count: u64,
    ic: Option<u64>,
    buffer: VecDeque<MemLogEntry>,
    next_seq: u64,
    pending_part: Option<(u8, u8)>,
    segments_seen: usize,
    replayed: u64,
    pub verdicts: Vec<Verdict>,
    pub detections: Vec<Detection>,
}

impl<'p> CheckerCore<'p> {
    pub fn new(core: usize, program: &'p Program, seg_limit: u64) -> Self {
        let mut expected_scp = ArchState::initial();
        expected_scp.skip_privileged(&program.code);
        CheckerCore {
            core,
            program,
            seg_limit,
            shadow: program.memory.clone(),
            expected_scp,
            resync: false,
            phase: Phase::AwaitScp,
            count: 0,
            ic: None,
            buffer: VecDeque::new(),
            next_seq: 0,
            pending_part: None,
            segments_seen: 0,
            replayed: 0,
            verdicts: Vec::new(),
            detections: Vec::new(),
        }
    }

    pub fn core(&self) -> usize {
        self.core
    }

    /// User instructions replayed so far.
    pub fn replayed(&self) -> u64 {
        self.replayed
    }

    /// Between segments with nothing left to check.
    pub fn finished(&self, channel: &FifoChannel, producer_done: bool) -> bool {
        producer_done && channel.is_empty() && self.phase == Phase::AwaitScp
    }

    fn current_segment(&self) -> usize {
        self.segments_seen.saturating_sub(1)
    }

    fn detect(&mut self, site: DetectSite, cycle: u64) {
        self.detections.push(Detection {
            site,
            cycle,
            segment: self.current_segment(),
        });
        self.phase = Phase::Discard;
    }

    fn accept_entry(&mut self, e: &MemLogEntry) -> Result<()> {
        if e.seq != self.next_seq {
            return Err(Error::Protocol(format!(
                "checker {}: log entry seq {} where {} was due",
                self.core, e.seq, self.next_seq
            )));
        }
        self.next_seq += 1;
        let ok = match (self.pending_part, e.part) {
            (None, None) => true,
            (None, Some((1, total))) if total > 1 => {
                self.pending_part = Some((2, total));
                true
            }
            (Some(want), Some(got)) if want == got => {
                self.pending_part = (got.0 < got.1).then_some((got.0 + 1, got.1));
                true
            }
            _ => false,
        };
        if !ok {
            return Err(Error::Protocol(format!(
                "checker {}: multi-part entry out of order (seq {})",
                self.core, e.seq
            )));
        }
        Ok(())
    }

    fn unexpected(&self, word: &ChannelWord) -> Error {
        Error::Protocol(format!(
            "checker {}: unexpected {} word while {:?}",
            self.core,
            word.kind_name(),
            self.phase
        ))
    }

    fn finish_segment(&mut self, ok: bool, ecp: ArchState, isa: &mut IsaMachine) {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        self.verdicts.push(verdict);
        isa.set_result(self.core, verdict);
        if ok {
            self.expected_scp = ecp;
            self.expected_scp.skip_privileged(&self.program.code);
        } else {
            self.resync = true;
        }
        self.phase = Phase::AwaitScp;
    }

    /// Advances one cycle.
    pub fn step(&mut self, cycle: u64, channel: &mut FifoChannel, isa: &mut IsaMachine) -> Result<Activity> {
        if isa.core(self.core).checking != Checking::Busy {
            return Ok(Activity::Idle);
        }
        loop {
            match self.phase {
                Phase::AwaitScp => {
                    let Some(word) = channel.peek() else {
                        return Ok(Activity::Waiting);
                    };
                    let ChannelWord::Scp(_) = word else {
                        return Err(self.unexpected(word));
                    };
                    let Some(ChannelWord::Scp(scp)) = channel.pop() else {
                        unreachable!()
                    };
                    self.segments_seen += 1;
                    isa.exec(self.core, IsaOp::Record)?;
                    let npc = scp.npc;
                    let continuous = self.resync || *scp == self.expected_scp;
                    isa.exec(self.core, IsaOp::Apply(scp))?;
                    isa.exec(self.core, IsaOp::Jal(npc))?;
                    self.count = 0;
                    self.ic = None;
                    self.buffer.clear();
                    self.resync = false;
                    self.phase = Phase::Replay;
                    if !continuous {
                        self.detect(DetectSite::EcpCompare, cycle);
                    }
                    return Ok(Activity::Consumed);
                }
                Phase::Replay => {
                    let npc = isa.core(self.core).arch.npc as usize;
                    let next = self.program.code.get(npc);
                    let stop = self.count >= self.seg_limit
                        || self.ic.is_some_and(|n| self.count >= n)
                        || !next.is_some_and(Instruction::is_user);
                    if stop {
                        self.phase = if self.ic.is_some() {
                            Phase::AwaitEcp
                        } else {
                            Phase::AwaitIc
                        };
                        continue;
                    }
                    let ins = *next.expect("checked above");
                    if self.buffer.len() >= ins.log_entries() {
                        let mut port = ReplayPort {
                            buffer: &mut self.buffer,
                            shadow: &mut self.shadow,
                        };
                        let outcome = execute(isa.arch_mut(self.core), &ins, &mut port);
                        self.count += 1;
                        self.replayed += 1;
                        if outcome.is_err() {
                            self.detect(DetectSite::LogCompare, cycle);
                        }
                        return Ok(Activity::Executed);
                    }
                    let Some(word) = channel.peek() else {
                        return Ok(Activity::Waiting);
                    };
                    match word {
                        ChannelWord::Log(e) => {
                            let e = *e;
                            channel.pop();
                            self.accept_entry(&e)?;
                            self.buffer.push_back(e);
                        }
                        ChannelWord::Ic(n) => {
                            // The count says the segment ends before this
                            // instruction could get its log entries.
                            self.ic = Some(*n);
                            channel.pop();
                            self.phase = Phase::AwaitEcp;
                        }
                        other => return Err(self.unexpected(other)),
                    }
                    return Ok(Activity::Consumed);
                }
                Phase::AwaitIc => {
                    let Some(word) = channel.pop() else {
                        return Ok(Activity::Waiting);
                    };
                    match word {
                        ChannelWord::Ic(n) => {
                            self.ic = Some(n);
                            self.phase = Phase::Replay;
                        }
                        ChannelWord::Log(e) => {
                            // A log entry no replayed instruction accounts for.
                            self.accept_entry(&e)?;
                            self.detect(DetectSite::LogCompare, cycle);
                        }
                        other => return Err(self.unexpected(&other)),
                    }
                    return Ok(Activity::Consumed);
                }
                Phase::AwaitEcp => {
                    let Some(word) = channel.pop() else {
                        return Ok(Activity::Waiting);
                    };
                    let ChannelWord::Ecp(ecp) = word else {
                        return Err(self.unexpected(&word));
                    };
                    let ok = isa.core(self.core).arch == *ecp && self.ic == Some(self.count);
                    if !ok {
                        self.detections.push(Detection {
                            site: DetectSite::EcpCompare,
                            cycle,
                            segment: self.current_segment(),
                        });
                    }
                    self.finish_segment(ok, *ecp, isa);
                    return Ok(Activity::Consumed);
                }
                Phase::Discard => {
                    let Some(word) = channel.pop() else {
                        return Ok(Activity::Waiting);
                    };
                    match word {
                        ChannelWord::Ecp(ecp) => self.finish_segment(false, *ecp, isa),
                        ChannelWord::Log(e) => {
                            self.next_seq = e.seq + 1;
                            self.pending_part = None;
                        }
                        ChannelWord::Ic(_) => {}
                        other => return Err(self.unexpected(&other)),
                    }
                    return Ok(Activity::Consumed);
                }
            }
        }
    }
}
