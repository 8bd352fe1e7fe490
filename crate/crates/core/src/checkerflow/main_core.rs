//! The producing side: a main core executing a program and cutting its
//! user-mode instruction stream into checking segments.

use super::channel::{ChannelWord, LogKind, MemLogEntry};
use super::machine::{execute, ArchState, Instruction, MemPort, Memory, Program};
use crate::error::{Error, Result};

pub const DEFAULT_SEG_LIMIT: u64 = 5000;

/// Instructions [`run_main`] executes before giving up on a program.
pub const MAX_MAIN_STEPS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndCause {
    CountLimit,
    PrivSwitch,
    ProgramEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub scp: ArchState,
    pub entries: Vec<MemLogEntry>,
    pub ic: u64,
    pub ecp: ArchState,
    pub end_cause: EndCause,
}

/// A produced word with its position in the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagged {
    pub word: ChannelWord,
    pub segment: usize,
    /// Index of a log entry within its segment; 0 for other words.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainStep {
    pub words: Vec<Tagged>,
    pub ended: Option<EndCause>,
}

struct LoggingMemory {
    mem: Memory,
    seq: u64,
    out: Vec<MemLogEntry>,
}

impl LoggingMemory {
    fn log(&mut self, kind: LogKind, addr: u64, data: u64, part: Option<(u8, u8)>) {
        self.out.push(MemLogEntry {
            seq: self.seq,
            kind,
            addr,
            data,
            part,
        });
        self.seq += 1;
    }
}

impl MemPort for LoggingMemory {
    type Error = Error;
    fn load(&mut self, addr: u64) -> Result<u64> {
        let v = self.mem.load(addr)?;
        self.log(LogKind::Load, addr, v, None);
        Ok(v)
    }
    fn store(&mut self, addr: u64, data: u64) -> Result<()> {
        self.mem.store(addr, data)?;
        self.log(LogKind::Store, addr, data, None);
        Ok(())
    }
    fn amo_read(&mut self, addr: u64) -> Result<u64> {
        let v = self.mem.load(addr)?;
        self.log(LogKind::AmoPart, addr, v, Some((1, 2)));
        Ok(v)
    }
    fn amo_write(&mut self, addr: u64, data: u64) -> Result<()> {
        self.mem.store(addr, data)?;
        self.log(LogKind::AmoPart, addr, data, Some((2, 2)));
        Ok(())
    }
}

pub struct MainCore<'p> {
    program: &'p Program,
    state: ArchState,
    mem: LoggingMemory,
    seg_limit: u64,
    in_segment: bool,
    seg_ic: u64,
    seg_entries: usize,
    seg_index: usize,
}

impl<'p> MainCore<'p> {
    pub fn new(program: &'p Program, seg_limit: u64) -> Result<Self> {
        if seg_limit == 0 {
            return Err(Error::InvalidArgument("segment limit must be at least 1".into()));
        }
        Ok(MainCore {
            program,
            state: ArchState::initial(),
            mem: LoggingMemory {
                mem: Memory {
                    words: program.memory.clone(),
                    pc: 0,
                },
                seq: 0,
                out: Vec::new(),
            },
            seg_limit,
            in_segment: false,
            seg_ic: 0,
            seg_entries: 0,
            seg_index: 0,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.npc as usize >= self.program.len()
    }

    pub fn state(&self) -> &ArchState {
        &self.state
    }

    pub fn memory(&self) -> &[u64] {
        &self.mem.mem.words
    }

    /// Channel words the next instruction enqueues when it retires.
    pub fn required_words(&self) -> usize {
        let Some(ins) = self.program.code.get(self.state.npc as usize) else {
            return 0;
        };
        if !ins.is_user() {
            return if self.in_segment { 2 } else { 0 };
        }
        let mut n = ins.log_entries();
        if !self.in_segment {
            n += 1;
        }
        let next = self.state.successor(ins);
        if self.seg_ic + 1 == self.seg_limit || next as usize >= self.program.len() {
            n += 2;
        }
        n
    }

    /// Retires one instruction. The caller must have room for
    /// [`required_words`](Self::required_words) words.
    pub fn step(&mut self) -> Result<MainStep> {
        let npc = self.state.npc as usize;
        let ins = *self
            .program
            .code
            .get(npc)
            .ok_or_else(|| Error::InvalidArgument("main core stepped past the end of the program".into()))?;
        let mut words = Vec::new();
        if !ins.is_user() {
            let mut ended = None;
            if self.in_segment {
                self.close(&mut words);
                ended = Some(EndCause::PrivSwitch);
            }
            execute(&mut self.state, &Instruction::PrivSwitch, &mut self.mem)?;
            return Ok(MainStep { words, ended });
        }
        if !self.in_segment {
            self.in_segment = true;
            self.seg_ic = 0;
            self.seg_entries = 0;
            words.push(self.tag(ChannelWord::Scp(Box::new(self.state.clone())), 0));
        }
        self.mem.out.clear();
        self.mem.mem.pc = npc;
        execute(&mut self.state, &ins, &mut self.mem)?;
        self.seg_ic += 1;
        for i in 0..self.mem.out.len() {
            let e = self.mem.out[i];
            words.push(self.tag(ChannelWord::Log(e), self.seg_entries));
            self.seg_entries += 1;
        }
        let ended = if self.seg_ic == self.seg_limit {
            Some(EndCause::CountLimit)
        } else if self.finished() {
            Some(EndCause::ProgramEnd)
        } else {
            None
        };
        if ended.is_some() {
            self.close(&mut words);
        }
        Ok(MainStep { words, ended })
    }

    fn tag(&self, word: ChannelWord, index: usize) -> Tagged {
        Tagged {
            word,
            segment: self.seg_index,
            index,
        }
    }

    fn close(&mut self, words: &mut Vec<Tagged>) {
        words.push(self.tag(ChannelWord::Ic(self.seg_ic), 0));
        words.push(self.tag(ChannelWord::Ecp(Box::new(self.state.clone())), 0));
        self.in_segment = false;
        self.seg_index += 1;
    }
}

/// Runs the main core with unbounded buffering and collects its segments.
pub fn run_main(program: &Program, seg_limit: u64) -> Result<Vec<Segment>> {
    let mut main = MainCore::new(program, seg_limit)?;
    let mut segments = Vec::new();
    let mut open: Option<(ArchState, Vec<MemLogEntry>, u64)> = None;
    let mut steps = 0;
    while !main.finished() {
        if steps == MAX_MAIN_STEPS {
            return Err(Error::StepLimit(MAX_MAIN_STEPS));
        }
        steps += 1;
        let out = main.step()?;
        for t in out.words {
            match t.word {
                ChannelWord::Scp(s) => open = Some((*s, Vec::new(), 0)),
                ChannelWord::Log(e) => open.as_mut().expect("segment open").1.push(e),
                ChannelWord::Ic(n) => open.as_mut().expect("segment open").2 = n,
                ChannelWord::Ecp(ecp) => {
                    let (scp, entries, ic) = open.take().expect("segment open");
                    segments.push(Segment {
                        scp,
                        entries,
                        ic,
                        ecp: *ecp,
                        end_cause: out.ended.expect("ECP closes a segment"),
                    });
                }
            }
        }
    }
    Ok(segments)
}
