//! Channel words and the bounded FIFO that carries them from a main core to
//! a checker.

use std::collections::VecDeque;
use std::fmt;

use super::machine::{ArchState, CHECKPOINT_WORDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogKind {
    Load,
    Store,
    AmoPart,
}

/// One committed memory micro-operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemLogEntry {
    /// Global commit order.
    pub seq: u64,
    pub kind: LogKind,
    pub addr: u64,
    pub data: u64,
    /// `(index, total)` with `index` in `1..=total` for multi-entry
    /// instructions.
    pub part: Option<(u8, u8)>,
}

/// The unit of transfer; each costs one slot and one consumer cycle.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChannelWord {
    Scp(Box<ArchState>),
    Log(MemLogEntry),
    Ic(u64),
    Ecp(Box<ArchState>),
}

impl ChannelWord {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ChannelWord::Scp(_) => "scp",
            ChannelWord::Log(_) => "log",
            ChannelWord::Ic(_) => "ic",
            ChannelWord::Ecp(_) => "ecp",
        }
    }
}

impl fmt::Display for ChannelWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelWord::Scp(s) | ChannelWord::Ecp(s) => write!(
                f,
                "{} pc={} npc={} instret={}",
                self.kind_name(),
                s.pc,
                s.npc,
                s.instret
            ),
            ChannelWord::Log(e) => write!(f, "log seq={} {:?} addr={} data={:#x}", e.seq, e.kind, e.addr, e.data),
            ChannelWord::Ic(n) => write!(f, "ic {n}"),
        }
    }
}

/// Which field of a forwarded word a single-bit fault lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordField {
    /// Checkpoint word index in `0..CHECKPOINT_WORDS`.
    Checkpoint(usize),
    LogAddr,
    LogData,
    Ic,
}

impl ChannelWord {
    /// Flips `bit` of `field`; false if the field does not exist in this word.
    pub fn flip(&mut self, field: WordField, bit: u32) -> bool {
        let mask = 1u64 << (bit & 63);
        match (self, field) {
            (ChannelWord::Scp(s) | ChannelWord::Ecp(s), WordField::Checkpoint(i)) if i < CHECKPOINT_WORDS => {
                *s.word_mut(i) ^= mask;
            }
            (ChannelWord::Log(e), WordField::LogAddr) => e.addr ^= mask,
            (ChannelWord::Log(e), WordField::LogData) => e.data ^= mask,
            (ChannelWord::Ic(n), WordField::Ic) => *n ^= mask,
            _ => return false,
        }
        true
    }
}

/// Bounded strict-FIFO buffer.
#[derive(Debug, Clone)]
pub struct FifoChannel {
    capacity: usize,
    buf: VecDeque<ChannelWord>,
    pushed: u64,
    popped: u64,
    peak: usize,
}

impl FifoChannel {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("channel capacity must be at least 1".into()));
        }
        Ok(FifoChannel {
            capacity,
            buf: VecDeque::with_capacity(capacity.min(4096)),
            pushed: 0,
            popped: 0,
            peak: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn free(&self) -> usize {
        self.capacity - self.buf.len()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    /// Hands the word back when the channel is full.
    pub fn try_push(&mut self, word: ChannelWord) -> Result<(), ChannelWord> {
        if self.is_full() {
            return Err(word);
        }
        self.buf.push_back(word);
        self.pushed += 1;
        self.peak = self.peak.max(self.buf.len());
        Ok(())
    }

    pub fn pop(&mut self) -> Option<ChannelWord> {
        let w = self.buf.pop_front();
        if w.is_some() {
            self.popped += 1;
        }
        w
    }

    pub fn peek(&self) -> Option<&ChannelWord> {
        self.buf.front()
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }

    pub fn peak_occupancy(&self) -> usize {
        self.peak
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_order_and_bounds() {
        let mut ch = FifoChannel::new(2).unwrap();
        assert!(ch.try_push(ChannelWord::Ic(1)).is_ok());
        assert!(ch.try_push(ChannelWord::Ic(2)).is_ok());
        assert!(ch.is_full());
        assert_eq!(ch.try_push(ChannelWord::Ic(3)), Err(ChannelWord::Ic(3)));
        assert_eq!(ch.pop(), Some(ChannelWord::Ic(1)));
        assert_eq!(ch.free(), 1);
        assert_eq!(ch.pop(), Some(ChannelWord::Ic(2)));
        assert_eq!(ch.pop(), None);
        assert_eq!((ch.pushed(), ch.popped(), ch.peak_occupancy()), (2, 2, 2));
        assert!(FifoChannel::new(0).is_err());
    }

    #[test]
    fn flips_only_matching_fields() {
        let mut w = ChannelWord::Ic(4);
        assert!(w.flip(WordField::Ic, 0));
        assert_eq!(w, ChannelWord::Ic(5));
        assert!(!w.flip(WordField::LogData, 0));
        let mut w = ChannelWord::Ecp(Box::new(ArchState::initial()));
        assert!(w.flip(WordField::Checkpoint(3 + 7), 63));
        let ChannelWord::Ecp(s) = &w else { unreachable!() };
        assert_eq!(s.regs[7], 1 << 63);
    }
}
