//! A tiny deterministic machine: 32 registers, word-addressed memory, six
//! instruction kinds, one instruction per cycle.

use rand::Rng;

use crate::error::{Error, Result};

pub const NUM_REGS: usize = 32;
pub const DEFAULT_MEM_WORDS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Xor,
    And,
    Or,
    Mul,
    Shl,
    Shr,
    /// `rd = rs1 + imm`; with `rs1 = r0` this loads an immediate.
    AddImm,
}

impl AluOp {
    const ALL: [AluOp; 9] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::Xor,
        AluOp::And,
        AluOp::Or,
        AluOp::Mul,
        AluOp::Shl,
        AluOp::Shr,
        AluOp::AddImm,
    ];

    fn eval(self, a: u64, b: u64, imm: i32) -> u64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Xor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::Shl => a.wrapping_shl((b & 63) as u32),
            AluOp::Shr => a.wrapping_shr((b & 63) as u32),
            AluOp::AddImm => a.wrapping_add(imm as i64 as u64),
        }
    }
}

/// Memory operands address `regs[base] + offset` (in words).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    Alu {
        op: AluOp,
        rd: u8,
        rs1: u8,
        rs2: u8,
        imm: i32,
    },
    Load {
        rd: u8,
        base: u8,
        offset: i32,
    },
    Store {
        rs: u8,
        base: u8,
        offset: i32,
    },
    /// Taken when `regs[rs1] < regs[rs2]` (unsigned).
    Branch {
        rs1: u8,
        rs2: u8,
        target: u32,
    },
    /// Kernel entry/exit marker; not a user-mode instruction.
    PrivSwitch,
    /// Atomic fetch-and-add: `rd = mem[a]; mem[a] = old + regs[rs]`.
    Amo {
        rd: u8,
        rs: u8,
        base: u8,
        offset: i32,
    },
}

impl Instruction {
    pub fn is_user(&self) -> bool {
        !matches!(self, Instruction::PrivSwitch)
    }

    /// Memory-log entries a committed instance produces.
    pub fn log_entries(&self) -> usize {
        match self {
            Instruction::Load { .. } | Instruction::Store { .. } => 1,
            Instruction::Amo { .. } => 2,
            _ => 0,
        }
    }

    fn regs(&self) -> Vec<u8> {
        match *self {
            Instruction::Alu { rd, rs1, rs2, .. } => vec![rd, rs1, rs2],
            Instruction::Load { rd, base, .. } => vec![rd, base],
            Instruction::Store { rs, base, .. } => vec![rs, base],
            Instruction::Branch { rs1, rs2, .. } => vec![rs1, rs2],
            Instruction::PrivSwitch => vec![],
            Instruction::Amo { rd, rs, base, .. } => vec![rd, rs, base],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub code: Vec<Instruction>,
    /// Initial memory image; its length is the memory size.
    pub memory: Vec<u64>,
}

impl Program {
    pub fn new(code: Vec<Instruction>, memory: Vec<u64>) -> Result<Self> {
        for (pc, ins) in code.iter().enumerate() {
            if ins.regs().iter().any(|&r| r as usize >= NUM_REGS) {
                return Err(Error::InvalidArgument(format!(
                    "register index out of range at pc {pc}"
                )));
            }
            if let Instruction::Branch { target, .. } = ins {
                if *target as usize > code.len() {
                    return Err(Error::InvalidArgument(format!(
                        "branch target {target} beyond program end at pc {pc}"
                    )));
                }
            }
        }
        Ok(Program { code, memory })
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    /// Executes the program to completion on a fresh interpreter.
    pub fn run(&self, step_limit: u64) -> Result<Interpreter<'_>> {
        let mut it = Interpreter::new(self);
        while !it.finished() {
            if it.steps >= step_limit {
                return Err(Error::StepLimit(step_limit));
            }
            it.step()?;
        }
        Ok(it)
    }
}

/// Architectural state. A register checkpoint is a copy of it.
///
/// `pc` is the most recently retired instruction (0 before any), `npc` the
/// next one to execute, `instret` the count of retired user instructions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchState {
    pub pc: u64,
    pub npc: u64,
    pub instret: u64,
    pub regs: [u64; NUM_REGS],
}

pub type RegCheckpoint = ArchState;

/// Words in a serialised checkpoint: pc, npc, instret, then the registers.
pub const CHECKPOINT_WORDS: usize = 3 + NUM_REGS;

impl ArchState {
    pub fn initial() -> Self {
        ArchState {
            pc: 0,
            npc: 0,
            instret: 0,
            regs: [0; NUM_REGS],
        }
    }

    pub fn word(&self, i: usize) -> u64 {
        match i {
            0 => self.pc,
            1 => self.npc,
            2 => self.instret,
            _ => self.regs[i - 3],
        }
    }

    pub fn word_mut(&mut self, i: usize) -> &mut u64 {
        match i {
            0 => &mut self.pc,
            1 => &mut self.npc,
            2 => &mut self.instret,
            _ => &mut self.regs[i - 3],
        }
    }

    fn read(&self, r: u8) -> u64 {
        if r == 0 {
            0
        } else {
            self.regs[r as usize]
        }
    }

    fn write(&mut self, r: u8, v: u64) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }

    pub fn address(&self, base: u8, offset: i32) -> u64 {
        self.read(base).wrapping_add(offset as i64 as u64)
    }

    /// Where control goes after `ins` retires from this state.
    pub fn successor(&self, ins: &Instruction) -> u64 {
        match *ins {
            Instruction::Branch { rs1, rs2, target } if self.read(rs1) < self.read(rs2) => target as u64,
            _ => self.npc + 1,
        }
    }

    /// Skips kernel markers, as a checker does between segments.
    pub fn skip_privileged(&mut self, code: &[Instruction]) {
        while matches!(code.get(self.npc as usize), Some(Instruction::PrivSwitch)) {
            self.pc = self.npc;
            self.npc += 1;
        }
    }
}

/// Memory side of instruction execution.
pub trait MemPort {
    type Error;
    fn load(&mut self, addr: u64) -> Result<u64, Self::Error>;
    fn store(&mut self, addr: u64, data: u64) -> Result<(), Self::Error>;
    fn amo_read(&mut self, addr: u64) -> Result<u64, Self::Error>;
    fn amo_write(&mut self, addr: u64, data: u64) -> Result<(), Self::Error>;
}

/// Executes `ins` (which must be `code[state.npc]`) against `port`.
pub fn execute<P: MemPort>(state: &mut ArchState, ins: &Instruction, port: &mut P) -> Result<(), P::Error> {
    let next = state.successor(ins);
    match *ins {
        Instruction::Alu { op, rd, rs1, rs2, imm } => {
            let v = op.eval(state.read(rs1), state.read(rs2), imm);
            state.write(rd, v);
        }
        Instruction::Load { rd, base, offset } => {
            let v = port.load(state.address(base, offset))?;
            state.write(rd, v);
        }
        Instruction::Store { rs, base, offset } => {
            port.store(state.address(base, offset), state.read(rs))?;
        }
        Instruction::Branch { .. } | Instruction::PrivSwitch => {}
        Instruction::Amo { rd, rs, base, offset } => {
            let addr = state.address(base, offset);
            let old = port.amo_read(addr)?;
            port.amo_write(addr, old.wrapping_add(state.read(rs)))?;
            state.write(rd, old);
        }
    }
    state.pc = state.npc;
    state.npc = next;
    if ins.is_user() {
        state.instret += 1;
    }
    Ok(())
}

/// Plain memory, faulting on out-of-range words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    pub words: Vec<u64>,
    /// pc of the instruction being executed, for fault reports.
    pub pc: usize,
}

impl Memory {
    fn slot(&mut self, addr: u64) -> Result<&mut u64> {
        let (pc, size) = (self.pc, self.words.len());
        self.words
            .get_mut(addr as usize)
            .ok_or(Error::MemoryFault { pc, addr, size })
    }
}

impl MemPort for Memory {
    type Error = Error;
    fn load(&mut self, addr: u64) -> Result<u64> {
        self.slot(addr).map(|w| *w)
    }
    fn store(&mut self, addr: u64, data: u64) -> Result<()> {
        *self.slot(addr)? = data;
        Ok(())
    }
    fn amo_read(&mut self, addr: u64) -> Result<u64> {
        self.load(addr)
    }
    fn amo_write(&mut self, addr: u64, data: u64) -> Result<()> {
        self.store(addr, data)
    }
}

/// Reference interpreter with no logging or checking.
#[derive(Debug, Clone)]
pub struct Interpreter<'p> {
    pub program: &'p Program,
    pub state: ArchState,
    pub memory: Memory,
    pub steps: u64,
}

impl<'p> Interpreter<'p> {
    pub fn new(program: &'p Program) -> Self {
        Interpreter {
            program,
            state: ArchState::initial(),
            memory: Memory {
                words: program.memory.clone(),
                pc: 0,
            },
            steps: 0,
        }
    }

    pub fn finished(&self) -> bool {
        self.state.npc as usize >= self.program.len()
    }

    pub fn step(&mut self) -> Result<()> {
        let ins = self.program.code[self.state.npc as usize];
        self.memory.pc = self.state.npc as usize;
        execute(&mut self.state, &ins, &mut self.memory)?;
        self.steps += 1;
        Ok(())
    }
}

/// Shape of random programs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramShape {
    pub len: usize,
    pub mem_words: usize,
    pub load_frac: f64,
    pub store_frac: f64,
    pub amo_frac: f64,
    pub branch_frac: f64,
    pub priv_frac: f64,
}

impl ProgramShape {
    pub fn new(len: usize) -> Self {
        ProgramShape {
            len,
            mem_words: DEFAULT_MEM_WORDS,
            load_frac: 0.15,
            store_frac: 0.10,
            amo_frac: 0.03,
            branch_frac: 0.07,
            priv_frac: 0.0,
        }
    }
}

/// Random program whose memory accesses stay in range and whose branches
/// only jump forward, so it always terminates without faulting.
pub fn random_program<R: Rng + ?Sized>(shape: &ProgramShape, rng: &mut R) -> Program {
    let mem = shape.mem_words.max(1);
    let reg = |rng: &mut R| rng.gen_range(0..NUM_REGS as u8);
    let offset = |rng: &mut R| rng.gen_range(0..mem as i32);
    let t_priv = shape.priv_frac;
    let t_load = t_priv + shape.load_frac;
    let t_store = t_load + shape.store_frac;
    let t_amo = t_store + shape.amo_frac;
    let t_branch = t_amo + shape.branch_frac;
    let mut code = Vec::with_capacity(shape.len);
    for pc in 0..shape.len {
        let x: f64 = rng.gen();
        let ins = if x < t_priv {
            Instruction::PrivSwitch
        } else if x < t_load {
            Instruction::Load {
                rd: reg(rng),
                base: 0,
                offset: offset(rng),
            }
        } else if x < t_store {
            Instruction::Store {
                rs: reg(rng),
                base: 0,
                offset: offset(rng),
            }
        } else if x < t_amo {
            Instruction::Amo {
                rd: reg(rng),
                rs: reg(rng),
                base: 0,
                offset: offset(rng),
            }
        } else if x < t_branch {
            let target = (pc + 1 + rng.gen_range(0..8usize)).min(shape.len) as u32;
            Instruction::Branch {
                rs1: reg(rng),
                rs2: reg(rng),
                target,
            }
        } else {
            Instruction::Alu {
                op: AluOp::ALL[rng.gen_range(0..AluOp::ALL.len())],
                rd: reg(rng),
                rs1: reg(rng),
                rs2: reg(rng),
                imm: rng.gen_range(-1000..1000),
            }
        };
        code.push(ins);
    }
    let memory = (0..mem).map(|_| rng.gen()).collect();
    Program { code, memory }
}
