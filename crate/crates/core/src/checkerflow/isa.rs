//! Core attributes and the control instructions that switch cores between
//! main, checker and plain compute roles.

use std::fmt;

use super::machine::ArchState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoreAttr {
    Main,
    Checker,
    Compute,
}

impl CoreAttr {
    pub fn name(self) -> &'static str {
        match self {
            CoreAttr::Main => "Main",
            CoreAttr::Checker => "Checker",
            CoreAttr::Compute => "Compute",
        }
    }
}

/// Mains are `Enabled`/`Disabled`, checkers `Busy`/`Idle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Checking {
    Enabled,
    Disabled,
    Busy,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreState {
    pub attr: CoreAttr,
    /// Checkers a main feeds.
    pub associated: Vec<usize>,
    pub checking: Checking,
    /// Context saved by `C.record`.
    pub ass_saved: Option<ArchState>,
    pub arch: ArchState,
    pub result: Option<Verdict>,
}

impl CoreState {
    fn fresh(attr: CoreAttr) -> Self {
        CoreState {
            attr,
            associated: Vec::new(),
            checking: idle_state(attr),
            ass_saved: None,
            arch: ArchState::initial(),
            result: None,
        }
    }
}

fn idle_state(attr: CoreAttr) -> Checking {
    match attr {
        CoreAttr::Checker => Checking::Idle,
        _ => Checking::Disabled,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsaOp {
    IdsContain,
    Configure { mains: Vec<usize>, checkers: Vec<usize> },
    Associate(Vec<usize>),
    Check(bool),
    CheckState(Checking),
    Record,
    Apply(Box<ArchState>),
    Jal(u64),
    Result,
}

impl IsaOp {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            IsaOp::IdsContain => "G.IDs.contain",
            IsaOp::Configure { .. } => "G.Configure",
            IsaOp::Associate(_) => "M.associate",
            IsaOp::Check(true) => "M.check.enable",
            IsaOp::Check(false) => "M.check.disable",
            IsaOp::CheckState(Checking::Busy) => "C.check_state(busy)",
            IsaOp::CheckState(_) => "C.check_state(idle)",
            IsaOp::Record => "C.record",
            IsaOp::Apply(_) => "C.apply",
            IsaOp::Jal(_) => "C.jal",
            IsaOp::Result => "C.result",
        }
    }

    fn required_attr(&self) -> Option<CoreAttr> {
        match self {
            IsaOp::IdsContain | IsaOp::Configure { .. } => None,
            IsaOp::Associate(_) | IsaOp::Check(_) => Some(CoreAttr::Main),
            _ => Some(CoreAttr::Checker),
        }
    }
}

impl fmt::Display for IsaOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsaReply {
    Done,
    Attr(CoreAttr),
    Result(Option<Verdict>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsaMachine {
    cores: Vec<CoreState>,
}

impl IsaMachine {
    /// `n` cores, all plain compute cores.
    pub fn new(n: usize) -> Self {
        IsaMachine {
            cores: (0..n).map(|_| CoreState::fresh(CoreAttr::Compute)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn core(&self, k: usize) -> &CoreState {
        &self.cores[k]
    }

    pub(crate) fn arch_mut(&mut self, k: usize) -> &mut ArchState {
        &mut self.cores[k].arch
    }

    pub(crate) fn set_result(&mut self, k: usize, v: Verdict) {
        self.cores[k].result = Some(v);
    }

    /// Mains with checking enabled that feed checker `k`.
    pub fn feeding_mains(&self, k: usize) -> Vec<usize> {
        (0..self.cores.len())
            .filter(|&i| {
                let c = &self.cores[i];
                c.attr == CoreAttr::Main && c.checking == Checking::Enabled && c.associated.contains(&k)
            })
            .collect()
    }

    /// Executes `op` on core `k`.
    pub fn exec(&mut self, k: usize, op: IsaOp) -> Result<IsaReply> {
        let n = self.cores.len();
        if k >= n {
            return Err(Error::InvalidArgument(format!("no core {k} (have {n})")));
        }
        if let Some(need) = op.required_attr() {
            let attr = self.cores[k].attr;
            if attr != need {
                return Err(Error::IllegalInstruction {
                    op: op.mnemonic(),
                    core: k,
                    attr: attr.name(),
                });
            }
        }
        match op {
            IsaOp::IdsContain => return Ok(IsaReply::Attr(self.cores[k].attr)),
            IsaOp::Configure { mains, checkers } => self.configure(&mains, &checkers)?,
            IsaOp::Associate(ids) => {
                let mut seen = vec![false; n];
                for &c in &ids {
                    if c >= n || c == k || self.cores[c].attr != CoreAttr::Checker || seen[c] {
                        return Err(Error::InvalidArgument(format!(
                            "core {k} cannot associate core {c}: not a distinct checker"
                        )));
                    }
                    seen[c] = true;
                }
                if ids.is_empty() {
                    return Err(Error::InvalidArgument("M.associate needs at least one checker".into()));
                }
                self.cores[k].associated = ids;
            }
            IsaOp::Check(enable) => {
                if enable && self.cores[k].associated.is_empty() {
                    return Err(Error::Protocol(format!(
                        "core {k} enables checking with no associated checker"
                    )));
                }
                self.cores[k].checking = if enable { Checking::Enabled } else { Checking::Disabled };
            }
            IsaOp::CheckState(s) => match s {
                Checking::Busy => {
                    let feeding = self.feeding_mains(k).len();
                    if feeding != 1 {
                        return Err(Error::Protocol(format!(
                            "checker {k} turning busy with {feeding} feeding mains"
                        )));
                    }
                    self.cores[k].checking = Checking::Busy;
                }
                Checking::Idle => self.cores[k].checking = Checking::Idle,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "checker state must be busy or idle, got {other:?}"
                    )))
                }
            },
            IsaOp::Record => {
                let saved = self.cores[k].arch.clone();
                self.cores[k].ass_saved = Some(saved);
            }
            IsaOp::Apply(scp) => {
                let arch = &mut self.cores[k].arch;
                arch.pc = scp.pc;
                arch.instret = scp.instret;
                arch.regs = scp.regs;
            }
            IsaOp::Jal(npc) => self.cores[k].arch.npc = npc,
            IsaOp::Result => return Ok(IsaReply::Result(self.cores[k].result)),
        }
        Ok(IsaReply::Done)
    }

    fn configure(&mut self, mains: &[usize], checkers: &[usize]) -> Result<()> {
        let n = self.cores.len();
        let mut attrs = vec![CoreAttr::Compute; n];
        for (ids, attr) in [(mains, CoreAttr::Main), (checkers, CoreAttr::Checker)] {
            for &i in ids {
                if i >= n || attrs[i] != CoreAttr::Compute {
                    return Err(Error::InvalidArgument(format!(
                        "core {i} listed twice or out of range in G.Configure"
                    )));
                }
                attrs[i] = attr;
            }
        }
        for (core, attr) in self.cores.iter_mut().zip(&attrs) {
            if core.attr != *attr {
                core.attr = *attr;
                core.associated.clear();
                core.checking = idle_state(*attr);
            }
        }
        for core in &mut self.cores {
            core.associated.retain(|&c| attrs[c] == CoreAttr::Checker);
        }
        Ok(())
    }
}

/// What a core switches to.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NextTask {
    /// A fresh job release, which rewrites the global role registers.
    pub new_release: bool,
    pub mains: Vec<usize>,
    pub checkers: Vec<usize>,
    /// Checkers this core feeds if it becomes a main.
    pub feeds: Vec<usize>,
    /// The next thread on a checker core is a checker thread.
    pub checker_thread: bool,
}

/// A core's context switch: quiesce checking, reconfigure roles on a new
/// release, then re-arm checking for the incoming task. Returns the
/// mnemonics of the control instructions issued.
pub fn context_switch(isa: &mut IsaMachine, core: usize, next: &NextTask) -> Result<Vec<&'static str>> {
    let mut trace = Vec::new();
    let mut issue = |isa: &mut IsaMachine, op: IsaOp| -> Result<IsaReply> {
        trace.push(op.mnemonic());
        isa.exec(core, op)
    };
    match issue(isa, IsaOp::IdsContain)? {
        IsaReply::Attr(CoreAttr::Main) => {
            issue(isa, IsaOp::Check(false))?;
        }
        IsaReply::Attr(CoreAttr::Checker) => {
            issue(isa, IsaOp::CheckState(Checking::Idle))?;
        }
        _ => {}
    }
    if next.new_release {
        issue(
            isa,
            IsaOp::Configure {
                mains: next.mains.clone(),
                checkers: next.checkers.clone(),
            },
        )?;
    }
    match issue(isa, IsaOp::IdsContain)? {
        IsaReply::Attr(CoreAttr::Main) => {
            issue(isa, IsaOp::Associate(next.feeds.clone()))?;
            issue(isa, IsaOp::Check(true))?;
        }
        IsaReply::Attr(CoreAttr::Checker) if next.checker_thread => {
            issue(isa, IsaOp::CheckState(Checking::Busy))?;
        }
        _ => {}
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configured(mains: &[usize], checkers: &[usize], n: usize) -> IsaMachine {
        let mut isa = IsaMachine::new(n);
        isa.exec(
            0,
            IsaOp::Configure {
                mains: mains.to_vec(),
                checkers: checkers.to_vec(),
            },
        )
        .unwrap();
        isa
    }

    #[test]
    fn attributes_after_configure() {
        let mut isa = configured(&[0], &[1], 3);
        assert_eq!(isa.exec(0, IsaOp::IdsContain).unwrap(), IsaReply::Attr(CoreAttr::Main));
        assert_eq!(
            isa.exec(1, IsaOp::IdsContain).unwrap(),
            IsaReply::Attr(CoreAttr::Checker)
        );
        assert_eq!(
            isa.exec(2, IsaOp::IdsContain).unwrap(),
            IsaReply::Attr(CoreAttr::Compute)
        );
    }

    #[test]
    fn triple_mode_association() {
        let mut isa = configured(&[0], &[1, 2], 3);
        isa.exec(0, IsaOp::Associate(vec![1, 2])).unwrap();
        isa.exec(0, IsaOp::Check(true)).unwrap();
        assert_eq!(isa.core(0).checking, Checking::Enabled);
        assert_eq!(isa.feeding_mains(1), vec![0]);
        assert_eq!(isa.feeding_mains(2), vec![0]);
        isa.exec(2, IsaOp::CheckState(Checking::Busy)).unwrap();
        assert_eq!(isa.core(2).checking, Checking::Busy);
    }

    #[test]
    fn wrong_attribute_is_illegal() {
        let mut isa = configured(&[0], &[1], 2);
        assert_eq!(
            isa.exec(1, IsaOp::Check(true)),
            Err(Error::IllegalInstruction {
                op: "M.check.enable",
                core: 1,
                attr: "Checker"
            })
        );
        assert!(matches!(
            isa.exec(0, IsaOp::Record),
            Err(Error::IllegalInstruction { op: "C.record", .. })
        ));
        assert!(isa.exec(5, IsaOp::IdsContain).is_err());
    }

    #[test]
    fn busy_needs_exactly_one_feeding_main() {
        let mut isa = configured(&[0, 2], &[1], 3);
        assert!(matches!(
            isa.exec(1, IsaOp::CheckState(Checking::Busy)),
            Err(Error::Protocol(_))
        ));
        for m in [0, 2] {
            isa.exec(m, IsaOp::Associate(vec![1])).unwrap();
            isa.exec(m, IsaOp::Check(true)).unwrap();
        }
        assert!(matches!(
            isa.exec(1, IsaOp::CheckState(Checking::Busy)),
            Err(Error::Protocol(_))
        ));
        isa.exec(2, IsaOp::Check(false)).unwrap();
        isa.exec(1, IsaOp::CheckState(Checking::Busy)).unwrap();
    }

    #[test]
    fn record_apply_jal() {
        let mut isa = configured(&[0], &[1], 2);
        let mut scp = ArchState::initial();
        scp.regs[5] = 42;
        scp.npc = 17;
        scp.instret = 3;
        isa.arch_mut(1).regs[9] = 7;
        isa.exec(1, IsaOp::Record).unwrap();
        isa.exec(1, IsaOp::Apply(Box::new(scp.clone()))).unwrap();
        isa.exec(1, IsaOp::Jal(scp.npc)).unwrap();
        assert_eq!(isa.core(1).arch, scp);
        assert_eq!(isa.core(1).ass_saved.as_ref().unwrap().regs[9], 7);
        assert_eq!(isa.exec(1, IsaOp::Result).unwrap(), IsaReply::Result(None));
        isa.set_result(1, Verdict::Pass);
        assert_eq!(
            isa.exec(1, IsaOp::Result).unwrap(),
            IsaReply::Result(Some(Verdict::Pass))
        );
    }

    #[test]
    fn context_switch_sequences() {
        let mut isa = IsaMachine::new(3);
        let next = NextTask {
            new_release: true,
            mains: vec![0],
            checkers: vec![1, 2],
            feeds: vec![1, 2],
            checker_thread: false,
        };
        let trace = context_switch(&mut isa, 0, &next).unwrap();
        assert_eq!(
            trace,
            vec![
                "G.IDs.contain",
                "G.Configure",
                "G.IDs.contain",
                "M.associate",
                "M.check.enable"
            ]
        );
        let to_checker = NextTask {
            checker_thread: true,
            ..NextTask::default()
        };
        let trace = context_switch(&mut isa, 1, &to_checker).unwrap();
        assert_eq!(
            trace,
            vec![
                "G.IDs.contain",
                "C.check_state(idle)",
                "G.IDs.contain",
                "C.check_state(busy)"
            ]
        );
        assert_eq!(isa.core(1).checking, Checking::Busy);

        // The main switching to an unverified task drops its role.
        let plain = NextTask {
            new_release: true,
            mains: vec![],
            checkers: vec![1, 2],
            ..NextTask::default()
        };
        let trace = context_switch(&mut isa, 0, &plain).unwrap();
        assert_eq!(
            trace,
            vec!["G.IDs.contain", "M.check.disable", "G.Configure", "G.IDs.contain"]
        );
        assert_eq!(isa.core(0).attr, CoreAttr::Compute);
        assert!(isa.feeding_mains(1).is_empty());
    }
}
