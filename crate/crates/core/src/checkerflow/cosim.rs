//! Cycle-stepped co-simulation of a main core and its checker(s), with
//! single-bit fault injection into forwarded words.

use std::fmt::Write as _;

use rand::Rng;

use super::channel::{ChannelWord, FifoChannel, WordField};
use super::checker::{Activity, CheckerCore, DetectSite, Detection};
use super::isa::{Checking, IsaMachine, IsaOp, Verdict};
use super::machine::{Program, CHECKPOINT_WORDS};
use super::main_core::{run_main, MainCore, Segment, Tagged, DEFAULT_SEG_LIMIT};
use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 1024;

/// Largest number of words one instruction can enqueue: SCP, two AMO
/// parts, IC and ECP.
pub const MIN_CAPACITY: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosimConfig {
    pub seg_limit: u64,
    /// Channel capacity in words.
    pub capacity: usize,
    /// Cycles before the checkers start consuming.
    pub checker_lag: u64,
    /// One (dual) or two (triple) checkers.
    pub checkers: usize,
    /// `[start, end)` cycle windows in which the first checker is switched
    /// to idle.
    pub idle_windows: Vec<(u64, u64)>,
    pub stop_on_detection: bool,
    pub max_cycles: u64,
    /// Keep the first channel's occupancy after every cycle.
    pub record_occupancy: bool,
}

impl Default for CosimConfig {
    fn default() -> Self {
        CosimConfig {
            seg_limit: DEFAULT_SEG_LIMIT,
            capacity: DEFAULT_CAPACITY,
            checker_lag: 0,
            checkers: 1,
            idle_windows: Vec::new(),
            stop_on_detection: false,
            max_cycles: 1_000_000_000,
            record_occupancy: false,
        }
    }
}

impl CosimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seg_limit == 0 {
            return Err(Error::InvalidArgument("segment limit must be at least 1".into()));
        }
        if self.capacity < MIN_CAPACITY {
            return Err(Error::InvalidArgument(format!(
                "channel capacity must be at least {MIN_CAPACITY} words, got {}",
                self.capacity
            )));
        }
        if !(1..=2).contains(&self.checkers) {
            return Err(Error::InvalidArgument(format!(
                "one or two checkers supported, got {}",
                self.checkers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultTarget {
    ScpWord,
    EcpWord,
    LogAddr,
    LogData,
    IcValue,
}

impl FaultTarget {
    pub const ALL: [FaultTarget; 5] = [
        FaultTarget::ScpWord,
        FaultTarget::EcpWord,
        FaultTarget::LogAddr,
        FaultTarget::LogData,
        FaultTarget::IcValue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultTarget::ScpWord => "ScpWord",
            FaultTarget::EcpWord => "EcpWord",
            FaultTarget::LogAddr => "LogAddr",
            FaultTarget::LogData => "LogData",
            FaultTarget::IcValue => "IcValue",
        }
    }

    pub fn is_log(self) -> bool {
        matches!(self, FaultTarget::LogAddr | FaultTarget::LogData)
    }
}

/// One bit flip in one forwarded word, on one checker's channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultSpec {
    pub target: FaultTarget,
    pub segment: usize,
    /// Checkpoint word (`0..CHECKPOINT_WORDS`) or log entry within the
    /// segment; ignored for `IcValue`.
    pub index: usize,
    pub bit: u32,
    pub checker: usize,
}

impl FaultSpec {
    fn field(&self) -> WordField {
        match self.target {
            FaultTarget::ScpWord | FaultTarget::EcpWord => WordField::Checkpoint(self.index),
            FaultTarget::LogAddr => WordField::LogAddr,
            FaultTarget::LogData => WordField::LogData,
            FaultTarget::IcValue => WordField::Ic,
        }
    }

    fn hits(&self, t: &Tagged) -> bool {
        t.segment == self.segment
            && match (&t.word, self.target) {
                (ChannelWord::Scp(_), FaultTarget::ScpWord) | (ChannelWord::Ecp(_), FaultTarget::EcpWord) => true,
                (ChannelWord::Log(_), FaultTarget::LogAddr | FaultTarget::LogData) => t.index == self.index,
                (ChannelWord::Ic(_), FaultTarget::IcValue) => true,
                _ => false,
            }
    }

    /// Checks the fault names a word the main core actually sends.
    pub fn validate(&self, segments: &[Segment], checkers: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let Some(seg) = segments.get(self.segment) else {
            return bad(format!(
                "fault targets segment {} but the program has {}",
                self.segment,
                segments.len()
            ));
        };
        if self.bit >= 64 {
            return bad(format!("bit {} out of range", self.bit));
        }
        if self.checker >= checkers {
            return bad(format!("fault on checker {} of {checkers}", self.checker));
        }
        match self.target {
            FaultTarget::ScpWord | FaultTarget::EcpWord if self.index >= CHECKPOINT_WORDS => {
                bad(format!("checkpoint word {} out of range", self.index))
            }
            FaultTarget::LogAddr | FaultTarget::LogData if self.index >= seg.entries.len() => bad(format!(
                "segment {} has {} log entries, fault targets entry {}",
                self.segment,
                seg.entries.len(),
                self.index
            )),
            _ => Ok(()),
        }
    }
}

/// Conditions when the corrupted word was enqueued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub cycle: u64,
    /// Words ahead of the corrupted one in its channel.
    pub backlog: usize,
    /// Instructions the main had retired that its checker had not replayed.
    pub pending_instructions: u64,
}

impl Injection {
    /// Consumer cycles needed to reach the corrupted word.
    pub fn drain_cycles(&self) -> u64 {
        self.backlog as u64 + self.pending_instructions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CosimReport {
    pub cycles: u64,
    pub main_stall_cycles: u64,
    pub user_instructions: u64,
    pub segments: usize,
    /// Per checker.
    pub verdicts: Vec<Vec<Verdict>>,
    pub detections: Vec<Vec<Detection>>,
    pub peak_occupancy: Vec<usize>,
    pub occupancy: Vec<usize>,
    pub injection: Option<Injection>,
}

impl CosimReport {
    pub fn mismatches(&self) -> usize {
        self.detections.iter().map(Vec::len).sum()
    }
}

/// Runs main and checkers in lockstep cycles until every segment has been
/// checked (or, with `stop_on_detection`, until the first detection).
///
/// Within a cycle the checkers act first, then the main core. The main
/// retires one instruction per cycle unless some channel lacks room for the
/// words that instruction enqueues, in which case it stalls.
pub fn cosimulate(program: &Program, cfg: &CosimConfig, fault: Option<&FaultSpec>) -> Result<CosimReport> {
    cfg.validate()?;
    let n = cfg.checkers;
    let checker_ids: Vec<usize> = (1..=n).collect();
    let mut isa = IsaMachine::new(n + 1);
    isa.exec(
        0,
        IsaOp::Configure {
            mains: vec![0],
            checkers: checker_ids.clone(),
        },
    )?;
    isa.exec(0, IsaOp::Associate(checker_ids.clone()))?;
    isa.exec(0, IsaOp::Check(true))?;

    let mut main = MainCore::new(program, cfg.seg_limit)?;
    let mut checkers: Vec<CheckerCore> = checker_ids
        .iter()
        .map(|&k| CheckerCore::new(k, program, cfg.seg_limit))
        .collect();
    let mut channels = (0..n)
        .map(|_| FifoChannel::new(cfg.capacity))
        .collect::<Result<Vec<_>>>()?;
    let mut report = CosimReport::default();

    let mut cycle = 0u64;
    loop {
        if cycle >= cfg.max_cycles {
            return Err(Error::StepLimit(cfg.max_cycles));
        }
        for (i, chk) in checkers.iter_mut().enumerate() {
            let idle_window = i == 0 && cfg.idle_windows.iter().any(|&(a, b)| (a..b).contains(&cycle));
            let want = if cycle >= cfg.checker_lag && !idle_window {
                Checking::Busy
            } else {
                Checking::Idle
            };
            if isa.core(chk.core()).checking != want {
                isa.exec(chk.core(), IsaOp::CheckState(want))?;
            }
            let before = chk.detections.len();
            let activity = chk.step(cycle, &mut channels[i], &mut isa)?;
            debug_assert!(activity != Activity::Idle || want == Checking::Idle);
            if cfg.stop_on_detection && chk.detections.len() > before {
                report.cycles = cycle + 1;
                return Ok(finish(report, main, checkers, channels));
            }
        }

        if !main.finished() {
            let need = main.required_words();
            if channels.iter().all(|c| c.free() >= need) {
                let out = main.step()?;
                for t in out.words {
                    for (b, ch) in channels.iter_mut().enumerate() {
                        let mut word = t.word.clone();
                        if let Some(f) = fault.filter(|f| f.checker == b && f.hits(&t)) {
                            if word.flip(f.field(), f.bit) {
                                report.injection = Some(Injection {
                                    cycle,
                                    backlog: ch.len(),
                                    pending_instructions: main.state().instret - checkers[b].replayed(),
                                });
                            }
                        }
                        ch.try_push(word)
                            .map_err(|_| Error::Protocol("main core overran a channel it had checked".into()))?;
                    }
                }
            } else {
                report.main_stall_cycles += 1;
            }
        }
        if cfg.record_occupancy {
            report.occupancy.push(channels[0].len());
        }
        cycle += 1;
        let done = main.finished() && checkers.iter().zip(&channels).all(|(c, ch)| c.finished(ch, true));
        if done {
            report.cycles = cycle;
            return Ok(finish(report, main, checkers, channels));
        }
    }
}

fn finish(
    mut report: CosimReport,
    main: MainCore,
    checkers: Vec<CheckerCore>,
    channels: Vec<FifoChannel>,
) -> CosimReport {
    report.user_instructions = main.state().instret;
    report.peak_occupancy = channels.iter().map(FifoChannel::peak_occupancy).collect();
    report.segments = checkers.iter().map(|c| c.verdicts.len()).max().unwrap_or(0);
    for c in checkers {
        report.verdicts.push(c.verdicts);
        report.detections.push(c.detections);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRecord {
    pub fault_id: usize,
    pub fault: FaultSpec,
    pub inject_cycle: u64,
    pub detected: bool,
    pub detect_cycle: Option<u64>,
    pub latency: Option<u64>,
    pub detect_site: Option<DetectSite>,
    /// Consumer cycles to reach the corrupted word at injection time.
    pub drain_cycles: u64,
}

pub const CSV_HEADER: &str =
    "fault_id,target,segment,bit,inject_cycle,detect_cycle,latency_cycles,detect_site,detected";

impl DetectionRecord {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.fault_id,
            self.fault.target.name(),
            self.fault.segment,
            self.fault.bit,
            self.inject_cycle,
            opt(self.detect_cycle),
            opt(self.latency),
            self.detect_site.map_or("none", DetectSite::name),
            self.detected
        )
    }
}

/// Runs one co-simulation per fault, each stopped at its first detection.
/// `first_id` numbers the records.
pub fn inject_and_measure(
    program: &Program,
    cfg: &CosimConfig,
    faults: &[FaultSpec],
    first_id: usize,
) -> Result<Vec<DetectionRecord>> {
    cfg.validate()?;
    let segments = run_main(program, cfg.seg_limit)?;
    for f in faults {
        f.validate(&segments, cfg.checkers)?;
    }
    let mut run_cfg = cfg.clone();
    run_cfg.stop_on_detection = true;
    run_cfg.record_occupancy = false;
    faults
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let report = cosimulate(program, &run_cfg, Some(f))?;
            let inj = report
                .injection
                .ok_or_else(|| Error::Protocol(format!("fault {} was never injected", first_id + i)))?;
            let det = report.detections[f.checker].first().copied();
            Ok(DetectionRecord {
                fault_id: first_id + i,
                fault: *f,
                inject_cycle: inj.cycle,
                detected: det.is_some(),
                detect_cycle: det.map(|d| d.cycle),
                latency: det.map(|d| d.cycle - inj.cycle),
                detect_site: det.map(|d| d.site),
                drain_cycles: inj.drain_cycles(),
            })
        })
        .collect()
}

/// A uniformly chosen fault over the words `segments` forwards.
pub fn random_fault<R: Rng + ?Sized>(segments: &[Segment], checkers: usize, rng: &mut R) -> Option<FaultSpec> {
    if segments.is_empty() {
        return None;
    }
    let with_log: Vec<usize> = (0..segments.len())
        .filter(|&s| !segments[s].entries.is_empty())
        .collect();
    let mut target = FaultTarget::ALL[rng.gen_range(0..FaultTarget::ALL.len())];
    if target.is_log() && with_log.is_empty() {
        target = FaultTarget::EcpWord;
    }
    let (segment, index) = match target {
        FaultTarget::ScpWord | FaultTarget::EcpWord => {
            (rng.gen_range(0..segments.len()), rng.gen_range(0..CHECKPOINT_WORDS))
        }
        FaultTarget::LogAddr | FaultTarget::LogData => {
            let s = with_log[rng.gen_range(0..with_log.len())];
            (s, rng.gen_range(0..segments[s].entries.len()))
        }
        FaultTarget::IcValue => (rng.gen_range(0..segments.len()), 0),
    };
    Some(FaultSpec {
        target,
        segment,
        index,
        bit: rng.gen_range(0..64),
        checker: rng.gen_range(0..checkers),
    })
}

/// Counts of detected latencies in buckets `[k·width, (k+1)·width)`, from
/// zero up to the largest latency.
pub fn latency_histogram(records: &[DetectionRecord], width: u64) -> Result<Vec<(u64, usize)>> {
    if width == 0 {
        return Err(Error::InvalidArgument("histogram bucket width must be positive".into()));
    }
    let lats: Vec<u64> = records.iter().filter_map(|r| r.latency).collect();
    let Some(&max) = lats.iter().max() else {
        return Ok(Vec::new());
    };
    let mut counts = vec![0usize; (max / width + 1) as usize];
    for l in lats {
        counts[(l / width) as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (k as u64 * width, c))
        .collect())
}

pub fn histogram_csv(hist: &[(u64, usize)]) -> String {
    let mut out = String::from("bucket_start,count\n");
    for (lo, c) in hist {
        let _ = writeln!(out, "{lo},{c}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkerflow::machine::{random_program, AluOp, Instruction, ProgramShape};
    use crate::gen::rng_from_seed;

    fn small_cfg() -> CosimConfig {
        CosimConfig {
            seg_limit: 50,
            capacity: 16,
            ..CosimConfig::default()
        }
    }

    fn program(seed: u64, len: usize) -> Program {
        let mut shape = ProgramShape::new(len);
        shape.priv_frac = 0.01;
        random_program(&shape, &mut rng_from_seed(seed))
    }

    #[test]
    fn fault_free_runs_pass() {
        for seed in 0..20 {
            let p = program(seed, 400);
            for checkers in [1, 2] {
                let cfg = CosimConfig {
                    checkers,
                    ..small_cfg()
                };
                let r = cosimulate(&p, &cfg, None).unwrap();
                assert_eq!(r.mismatches(), 0, "seed {seed}");
                assert_eq!(r.verdicts[0].len(), run_main(&p, 50).unwrap().len());
                assert!(r.verdicts.iter().flatten().all(|&v| v == Verdict::Pass));
                assert!(r.peak_occupancy.iter().all(|&o| o <= 16));
            }
        }
    }

    #[test]
    fn ecp_fault_detected_at_its_compare() {
        let code = vec![
            Instruction::Alu {
                op: AluOp::AddImm,
                rd: 1,
                rs1: 1,
                rs2: 0,
                imm: 3
            };
            150
        ];
        let p = Program::new(code, vec![0; 4]).unwrap();
        let f = FaultSpec {
            target: FaultTarget::EcpWord,
            segment: 2,
            index: 3 + 1,
            bit: 5,
            checker: 0,
        };
        let recs = inject_and_measure(&p, &small_cfg(), &[f], 0).unwrap();
        assert!(recs[0].detected);
        assert_eq!(recs[0].detect_site, Some(DetectSite::EcpCompare));
        let r = cosimulate(&p, &small_cfg(), Some(&f)).unwrap();
        assert_eq!(r.detections[0][0].segment, 2);
    }

    #[test]
    fn store_data_fault_caught_before_ecp() {
        let mut code = vec![Instruction::Alu {
            op: AluOp::AddImm,
            rd: 1,
            rs1: 0,
            rs2: 0,
            imm: 9,
        }];
        code.push(Instruction::Store {
            rs: 1,
            base: 0,
            offset: 2,
        });
        code.extend(vec![
            Instruction::Alu {
                op: AluOp::Add,
                rd: 2,
                rs1: 2,
                rs2: 1,
                imm: 0
            };
            40
        ]);
        let p = Program::new(code, vec![0; 4]).unwrap();
        let f = FaultSpec {
            target: FaultTarget::LogData,
            segment: 0,
            index: 0,
            bit: 0,
            checker: 0,
        };
        let rec = &inject_and_measure(&p, &small_cfg(), &[f], 0).unwrap()[0];
        assert_eq!(rec.detect_site, Some(DetectSite::LogCompare));
        let clean = cosimulate(&p, &small_cfg(), None).unwrap();
        // The fault-free run checks the ECP only after replaying all 42.
        assert!(rec.detect_cycle.unwrap() < clean.cycles - 1);
        assert!(rec.latency.unwrap() < 50);
    }

    #[test]
    fn every_target_is_detected() {
        let p = program(7, 600);
        let segs = run_main(&p, 50).unwrap();
        let mut rng = rng_from_seed(1);
        for checkers in [1, 2] {
            let cfg = CosimConfig {
                checkers,
                checker_lag: 30,
                ..small_cfg()
            };
            let faults: Vec<FaultSpec> = (0..200)
                .map(|_| random_fault(&segs, checkers, &mut rng).unwrap())
                .collect();
            for r in inject_and_measure(&p, &cfg, &faults, 0).unwrap() {
                assert!(r.detected, "{:?}", r.fault);
                let want = if r.fault.target.is_log() {
                    DetectSite::LogCompare
                } else {
                    DetectSite::EcpCompare
                };
                assert_eq!(r.detect_site, Some(want), "{:?}", r.fault);
                assert!(r.latency.unwrap() <= cfg.checker_lag + r.drain_cycles + cfg.seg_limit);
            }
        }
    }

    #[test]
    fn invalid_faults_rejected() {
        let p = program(3, 100);
        let f = FaultSpec {
            target: FaultTarget::IcValue,
            segment: 999,
            index: 0,
            bit: 0,
            checker: 0,
        };
        assert!(matches!(
            inject_and_measure(&p, &small_cfg(), &[f], 0),
            Err(Error::InvalidArgument(_))
        ));
        let f = FaultSpec {
            segment: 0,
            checker: 1,
            ..f
        };
        assert!(inject_and_measure(&p, &small_cfg(), &[f], 0).is_err());
    }

    #[test]
    fn idle_checker_lets_backlog_grow() {
        let p = program(11, 2000);
        let cfg = CosimConfig {
            capacity: 64,
            idle_windows: vec![(100, 600)],
            record_occupancy: true,
            ..small_cfg()
        };
        let r = cosimulate(&p, &cfg, None).unwrap();
        assert_eq!(r.mismatches(), 0);
        assert!(r.occupancy[590] > r.occupancy[100]);
        assert!(r.main_stall_cycles > 0);
        assert_eq!(r.peak_occupancy[0], 64);
    }

    #[test]
    fn capacity_and_checker_count_validated() {
        let p = program(1, 10);
        let cfg = CosimConfig {
            capacity: 4,
            ..small_cfg()
        };
        assert!(cosimulate(&p, &cfg, None).is_err());
        let cfg = CosimConfig {
            checkers: 3,
            ..small_cfg()
        };
        assert!(cosimulate(&p, &cfg, None).is_err());
    }

    #[test]
    fn histogram_buckets() {
        let rec = |lat: Option<u64>| DetectionRecord {
            fault_id: 0,
            fault: FaultSpec {
                target: FaultTarget::IcValue,
                segment: 0,
                index: 0,
                bit: 0,
                checker: 0,
            },
            inject_cycle: 0,
            detected: lat.is_some(),
            detect_cycle: lat,
            latency: lat,
            detect_site: None,
            drain_cycles: 0,
        };
        let recs = vec![rec(Some(3)), rec(Some(12)), rec(Some(19)), rec(None)];
        assert_eq!(latency_histogram(&recs, 10).unwrap(), vec![(0, 1), (10, 2)]);
        assert!(latency_histogram(&[], 10).unwrap().is_empty());
        assert!(latency_histogram(&recs, 0).is_err());
        assert_eq!(histogram_csv(&[(0, 1)]), "bucket_start,count\n0,1\n");
        assert_eq!(rec(None).csv_row(), "0,IcValue,0,0,0,,,none,false");
    }
}
