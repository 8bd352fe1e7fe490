use std::collections::VecDeque;

use flexstep_core::checkerflow::{
    cosimulate, random_program, run_main, ChannelWord, CosimConfig, EndCause, FifoChannel, Instruction, Interpreter,
    MainCore, Program, ProgramShape, Verdict,
};
use flexstep_core::gen::rng_from_seed;
use proptest::prelude::*;

fn program(seed: u64, len: usize, priv_frac: f64) -> Program {
    let shape = ProgramShape {
        priv_frac,
        ..ProgramShape::new(len)
    };
    random_program(&shape, &mut rng_from_seed(seed))
}

/// Executed instruction stream, split into user runs between privilege
/// switches, from a plain interpreter.
fn user_runs(p: &Program) -> Vec<u64> {
    let mut it = Interpreter::new(p);
    let mut runs = vec![0u64];
    while !it.finished() {
        let ins = p.code[it.state.npc as usize];
        if ins.is_user() {
            *runs.last_mut().unwrap() += 1;
        } else if *runs.last().unwrap() > 0 {
            runs.push(0);
        }
        it.step().unwrap();
    }
    runs.retain(|&r| r > 0);
    runs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fifo_matches_queue_model(cap in 1usize..12, ops in prop::collection::vec(any::<bool>(), 0..400)) {
        let mut ch = FifoChannel::new(cap).unwrap();
        let mut model = VecDeque::new();
        let mut next = 0u64;
        for push in ops {
            if push {
                let r = ch.try_push(ChannelWord::Ic(next));
                prop_assert_eq!(r.is_err(), model.len() == cap);
                if r.is_ok() {
                    model.push_back(next);
                }
                next += 1;
            } else {
                let got = ch.pop().map(|w| match w {
                    ChannelWord::Ic(n) => n,
                    other => panic!("unexpected {other}"),
                });
                prop_assert_eq!(got, model.pop_front());
            }
            prop_assert!(ch.len() <= cap);
            prop_assert_eq!(ch.len(), model.len());
            prop_assert_eq!(ch.is_full(), model.len() == cap);
            prop_assert_eq!(ch.free(), cap - model.len());
        }
        prop_assert!(ch.peak_occupancy() <= cap);
    }

    /// A main core paced by a randomly scheduled consumer: it retires an
    /// instruction exactly when the channel has room for all its words.
    #[test]
    fn main_stalls_iff_channel_lacks_room(
        seed in any::<u64>(),
        cap in 5usize..16,
        pops in prop::collection::vec(0usize..4, 1..64),
    ) {
        let p = program(seed, 300, 0.02);
        let mut main = MainCore::new(&p, 40).unwrap();
        let mut ch = FifoChannel::new(cap).unwrap();
        let mut sent = Vec::new();
        let mut received = Vec::new();
        let mut cycle = 0usize;
        while !main.finished() {
            let need = main.required_words();
            if ch.free() >= need {
                for t in main.step().unwrap().words {
                    ch.try_push(t.word.clone()).expect("room was checked");
                    sent.push(t.word);
                }
            } else {
                prop_assert!(ch.free() < need && need <= cap);
            }
            prop_assert!(ch.len() <= cap);
            for _ in 0..pops[cycle % pops.len()].max(usize::from(cycle.is_multiple_of(7))) {
                if let Some(w) = ch.pop() {
                    received.push(w);
                }
            }
            cycle += 1;
        }
        while let Some(w) = ch.pop() {
            received.push(w);
        }
        prop_assert_eq!(sent, received);
    }

    #[test]
    fn segments_tile_user_stream(seed in any::<u64>(), len in 0usize..3000, limit in 1u64..600) {
        let p = program(seed, len, 0.01);
        let segs = run_main(&p, limit).unwrap();
        // Oracle: every user run cut into chunks of at most `limit`.
        let mut want = Vec::new();
        for run in user_runs(&p) {
            let mut left = run;
            while left > 0 {
                want.push(left.min(limit));
                left -= left.min(limit);
            }
        }
        let ics: Vec<u64> = segs.iter().map(|s| s.ic).collect();
        prop_assert_eq!(&ics, &want);
        for (i, s) in segs.iter().enumerate() {
            let next = p.code.get(s.ecp.npc as usize);
            let cause = if s.ic == limit {
                EndCause::CountLimit
            } else if next.is_none() {
                EndCause::ProgramEnd
            } else {
                prop_assert_eq!(next, Some(&Instruction::PrivSwitch));
                EndCause::PrivSwitch
            };
            prop_assert_eq!(s.end_cause, cause);
            prop_assert_eq!(s.ecp.instret - s.scp.instret, s.ic);
            if let Some(n) = segs.get(i + 1) {
                let mut expect = s.ecp.clone();
                expect.skip_privileged(&p.code);
                prop_assert_eq!(&n.scp, &expect);
            }
        }
    }

    #[test]
    fn segment_log_matches_memory_instructions(seed in any::<u64>(), len in 1usize..2000) {
        let p = program(seed, len, 0.005);
        let segs = run_main(&p, 250).unwrap();
        let mut it = Interpreter::new(&p);
        let mut want = 0usize;
        while !it.finished() {
            want += p.code[it.state.npc as usize].log_entries();
            it.step().unwrap();
        }
        let got: usize = segs.iter().map(|s| s.entries.len()).sum();
        prop_assert_eq!(got, want);
        let seqs: Vec<u64> = segs.iter().flat_map(|s| s.entries.iter().map(|e| e.seq)).collect();
        prop_assert!(seqs.iter().enumerate().all(|(i, &s)| s == i as u64));
    }
}

#[test]
fn main_core_agrees_with_plain_interpreter() {
    for seed in 0..200 {
        let p = program(seed, 1500, 0.003);
        let mut main = MainCore::new(&p, 300).unwrap();
        while !main.finished() {
            main.step().unwrap();
        }
        let it = p.run(1_000_000).unwrap();
        assert_eq!(main.state(), &it.state, "seed {seed}");
        assert_eq!(main.memory(), &it.memory.words[..]);
    }
}

#[test]
fn fault_free_cosimulation_passes_everything() {
    for seed in 0..60 {
        let p = program(seed, 2500, 0.002);
        let user = user_runs(&p).iter().sum::<u64>();
        for (checkers, cap, lag) in [(1, 5, 0), (2, 64, 300), (1, 1024, 5000)] {
            let cfg = CosimConfig {
                seg_limit: 400,
                capacity: cap,
                checker_lag: lag,
                checkers,
                idle_windows: vec![(700, 900)],
                ..CosimConfig::default()
            };
            let r = cosimulate(&p, &cfg, None).unwrap();
            assert_eq!(r.mismatches(), 0, "seed {seed}");
            assert_eq!(r.user_instructions, user);
            for v in &r.verdicts {
                assert_eq!(v.len(), r.segments);
                assert!(v.iter().all(|&x| x == Verdict::Pass));
            }
            assert!(r.peak_occupancy.iter().all(|&o| o <= cap));
        }
    }
}
