//! Random task-set generation for acceptance-ratio sweeps.
//!
//! Utilizations come from UUnifast, periods are log-uniform, and reliability
//! classes are assigned to uniformly chosen task indices.
//!
//! The random source is xoshiro256++ (Blackman & Vigna) seeded through
//! SplitMix64, as implemented by `rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64`.
//! Uniform doubles take the top 53 bits of each 64-bit output
//! (`rand`'s `Standard` distribution), so a given seed reproduces the same
//! task set everywhere.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::model::{Task, TaskClass, TaskSet};

/// The generator's random source.
pub type GenRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> GenRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Whole-vector redraws allowed before generation gives up on `u_i < 1`.
pub const MAX_REDRAWS: usize = 100;

pub const DEFAULT_PERIOD_MIN: f64 = 10.0;
pub const DEFAULT_PERIOD_MAX: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub util: f64,
    /// Fraction of DoubleCheck tasks.
    pub alpha: f64,
    /// Fraction of TripleCheck tasks.
    pub beta: f64,
    pub period_min: f64,
    pub period_max: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, m: usize, util: f64, alpha: f64, beta: f64, seed: u64) -> Self {
        GenConfig {
            n,
            m,
            util,
            alpha,
            beta,
            period_min: DEFAULT_PERIOD_MIN,
            period_max: DEFAULT_PERIOD_MAX,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.util > 0.0 && self.util.is_finite()) {
            return bad(format!("utilization must be positive, got {}", self.util));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta > 1.0 + 1e-12 {
            return bad(format!(
                "need 0 <= alpha, 0 <= beta, alpha + beta <= 1 (alpha={}, beta={})",
                self.alpha, self.beta
            ));
        }
        if !(self.period_min > 0.0 && self.period_min <= self.period_max) {
            return bad(format!(
                "need 0 < period_min <= period_max ({} .. {})",
                self.period_min, self.period_max
            ));
        }
        Ok(())
    }

    pub fn double_check_count(&self) -> usize {
        class_count(self.alpha, self.n)
    }

    pub fn triple_check_count(&self) -> usize {
        class_count(self.beta, self.n)
    }
}

fn class_count(fraction: f64, n: usize) -> usize {
    // 0.29 * 100 = 28.999999999999996 must still count as 29.
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Draws `n` utilizations summing to `util` (Bini & Buttazzo). The last
/// element closes the sum.
pub fn uunifast<R: Rng + ?Sized>(n: usize, util: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("uunifast needs n >= 1".into()));
    }
    if !(util > 0.0 && util.is_finite()) {
        return Err(Error::InvalidArgument(format!("uunifast needs util > 0, got {util}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut sum = util;
    for i in 1..n {
        let exponent = 1.0 / (n - i) as f64;
        let next = loop {
            // r in (0, 1); a draw that rounds u_i to zero is redrawn.
            let r: f64 = rng.gen();
            if r == 0.0 {
                continue;
            }
            let next = sum * r.powf(exponent);
            if sum - next > 0.0 && next > 0.0 {
                break next;
            }
        };
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    Ok(out)
}

/// UUnifast with whole-vector redraw whenever some `u_i >= 1`.
pub fn uunifast_discard<R: Rng + ?Sized>(n: usize, util: f64, rng: &mut R, max_attempts: usize) -> Result<Vec<f64>> {
    for _ in 0..max_attempts {
        let us = uunifast(n, util, rng)?;
        if us.iter().all(|&u| u < 1.0) {
            return Ok(us);
        }
    }
    Err(Error::GenerationFailure {
        attempts: max_attempts,
        reason: format!("every draw of {n} tasks at U={util} had some u_i >= 1"),
    })
}

/// Log-uniform draw in `[lo, hi]`.
fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if lo == hi {
        return lo;
    }
    let r: f64 = rng.gen();
    (lo.ln() + r * (hi.ln() - lo.ln())).exp()
}

/// Generates one task set. Deterministic in `cfg` (including its seed).
pub fn generate_taskset(cfg: &GenConfig) -> Result<TaskSet> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let utils = uunifast_discard(cfg.n, cfg.util, &mut rng, MAX_REDRAWS)?;
    let periods: Vec<f64> = (0..cfg.n)
        .map(|_| log_uniform(cfg.period_min, cfg.period_max, &mut rng))
        .collect();

    let mut classes = vec![TaskClass::NonVerify; cfg.n];
    let mut idx: Vec<usize> = (0..cfg.n).collect();
    idx.shuffle(&mut rng);
    let n2 = cfg.double_check_count();
    let n3 = cfg.triple_check_count();
    for &i in &idx[..n2] {
        classes[i] = TaskClass::DoubleCheck;
    }
    for &i in &idx[n2..n2 + n3] {
        classes[i] = TaskClass::TripleCheck;
    }

    let tasks = (0..cfg.n)
        .map(|i| Task::new(i as u32, utils[i] * periods[i], periods[i], classes[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSet {
        tasks,
        target_util: cfg.util,
        seed: cfg.seed,
        meta: Some(cfg.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_task_takes_everything() {
        let mut rng = rng_from_seed(1);
        assert_eq!(uunifast(1, 0.7, &mut rng).unwrap(), vec![0.7]);
    }

    #[test]
    fn four_tasks_sum() {
        let mut rng = rng_from_seed(3);
        let us = uunifast(4, 2.0, &mut rng).unwrap();
        assert_eq!(us.len(), 4);
        assert!(us.iter().all(|&u| u > 0.0));
        assert!((us.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn large_set_with_discard() {
        let mut rng = rng_from_seed(42);
        let us = uunifast_discard(160, 4.0, &mut rng, MAX_REDRAWS).unwrap();
        assert_eq!(us.len(), 160);
        assert!(us.iter().all(|&u| u > 0.0 && u < 1.0));
        assert!((us.iter().sum::<f64>() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_tasks_rejected() {
        let mut rng = rng_from_seed(0);
        assert!(matches!(uunifast(0, 1.0, &mut rng), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn impossible_per_task_bound_fails() {
        let cfg = GenConfig::new(2, 1, 2.5, 0.0, 0.0, 9);
        assert!(matches!(generate_taskset(&cfg), Err(Error::GenerationFailure { .. })));
    }

    #[test]
    fn class_counts_match_fractions() {
        let ts = generate_taskset(&GenConfig::new(160, 8, 4.0, 0.0625, 0.0625, 5)).unwrap();
        assert_eq!(ts.count_class(TaskClass::DoubleCheck), 10);
        assert_eq!(ts.count_class(TaskClass::TripleCheck), 10);
        let ts = generate_taskset(&GenConfig::new(160, 8, 4.0, 0.25, 0.0, 5)).unwrap();
        assert_eq!(ts.count_class(TaskClass::DoubleCheck), 40);
        assert_eq!(ts.count_class(TaskClass::TripleCheck), 0);
        assert_eq!(class_count(0.29, 100), 29);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = GenConfig::new(2, 1, 1.0, 0.0, 0.0, 7);
        let a = generate_taskset(&cfg).unwrap();
        let b = generate_taskset(&cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let other = generate_taskset(&GenConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.to_text(), other.to_text());
    }

    #[test]
    fn periods_within_range() {
        let ts = generate_taskset(&GenConfig::new(200, 8, 3.0, 0.1, 0.1, 11)).unwrap();
        assert!(ts
            .tasks
            .iter()
            .all(|t| t.period >= DEFAULT_PERIOD_MIN - 1e-9 && t.period <= DEFAULT_PERIOD_MAX + 1e-9));
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::new(0, 1, 1.0, 0.0, 0.0, 0).validate().is_err());
        assert!(GenConfig::new(4, 1, 1.0, 0.7, 0.4, 0).validate().is_err());
        assert!(GenConfig::new(4, 1, -1.0, 0.0, 0.0, 0).validate().is_err());
        let mut cfg = GenConfig::new(4, 1, 1.0, 0.0, 0.0, 0);
        cfg.period_min = 50.0;
        cfg.period_max = 20.0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn generated_sets_hit_target(
            n in 1usize..60,
            frac in 0.05f64..0.9,
            alpha in 0.0f64..0.5,
            beta in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let util = frac * (n as f64 * 0.2).min(4.0);
            let cfg = GenConfig::new(n, 4, util.max(0.01), alpha, beta, seed);
            let ts = generate_taskset(&cfg).unwrap();
            prop_assert!((ts.total_utilization() - cfg.util).abs() < 1e-9);
            prop_assert_eq!(ts.count_class(TaskClass::DoubleCheck), cfg.double_check_count());
            prop_assert_eq!(ts.count_class(TaskClass::TripleCheck), cfg.triple_check_count());
            let again = generate_taskset(&cfg).unwrap();
            prop_assert_eq!(ts.to_text(), again.to_text());
        }
    }
}
