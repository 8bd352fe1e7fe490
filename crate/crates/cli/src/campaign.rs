//! Fault-injection campaigns over random programs.

use anyhow::{bail, Result};
use flexstep_core::checkerflow::{
    histogram_csv, inject_and_measure, latency_histogram, random_fault, random_program, run_main, CosimConfig,
    DetectionRecord, ProgramShape, CSV_HEADER, DEFAULT_CAPACITY, DEFAULT_SEG_LIMIT,
};
use flexstep_core::gen::rng_from_seed;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub programs: usize,
    pub program_len: usize,
    /// Total faults, spread evenly over the programs.
    pub faults: usize,
    pub seg_limit: u64,
    pub capacity: usize,
    pub lag: u64,
    pub checkers: usize,
    pub seed: u64,
    /// Fraction of instructions that are privilege switches.
    pub priv_frac: f64,
    pub bucket_width: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            programs: 100,
            program_len: 12_000,
            faults: 1000,
            seg_limit: DEFAULT_SEG_LIMIT,
            capacity: DEFAULT_CAPACITY,
            lag: 0,
            checkers: 1,
            seed: 1,
            priv_frac: 0.0005,
            bucket_width: 100,
        }
    }
}

impl CampaignConfig {
    fn cosim(&self) -> CosimConfig {
        CosimConfig {
            seg_limit: self.seg_limit,
            capacity: self.capacity,
            checker_lag: self.lag,
            checkers: self.checkers,
            ..CosimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cosim().validate()?;
        if self.faults > 0 && (self.programs == 0 || self.program_len == 0) {
            bail!("faults need at least one non-empty program");
        }
        if !(0.0..1.0).contains(&self.priv_frac) {
            bail!("privilege-switch fraction must be in [0, 1)");
        }
        if self.bucket_width == 0 {
            bail!("histogram bucket width must be positive");
        }
        Ok(())
    }

    fn shape(&self) -> ProgramShape {
        ProgramShape {
            priv_frac: self.priv_frac,
            ..ProgramShape::new(self.program_len)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub records: Vec<DetectionRecord>,
    pub histogram: Vec<(u64, usize)>,
    /// Faults left undrawn because a program forwarded no segments.
    pub skipped: usize,
}

impl CampaignResult {
    pub fn detected(&self) -> usize {
        self.records.iter().filter(|r| r.detected).count()
    }

    pub fn detection_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        self.detected() as f64 / self.records.len() as f64
    }

    pub fn records_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        histogram_csv(&self.histogram)
    }
}

/// Program `p` is drawn from seed `seed + p`; its faults from the same
/// stream after the program.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    if cfg.faults == 0 {
        return Ok(CampaignResult {
            records: Vec::new(),
            histogram: Vec::new(),
            skipped: 0,
        });
    }
    let per = cfg.faults / cfg.programs;
    let extra = cfg.faults % cfg.programs;
    let share = |p: usize| per + (p < extra) as usize;
    let first_id = |p: usize| p * per + p.min(extra);
    let cosim = cfg.cosim();
    let batches: Vec<(Vec<DetectionRecord>, usize)> = (0..cfg.programs)
        .into_par_iter()
        .map(|p| -> Result<(Vec<DetectionRecord>, usize)> {
            let want = share(p);
            if want == 0 {
                return Ok((Vec::new(), 0));
            }
            let mut rng = rng_from_seed(cfg.seed + p as u64);
            let program = random_program(&cfg.shape(), &mut rng);
            let segments = run_main(&program, cfg.seg_limit)?;
            let faults: Vec<_> = (0..want)
                .filter_map(|_| random_fault(&segments, cfg.checkers, &mut rng))
                .collect();
            let skipped = want - faults.len();
            Ok((inject_and_measure(&program, &cosim, &faults, first_id(p))?, skipped))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(cfg.faults);
    let mut skipped = 0;
    for (r, s) in batches {
        records.extend(r);
        skipped += s;
    }
    let histogram = latency_histogram(&records, cfg.bucket_width)?;
    Ok(CampaignResult {
        records,
        histogram,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        CampaignConfig {
            programs: 4,
            program_len: 600,
            faults: 40,
            seg_limit: 200,
            capacity: 64,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn zero_faults_give_empty_outputs() {
        let r = run_campaign(&CampaignConfig { faults: 0, ..small() }).unwrap();
        assert!(r.records.is_empty());
        assert!(r.histogram.is_empty());
        assert_eq!(r.histogram_csv(), "bucket_start,count\n");
    }

    #[test]
    fn every_fault_detected_and_ids_contiguous() {
        let r = run_campaign(&small()).unwrap();
        assert_eq!(r.records.len() + r.skipped, 40);
        assert_eq!(r.detection_rate(), 1.0);
        for (i, rec) in r.records.iter().enumerate() {
            assert_eq!(rec.fault_id, i);
        }
        let total: usize = r.histogram.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, r.records.len());
    }

    #[test]
    fn lag_shifts_latency() {
        let mean = |lag| {
            let cfg = CampaignConfig {
                lag,
                capacity: DEFAULT_CAPACITY,
                ..small()
            };
            let r = run_campaign(&cfg).unwrap();
            let l: Vec<u64> = r.records.iter().filter_map(|r| r.latency).collect();
            l.iter().sum::<u64>() as f64 / l.len() as f64
        };
        let shift = mean(10_000) - mean(0);
        // The whole program fits in the channel, so every injection happens
        // before the checkers start and waits out the full lag.
        assert!((shift - 10_000.0).abs() < 1_000.0, "shift {shift}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(run_campaign(&CampaignConfig { capacity: 2, ..small() }).is_err());
        assert!(run_campaign(&CampaignConfig {
            bucket_width: 0,
            ..small()
        })
        .is_err());
        assert!(run_campaign(&CampaignConfig { programs: 0, ..small() }).is_err());
    }
}
