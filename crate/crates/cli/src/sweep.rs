//! Acceptance-ratio sweeps over total utilization.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use flexstep_core::gen::{generate_taskset, GenConfig};
use flexstep_core::simkernel::{schedulable, CheckerRelease, VerdictMode, VerdictOptions};
use flexstep_core::SchemeId;
use rayon::prelude::*;

/// Seeds are `seed + point · SEED_STRIDE + set`.
pub const SEED_STRIDE: u64 = 1_000_000;

pub const DEFAULT_SETS_PER_POINT: usize = 500;

/// Simulated time per verdict in sweeps: ten times the longest generated
/// period (see `SweepConfig::horizon`).
pub const DEFAULT_SWEEP_HORIZON: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictSelect {
    Analytic,
    Sim,
    Both,
}

impl std::str::FromStr for VerdictSelect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(VerdictSelect::Analytic),
            "sim" => Ok(VerdictSelect::Sim),
            "both" => Ok(VerdictSelect::Both),
            _ => Err(format!("unknown verdict mode {s:?} (analytic, sim, both)")),
        }
    }
}

impl VerdictSelect {
    pub fn name(self) -> &'static str {
        match self {
            VerdictSelect::Analytic => "analytic",
            VerdictSelect::Sim => "sim",
            VerdictSelect::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub util_start: f64,
    pub util_end: f64,
    pub util_step: f64,
    pub sets_per_point: usize,
    pub schemes: Vec<SchemeId>,
    pub seed: u64,
    pub verdict: VerdictSelect,
    /// Simulated horizon per verdict; `None` uses the simulator's default
    /// (twice the hyperperiod, capped).
    pub horizon: Option<f64>,
    pub checker_release: CheckerRelease,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m: 8,
            n: 160,
            alpha: 0.125,
            beta: 0.125,
            util_start: 1.0,
            util_end: 8.0,
            util_step: 0.5,
            sets_per_point: DEFAULT_SETS_PER_POINT,
            schemes: SchemeId::ALL.to_vec(),
            seed: 1,
            verdict: VerdictSelect::Analytic,
            horizon: Some(DEFAULT_SWEEP_HORIZON),
            checker_release: CheckerRelease::AtVirtualDeadline,
        }
    }
}

/// One evaluated curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub label: String,
    pub scheme: SchemeId,
    pub mode: VerdictMode,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            bail!("need at least one core and one task");
        }
        if self.util_step.is_nan() || self.util_step <= 0.0 {
            bail!("util step must be positive");
        }
        if !(self.util_start > 0.0 && self.util_start <= self.util_end) {
            bail!("need 0 < util start <= util end");
        }
        if self.util_end >= self.n as f64 {
            bail!(
                "util end {} leaves no room for per-task utilizations below 1 with {} tasks",
                self.util_end,
                self.n
            );
        }
        if self.sets_per_point == 0 {
            bail!("sets per point must be at least 1");
        }
        if self.schemes.is_empty() {
            bail!("no schemes selected");
        }
        if self.horizon.is_some_and(|h| h.is_nan() || h <= 0.0) {
            bail!("horizon must be positive");
        }
        GenConfig::new(self.n, self.m, self.util_start, self.alpha, self.beta, self.seed).validate()?;
        if self.beta > 0.0 && self.m < 3 {
            bail!("triple-check tasks need at least 3 cores (m = {})", self.m);
        }
        if self.alpha > 0.0 && self.m < 2 {
            bail!("double-check tasks need at least 2 cores (m = {})", self.m);
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0.. {
            let u = self.util_start + k as f64 * self.util_step;
            if u > self.util_end + 1e-9 {
                break;
            }
            // Keep printed grid values clean (1.5, not 1.5000000000000002).
            out.push((u * 1e9).round() / 1e9);
        }
        out
    }

    /// Curves in output order. HMR verdicts always come from simulation, so
    /// it gets a single curve even when both modes are requested.
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = Vec::new();
        for &scheme in &self.schemes {
            let modes: &[(VerdictMode, &str)] = match (self.verdict, scheme) {
                (VerdictSelect::Both, SchemeId::Hmr) => &[(VerdictMode::Sim, "/sim")],
                (VerdictSelect::Both, _) => &[(VerdictMode::Analytic, "/analytic"), (VerdictMode::Sim, "/sim")],
                (VerdictSelect::Analytic, _) => &[(VerdictMode::Analytic, "")],
                (VerdictSelect::Sim, _) => &[(VerdictMode::Sim, "")],
            };
            for &(mode, suffix) in modes {
                cols.push(Column {
                    label: format!("{}{}", scheme.name(), suffix),
                    scheme,
                    mode,
                });
            }
        }
        cols
    }

    /// Which procedure produced each curve's verdicts.
    fn verdict_sources(&self) -> String {
        self.columns()
            .iter()
            .map(|c| {
                let src = if c.scheme == SchemeId::Hmr || c.mode == VerdictMode::Sim {
                    "sim"
                } else {
                    "analytic"
                };
                format!("{}={}", c.label, src)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: String,
    pub util: f64,
    pub accepted: usize,
    pub total: usize,
}

impl SweepRow {
    pub fn ratio(&self) -> f64 {
        self.accepted as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub config: SweepConfig,
    /// Ordered by curve, then utilization.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn series(&self, label: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == label)
            .map(|r| (r.util, r.ratio()))
            .collect()
    }

    /// Points where a curve rises by more than `slack` over its previous
    /// point.
    pub fn monotonicity_violations(&self, slack: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for col in self.config.columns() {
            let s = self.series(&col.label);
            for w in s.windows(2) {
                if w[1].1 > w[0].1 + slack {
                    out.push((col.label.clone(), w[1].0));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# m={} n={} alpha={} beta={} seed={} sets_per_point={}",
            c.m, c.n, c.alpha, c.beta, c.seed, c.sets_per_point
        );
        let horizon = c.horizon.map_or("default".to_string(), |h| h.to_string());
        let release = match c.checker_release {
            CheckerRelease::AtVirtualDeadline => "virtual-deadline",
            CheckerRelease::AtOriginalStart => "original-start",
        };
        let _ = writeln!(
            out,
            "# verdict={} sim_horizon={} checker_release={}",
            c.verdict.name(),
            horizon,
            release
        );
        let _ = writeln!(out, "# sources {}", c.verdict_sources());
        out.push_str("scheme,util,accepted,total,ratio\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.scheme, r.util, r.accepted, r.total, r.ratio());
        }
        out
    }
}

/// Evaluates every curve on `sets_per_point` generated task sets per
/// utilization point. `progress(done, total)` is called after each point.
pub fn run_sweep(cfg: &SweepConfig, progress: &dyn Fn(usize, usize)) -> Result<SweepTable> {
    cfg.validate()?;
    let points = cfg.points();
    let columns = cfg.columns();
    let opts = |mode| VerdictOptions {
        mode,
        horizon: cfg.horizon,
        checker_release: cfg.checker_release,
    };
    // accepted[point][column]
    let mut accepted = vec![vec![0usize; columns.len()]; points.len()];
    for (pi, &util) in points.iter().enumerate() {
        let verdicts: Vec<Vec<bool>> = (0..cfg.sets_per_point)
            .into_par_iter()
            .map(|set| -> Result<Vec<bool>> {
                let seed = cfg.seed + pi as u64 * SEED_STRIDE + set as u64;
                let gen = GenConfig::new(cfg.n, cfg.m, util, cfg.alpha, cfg.beta, seed);
                let ts = generate_taskset(&gen)?;
                columns
                    .iter()
                    .map(|c| Ok(schedulable(&ts, cfg.m, c.scheme, opts(c.mode))?))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for v in verdicts {
            for (ci, ok) in v.into_iter().enumerate() {
                accepted[pi][ci] += ok as usize;
            }
        }
        progress(pi + 1, points.len());
    }
    let mut rows = Vec::new();
    for (ci, col) in columns.iter().enumerate() {
        for (pi, &util) in points.iter().enumerate() {
            rows.push(SweepRow {
                scheme: col.label.clone(),
                util,
                accepted: accepted[pi][ci],
                total: cfg.sets_per_point,
            });
        }
    }
    Ok(SweepTable {
        config: cfg.clone(),
        rows,
    })
}
