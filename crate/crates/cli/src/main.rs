use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flexstep_cli::campaign::{run_campaign, CampaignConfig};
use flexstep_cli::config::KvFile;
use flexstep_cli::sweep::{run_sweep, SweepConfig, VerdictSelect, DEFAULT_SWEEP_HORIZON};
use flexstep_core::gen::{generate_taskset, GenConfig};
use flexstep_core::model::fmt_sig12;
use flexstep_core::partition::{partition, partition_flexstep_traced};
use flexstep_core::simkernel::{default_horizon, simulate, CheckerRelease, SimConfig, TimeMode};
use flexstep_core::{SchemeId, TaskSet};

#[derive(Parser)]
#[command(
    name = "flexstep",
    version,
    about = "Verification-scheme scheduling and checker-flow experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one task set.
    Gen(GenArgs),
    /// Partition a task set and show the result.
    Partition(PartitionArgs),
    /// Acceptance ratio against total utilization.
    Sweep(SweepArgs),
    /// Simulate one task set and print its event trace.
    Simulate(SimulateArgs),
    /// Fault-injection campaign on the checker flow.
    Faults(FaultArgs),
}

#[derive(Args)]
struct Common {
    /// key=value file; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn file(&self) -> Result<KvFile> {
        match &self.config {
            Some(p) => KvFile::load(p),
            None => Ok(KvFile::default()),
        }
    }
}

#[derive(Args)]
struct GenParams {
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    /// Total utilization.
    #[arg(long)]
    util: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl GenParams {
    fn resolve(self, kv: &KvFile) -> Result<GenConfig> {
        let cfg = GenConfig::new(
            kv.pick(self.tasks, "tasks", 16)?,
            kv.pick(self.cores, "cores", 4)?,
            kv.pick(self.util, "util", 2.0)?,
            kv.pick(self.alpha, "alpha", 0.125)?,
            kv.pick(self.beta, "beta", 0.125)?,
            kv.pick(self.seed, "seed", 1)?,
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A task set from `--input` or generated from the parameters.
#[derive(Args)]
struct TaskSource {
    /// Task-set file in the `gen` output format.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    gen: GenParams,
}

impl TaskSource {
    fn load(self, kv: &KvFile) -> Result<(TaskSet, usize)> {
        let input = self.input.clone().or_else(|| kv.get("input").map(PathBuf::from));
        let cores = kv.pick(self.gen.cores, "cores", 4)?;
        match input {
            Some(p) => {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                Ok((TaskSet::parse(&text)?, cores))
            }
            None => {
                let cfg = self.gen.resolve(kv)?;
                Ok((generate_taskset(&cfg)?, cfg.m))
            }
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    src: GenParams,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    src: TaskSource,
    #[arg(long)]
    scheme: Option<SchemeId>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    util_start: Option<f64>,
    #[arg(long)]
    util_end: Option<f64>,
    #[arg(long)]
    util_step: Option<f64>,
    #[arg(long)]
    sets_per_point: Option<usize>,
    /// Comma-separated schemes (default: all three).
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<SchemeId>>,
    #[arg(long)]
    seed: Option<u64>,
    /// analytic, sim or both.
    #[arg(long)]
    verdict: Option<VerdictSelect>,
    /// Simulated time per verdict, or `default` for twice the hyperperiod
    /// capped at 10^6.
    #[arg(long)]
    horizon: Option<String>,
    /// Release checkers when the original job completes instead of at its
    /// virtual deadline.
    #[arg(long)]
    coupled_checkers: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    src: TaskSource,
    #[arg(long)]
    scheme: Option<SchemeId>,
    /// Defaults to twice the hyperperiod, capped at 10^6.
    #[arg(long)]
    horizon: Option<f64>,
    /// Integer tick arithmetic instead of floating point.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    coupled_checkers: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FaultArgs {
    #[arg(long)]
    programs: Option<usize>,
    #[arg(long)]
    program_len: Option<usize>,
    #[arg(long)]
    faults: Option<usize>,
    #[arg(long)]
    seg_limit: Option<u64>,
    /// Channel capacity in words.
    #[arg(long)]
    capacity: Option<usize>,
    /// Cycles before the checkers start.
    #[arg(long)]
    lag: Option<u64>,
    #[arg(long)]
    checkers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    priv_frac: Option<f64>,
    #[arg(long)]
    bucket_width: Option<u64>,
    /// Histogram file (default: `<out>.hist.csv`, or appended to standard
    /// output after a blank line).
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let kv = a.common.file()?;
    let ts = generate_taskset(&a.src.resolve(&kv)?)?;
    emit(a.common.out.as_deref(), &ts.to_text())
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let kv = a.common.file()?;
    let scheme = kv.pick(a.scheme, "scheme", SchemeId::FlexStep)?;
    let (ts, m) = a.src.load(&kv)?;
    let mut text = String::new();
    let p = if scheme == SchemeId::FlexStep {
        let (p, steps) = partition_flexstep_traced(&ts, m)?;
        for s in steps {
            let dens: Vec<String> = s.density_before.iter().map(|&d| fmt_sig12(d)).collect();
            text.push_str(&format!(
                "place entity={} task={} core={} densities=[{}]\n",
                s.entity_id,
                s.task_id,
                s.core,
                dens.join(" ")
            ));
        }
        p
    } else {
        partition(&ts, m, scheme)?
    };
    text.push_str(&p.to_text());
    emit(a.common.out.as_deref(), &text)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let kv = a.common.file()?;
    let d = SweepConfig::default();
    let schemes = match a.scheme {
        Some(s) => s,
        None => match kv.get("scheme") {
            Some(list) => list.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?,
            None => d.schemes.clone(),
        },
    };
    let horizon = match a.horizon.as_deref().or(kv.get("horizon")) {
        None => Some(DEFAULT_SWEEP_HORIZON),
        Some("default") => None,
        Some(h) => Some(h.parse().with_context(|| format!("bad horizon {h:?}"))?),
    };
    let coupled = a.coupled_checkers || kv.pick(None, "coupled-checkers", false)?;
    let cfg = SweepConfig {
        m: kv.pick(a.cores, "cores", d.m)?,
        n: kv.pick(a.tasks, "tasks", d.n)?,
        alpha: kv.pick(a.alpha, "alpha", d.alpha)?,
        beta: kv.pick(a.beta, "beta", d.beta)?,
        util_start: kv.pick(a.util_start, "util-start", d.util_start)?,
        util_end: kv.pick(a.util_end, "util-end", d.util_end)?,
        util_step: kv.pick(a.util_step, "util-step", d.util_step)?,
        sets_per_point: kv.pick(a.sets_per_point, "sets-per-point", d.sets_per_point)?,
        schemes,
        seed: kv.pick(a.seed, "seed", d.seed)?,
        verdict: kv.pick(a.verdict, "verdict", d.verdict)?,
        horizon,
        checker_release: if coupled {
            CheckerRelease::AtOriginalStart
        } else {
            CheckerRelease::AtVirtualDeadline
        },
    };
    let table = run_sweep(&cfg, &|done, total| eprintln!("sweep: point {done}/{total}"))?;
    for (label, u) in table.monotonicity_violations(0.0) {
        eprintln!("note: {label} rises at U={u}");
    }
    emit(a.common.out.as_deref(), &table.to_csv())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let kv = a.common.file()?;
    let scheme = kv.pick(a.scheme, "scheme", SchemeId::FlexStep)?;
    let horizon_flag = a.horizon;
    let exact = a.exact || kv.pick(None, "exact", false)?;
    let coupled = a.coupled_checkers || kv.pick(None, "coupled-checkers", false)?;
    let (ts, m) = a.src.load(&kv)?;
    let p = partition(&ts, m, scheme)?;
    if !p.unplaced.is_empty() {
        bail!("{} could not place tasks {:?} on {m} cores", scheme, p.unplaced);
    }
    let horizon = match horizon_flag {
        Some(h) => h,
        None => kv.pick(None, "horizon", default_horizon(&ts))?,
    };
    let mut cfg = SimConfig::new(horizon);
    cfg.record_trace = true;
    if exact {
        cfg.time_mode = TimeMode::ExactInteger;
    }
    if coupled {
        cfg.checker_release = CheckerRelease::AtOriginalStart;
    }
    let r = simulate(&p, &cfg)?;
    eprintln!(
        "simulate: {} misses, {} preemptions, horizon {}",
        r.misses.len(),
        r.preemptions,
        fmt_sig12(horizon)
    );
    emit(a.common.out.as_deref(), &r.trace_text())
}

fn cmd_faults(a: FaultArgs) -> Result<()> {
    let kv = a.common.file()?;
    let d = CampaignConfig::default();
    let cfg = CampaignConfig {
        programs: kv.pick(a.programs, "programs", d.programs)?,
        program_len: kv.pick(a.program_len, "program-len", d.program_len)?,
        faults: kv.pick(a.faults, "faults", d.faults)?,
        seg_limit: kv.pick(a.seg_limit, "seg-limit", d.seg_limit)?,
        capacity: kv.pick(a.capacity, "capacity", d.capacity)?,
        lag: kv.pick(a.lag, "lag", d.lag)?,
        checkers: kv.pick(a.checkers, "checkers", d.checkers)?,
        seed: kv.pick(a.seed, "seed", d.seed)?,
        priv_frac: kv.pick(a.priv_frac, "priv-frac", d.priv_frac)?,
        bucket_width: kv.pick(a.bucket_width, "bucket-width", d.bucket_width)?,
    };
    let r = run_campaign(&cfg)?;
    eprintln!(
        "faults: {} injected, {} detected ({:.4}), {} skipped, capacity {} words",
        r.records.len(),
        r.detected(),
        r.detection_rate(),
        r.skipped,
        cfg.capacity
    );
    let hist_path = a
        .histogram
        .or_else(|| kv.get("histogram").map(PathBuf::from))
        .or_else(|| a.common.out.as_ref().map(|o| o.with_extension("hist.csv")));
    match (a.common.out.as_deref(), hist_path) {
        (out, Some(h)) => {
            emit(out, &r.records_csv())?;
            emit(Some(&h), &r.histogram_csv())
        }
        (None, None) => emit(None, &format!("{}\n{}", r.records_csv(), r.histogram_csv())),
        (Some(_), None) => unreachable!("histogram path defaults from --out"),
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Partition(a) => cmd_partition(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Faults(a) => cmd_faults(a),
    }
}
