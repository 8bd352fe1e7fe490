use std::path::Path;
use std::process::{Command, Output};

fn flexstep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexstep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = flexstep(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn gen_round_trips_through_partition_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let ts = dir.path().join("ts.txt");
    ok(&[
        "gen",
        "--tasks",
        "12",
        "--cores",
        "4",
        "--util",
        "1.5",
        "--seed",
        "3",
        "--out",
        ts.to_str().unwrap(),
    ]);
    let text = read(&ts);
    assert!(text.starts_with("12 1.5 3\n"), "{text}");
    assert_eq!(text.lines().count(), 13);

    let part = ok(&[
        "partition",
        "--input",
        ts.to_str().unwrap(),
        "--cores",
        "4",
        "--scheme",
        "FlexStep",
    ]);
    assert!(part.lines().any(|l| l.starts_with("place entity=")));
    assert!(part.contains("core 3:"));

    let trace = ok(&[
        "simulate",
        "--input",
        ts.to_str().unwrap(),
        "--cores",
        "4",
        "--horizon",
        "50",
    ]);
    assert!(trace.lines().all(|l| l.starts_with("t=")));
    assert!(trace.contains("event=release"));
}

#[test]
fn sweep_output_is_deterministic_and_file_configurable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.conf");
    std::fs::write(
        &cfg,
        "# small sweep\ncores = 4\ntasks = 20\nalpha = 0.1\nbeta = 0.1\nutil_start = 1\nutil_end = 3\n\
         util-step = 1\nsets_per_point = 5\nseed = 9\n",
    )
    .unwrap();
    let a = ok(&["sweep", "--config", cfg.to_str().unwrap()]);
    let b = ok(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(a, b);
    assert!(a.contains("# m=4 n=20 alpha=0.1 beta=0.1 seed=9 sets_per_point=5"));
    let rows: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "scheme,util,accepted,total,ratio");
    assert_eq!(rows.len(), 1 + 3 * 3);

    // A flag beats the file.
    let c = ok(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--sets-per-point",
        "2",
        "--scheme",
        "HMR",
    ]);
    assert!(c.contains("sets_per_point=2"));
    assert!(c
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .all(|l| l.starts_with("HMR,")));
}

#[test]
fn infeasible_sweep_fails_fast() {
    let out = flexstep(&[
        "sweep",
        "--cores",
        "2",
        "--tasks",
        "20",
        "--beta",
        "0.2",
        "--util-end",
        "2",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 cores"));
}

#[test]
fn fault_campaign_writes_records_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("faults.csv");
    ok(&[
        "faults",
        "--programs",
        "3",
        "--program-len",
        "800",
        "--faults",
        "30",
        "--seg-limit",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    let records = read(&out);
    assert!(records
        .starts_with("fault_id,target,segment,bit,inject_cycle,detect_cycle,latency_cycles,detect_site,detected\n"));
    assert_eq!(records.lines().count(), 31);
    assert!(records.lines().skip(1).all(|l| l.ends_with(",true")));
    let hist = read(&dir.path().join("faults.hist.csv"));
    assert!(hist.starts_with("bucket_start,count\n"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 30);
}

#[test]
fn zero_fault_campaign_is_empty() {
    let text = ok(&["faults", "--faults", "0"]);
    assert_eq!(text.lines().filter(|l| !l.is_empty()).count(), 2);
}
