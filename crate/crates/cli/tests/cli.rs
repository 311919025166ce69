//! End-to-end tests running the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn peps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// Drops the final (timing) column of every line.
fn strip_last_column(csv: &str) -> String {
    csv.lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn bare_invocation_prints_usage_and_fails() {
    let out = peps(&[]);
    assert!(!out.status.success());
    let text = stdout(&out) + &stderr(&out);
    assert!(text.contains("Usage"), "no usage text in: {text}");
}

#[test]
fn bench_emits_golden_header_and_exact_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "contract-bench",
        "--l-min",
        "4",
        "--l-max",
        "5",
        "--chi",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(&dir.path().join("bench.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "L,chi,plan,scalar,seconds,peak_elements,messages,bytes");
    assert_eq!(lines.len(), 5);
    for (line, (l, plan, log2)) in lines[1..].iter().zip([
        (4, "row", "24"),
        (4, "quadrant", "24"),
        (5, "row", "40"),
        (5, "quadrant", "40"),
    ]) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], l.to_string());
        assert_eq!(cols[2], plan);
        assert_eq!(cols[3], log2, "log2 scalar must be exact in {line}");
        assert_eq!(cols[6], "0", "sequential run transports nothing");
    }
    assert_eq!(stdout(&out).lines().count(), 5, "rows mirror to stdout");
}

#[test]
fn bench_oom_rows_mark_but_do_not_abort() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "contract-bench",
        "--l-min",
        "4",
        "--l-max",
        "6",
        "--mem-ceiling",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(&dir.path().join("bench.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6, "all six rows present despite OOM");
    let row_l5: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(&row_l5[..5], &["5", "2", "row", "OOM", "OOM"]);
    assert_eq!(row_l5[5], "1024", "predicted peak still reported");
    let quad_l6: Vec<&str> = rows[5].split(',').collect();
    assert_eq!(quad_l6[2], "quadrant");
    assert_eq!(quad_l6[3], "60", "quadrant fits and keeps running");
}

#[test]
fn bench_parallel_message_columns_follow_the_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "contract-bench",
        "--l-min",
        "4",
        "--l-max",
        "6",
        "--parallel",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(&dir.path().join("bench.csv"));
    let mut quad_msgs = Vec::new();
    let mut row_msgs = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let msgs: u64 = cols[6].parse().unwrap();
        match cols[2] {
            "quadrant" => quad_msgs.push(msgs),
            "row" => row_msgs.push(msgs),
            other => panic!("unexpected plan {other}"),
        }
    }
    assert_eq!(quad_msgs, vec![3, 3, 3], "quadrant transfers stay constant");
    assert_eq!(row_msgs, vec![3, 4, 5], "banded rows transfer one per extra band");
}

#[test]
fn dump_plan_writes_the_line_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "contract-bench",
        "--l-min",
        "4",
        "--l-max",
        "4",
        "--plan",
        "quadrant",
        "--dump-plan",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = read(&dir.path().join("plan_quadrant_L4.txt"));
    let first = text.lines().next().unwrap();
    assert!(
        first.starts_with("step 0: contract ") && first.contains(" on worker "),
        "unexpected plan line: {first}"
    );
}

#[test]
fn ite_writes_every_artifact_and_an_openable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "ite",
        "--lh",
        "2",
        "--lw",
        "2",
        "--gamma",
        "1",
        "--tau",
        "2",
        "--steps",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = read(&dir.path().join("trace.csv"));
    assert_eq!(trace.lines().next().unwrap(), "step,energy,norm,max_chi,elapsed_s");
    assert_eq!(trace.lines().count(), 1 + 5, "five evaluations at period 2");
    let report = read(&dir.path().join("report.csv"));
    assert_eq!(
        report.lines().next().unwrap(),
        "gamma,J,Lh,Lw,chi_max,epsilon,steps,norm,energy_total,energy_per_site,avg_mx,paper_Mx,avg_mz,paper_Czz,runtime_s"
    );
    assert_eq!(report.lines().count(), 2);
    let lat = peps_core::checkpoint::load(dir.path().join("final.peps")).unwrap();
    assert_eq!((lat.height(), lat.width()), (2, 2));
    let metrics: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("metrics.json"))).unwrap();
    assert!(metrics["phases"]["two_body_s"].as_f64().unwrap() >= 0.0);
    // One norm network, one per Sx and Sz site insertion, one per bond.
    assert_eq!(metrics["ledger"]["contractions"].as_u64().unwrap(), 13);
}

#[test]
fn identical_configs_repeat_bit_for_bit_and_parallel_matches() {
    let args = |out: &str, parallel: bool| {
        let mut v = vec![
            "ite".to_string(),
            "--lh".into(),
            "2".into(),
            "--lw".into(),
            "3".into(),
            "--gamma".into(),
            "0.8".into(),
            "--tau".into(),
            "2".into(),
            "--steps".into(),
            "8".into(),
            "--out".into(),
            out.to_string(),
        ];
        if parallel {
            v.push("--parallel".into());
        }
        v
    };
    let run = |parallel: bool| {
        let dir = tempfile::tempdir().unwrap();
        let argv = args(dir.path().to_str().unwrap(), parallel);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = peps(&argv);
        assert!(out.status.success(), "{}", stderr(&out));
        (
            strip_last_column(&read(&dir.path().join("trace.csv"))),
            strip_last_column(&read(&dir.path().join("report.csv"))),
        )
    };
    let (t1, r1) = run(false);
    let (t2, r2) = run(false);
    assert_eq!(t1, t2, "sequential reruns must repeat exactly");
    assert_eq!(r1, r2);
    let (t3, r3) = run(true);
    assert_eq!(t1, t3, "worker engine must not change a single digit");
    assert_eq!(r1, r3);
}

#[test]
fn config_file_problems_are_all_reported_and_flags_override()
{
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lh=2\nlw=2\nsteps=4\nchi_max=0\nmystery=1\n").unwrap();
    let out = peps(&[
        "ite",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("chi_max"), "{err}");
    assert!(err.contains("unknown config key mystery"), "{err}");

    let cfg2 = dir.path().join("clean.cfg");
    std::fs::write(&cfg2, "lh=2\nlw=2\nsteps=4\nchi_max=0\n").unwrap();
    let out = peps(&[
        "ite",
        "--config",
        cfg2.to_str().unwrap(),
        "--chi-max",
        "2",
        "--out",
        dir.path().join("b").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read(&dir.path().join("b/report.csv"));
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "2", "flag overrides the file's chi_max");
    assert_eq!(row[6], "4", "steps still come from the file");
}

#[test]
fn ed_prints_row_plus_ground_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "ed",
        "--lh",
        "2",
        "--lw",
        "2",
        "--j",
        "1",
        "--gamma",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("gamma,J,"));
    let last = lines[2].strip_prefix("ground_energy,").unwrap();
    let e: f64 = last.parse().unwrap();
    assert!((e - -5.226251859505504).abs() < 1e-8, "{e}");
    assert!(dir.path().join("report.csv").exists());
    let metrics: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("metrics.json"))).unwrap();
    assert!(metrics["residual"].as_f64().unwrap() <= 1e-9);
    let out = peps(&["ed", "--lh", "4", "--lw", "4"]);
    assert_eq!(out.status.code(), Some(2), "16 sites exceed the dense cap");
}

#[test]
fn sweep_rows_stay_in_gamma_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = peps(&[
        "sweep",
        "--lh",
        "2",
        "--lw",
        "2",
        "--gamma-min",
        "0",
        "--gamma-max",
        "1",
        "--gamma-step",
        "0.5",
        "--tau",
        "1",
        "--steps",
        "6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = read(&dir.path().join("sweep.csv"));
    let gammas: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(gammas, vec![0.0, 0.5, 1.0]);
    let metrics: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("metrics.json"))).unwrap();
    assert_eq!(metrics["points"].as_array().unwrap().len(), 3);
    assert_eq!(metrics["failures"].as_array().unwrap().len(), 0);
}
