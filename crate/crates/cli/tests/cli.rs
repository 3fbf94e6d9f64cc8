use std::path::Path;
use std::process::{Command, Output};

fn mtshrink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtshrink"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mtshrink(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn generate_is_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&[
            "--seed",
            "4",
            "generate",
            "--toy",
            "b",
            "--b",
            "6",
            "--n",
            "12",
            "--out",
            p.to_str().unwrap(),
        ]);
    }
    assert_eq!(read(&a), read(&b));
    let text = read(&a);
    assert!(text.starts_with("bag_id,f0,f1\n"));
    assert_eq!(text.lines().count(), 1 + 6 * 12);
    let other = ok(&[
        "--seed", "5", "generate", "--toy", "b", "--b", "6", "--n", "12",
    ]);
    assert_ne!(other, text);
}

#[test]
fn gaussian_generation_writes_means() {
    let dir = tempfile::tempdir().unwrap();
    let means = dir.path().join("means.csv");
    let bags = ok(&[
        "generate",
        "--model",
        "sparse",
        "--b",
        "5",
        "--d",
        "3",
        "--means-out",
        means.to_str().unwrap(),
    ]);
    assert_eq!(bags.lines().count(), 6);
    assert!(bags.lines().nth(1).unwrap().starts_with("task0,"));
    let m = read(&means);
    assert_eq!(m.lines().next().unwrap(), "bag_id,f0,f1,f2");
    assert_eq!(m.lines().count(), 6);
}

#[test]
fn test_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let bags = dir.path().join("bags.csv");
    ok(&[
        "generate",
        "--toy",
        "d",
        "--b",
        "10",
        "--n",
        "15",
        "--out",
        bags.to_str().unwrap(),
    ]);
    let graph = ok(&["test", "--input", bags.to_str().unwrap(), "--zeta", "2"]);
    let rows: Vec<&str> = graph.lines().collect();
    assert_eq!(rows.len(), 11);
    // Every bag is its own neighbour.
    for (i, row) in rows[1..].iter().enumerate() {
        assert_eq!(row.split(',').nth(i + 1), Some("1"), "{row}");
    }
    let weights = dir.path().join("w.csv");
    ok(&[
        "estimate",
        "--input",
        bags.to_str().unwrap(),
        "--method",
        "stb-weight",
        "--gamma-one-sample",
        "--tau",
        "1",
        "--zeta",
        "2",
        "--weights-out",
        weights.to_str().unwrap(),
    ]);
    for line in read(&weights).lines().skip(1) {
        let sum: f64 = line
            .split(',')
            .skip(1)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }
    let means = ok(&[
        "estimate",
        "--input",
        bags.to_str().unwrap(),
        "--method",
        "stb0",
        "--zeta",
        "2",
        "--kernel",
        "linear",
    ]);
    assert_eq!(means.lines().count(), 11);
}

#[test]
fn tuned_parameters_feed_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let tuned = dir.path().join("tuned.csv");
    // A config file keeps the run small.
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seed = 3\ntrials_tune = 2\ntrials_eval = 3\nmethods = [\"stb0\", \"pp_james_stein\"]\n\n[source]\nkind = \"gaussian\"\nmodel = \"unif\"\nb = 200\nd = 20\n").unwrap();
    ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "tune",
        "--out",
        tuned.to_str().unwrap(),
    ]);
    let t = read(&tuned);
    assert!(t.starts_with("method,param_json,tune_loss\n"));
    assert!(t.contains("STB-0,"));
    let report = ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "bench",
        "--tuned",
        tuned.to_str().unwrap(),
    ]);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "method,param_json,mean_loss,stderr,pct_decrease");
    assert!(lines[1].starts_with("NE,"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn verify_bounds_reports_every_check() {
    let out = ok(&[
        "verify-bounds",
        "--kinds",
        "gauss_dot,ustat_upper",
        "--t",
        "1,2",
        "--reps",
        "2000",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "kind,t,reps,bound,violations,rate,pass");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "bag_id,f0\na,1.0\nb,oops\n").unwrap();
    let out = mtshrink(&["test", "--input", bad.to_str().unwrap(), "--zeta", "1"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!mtshrink(&["generate"]).status.success());
}
