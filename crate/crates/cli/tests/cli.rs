use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lossbalance"));
    cmd.env_remove("LOSSBALANCE_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture(dir: &Path, kind: &str, n: &str) -> std::path::PathBuf {
    let csv = dir.join(format!("{kind}.csv"));
    let out = run(&["generate", "--kind", kind, "--n", n, "--seed", "1", "--out", s(&csv)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(csv.with_extension("schema").is_file());
    csv
}

/// `(algo, split, loss_g0, loss_g1, gap)` for every row.
fn rows(path: &Path) -> Vec<(String, String, f64, f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("algo,gamma,seed,split,loss,loss_g0,loss_g1,gap,runtime_ms")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 9);
            (
                f[0].to_string(),
                f[3].to_string(),
                f[5].parse().unwrap(),
                f[6].parse().unwrap(),
                f[7].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--algo",
        "alg2",
        "--gamma",
        "0",
        "--loss",
        "mse",
        "--data",
        "/nonexistent/x.csv",
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dataset not found"), "{}", stderr(&out));
}

#[test]
fn bad_flag_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "regression", "200");
    let o = dir.path().join("o.csv");
    for args in [
        vec!["train", "--algo", "nope", "--gamma", "0", "--loss", "mse"],
        vec!["train", "--algo", "alg2", "--gamma", "-1", "--loss", "mse"],
        vec!["train", "--algo", "alg2", "--gamma", "0", "--loss", "hinge"],
    ] {
        let mut a = args.clone();
        a.extend(["--data", s(&csv), "--out", s(&o)]);
        let out = run(&a);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn schema_problems_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "regression", "200");
    let bad = dir.path().join("bad.schema");
    std::fs::write(&bad, "target = nope\ngroup = group\ngroup_positive = 1\n").unwrap();
    let out = run(&[
        "train",
        "--algo",
        "erm",
        "--gamma",
        "0",
        "--loss",
        "mse",
        "--data",
        s(&csv),
        "--schema",
        s(&bad),
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let results = dir.path().join("r.csv");
    std::fs::write(&results, "algo,gamma,seed\nalg2,0.1,0\n").unwrap();
    let out = run(&["report", s(&results), "--out", s(&dir.path().join("rep"))]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn assumption_violation_exits_4() {
    // same line y = x in both groups, but only group 0 is noisy: group 0 has the
    // larger loss even at its own optimum
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("v.csv");
    let mut text = String::from("x,group,target\n");
    for i in 0..200 {
        let x = (i % 20) as f64 / 10.0 - 1.0;
        let noise = if i % 2 == 0 { 1.0 } else { -1.0 };
        let (g, y) = if i % 4 < 2 { (0, x + noise) } else { (1, x) };
        text.push_str(&format!("{x},{g},{y}\n"));
    }
    std::fs::write(&csv, text).unwrap();
    std::fs::write(
        csv.with_extension("schema"),
        "target = target\ngroup = group\ngroup_positive = 1\nnumeric = x\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--algo",
        "alg2",
        "--gamma",
        "0",
        "--loss",
        "mse",
        "--seeds",
        "0",
        "--data",
        s(&csv),
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("assumption"), "{}", stderr(&out));
}

#[test]
fn alg2_equalizes_training_losses() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "regression", "1000");
    let out_csv = dir.path().join("o.csv");
    let out = run(&[
        "train",
        "--algo",
        "alg2",
        "--gamma",
        "0",
        "--loss",
        "mse",
        "--epsilon",
        "1e-6",
        "--seeds",
        "0,1",
        "--data",
        s(&csv),
        "--out",
        s(&out_csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rs = rows(&out_csv);
    assert_eq!(rs.len(), 4);
    for (_, split, l0, l1, gap) in rs.iter().filter(|r| r.1 == "train") {
        assert_eq!(split, "train");
        assert!((gap - (l0 - l1).abs()).abs() < 1e-12);
        assert!(*gap <= 1e-3, "train gap {gap}");
    }
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "classification", "500");
    let mut outputs = Vec::new();
    for (k, threads) in [None, Some("1"), Some("2"), None].into_iter().enumerate() {
        let o = dir.path().join(format!("o{k}.csv"));
        let mut cmd = bin();
        cmd.args([
            "sweep",
            "--algo",
            "erm,alg2,alg3,penalty,linre,fairbatch",
            "--gammas",
            "0.05,0.1",
            "--loss",
            "bce",
            "--seeds",
            "0,1",
            "--data",
            s(&csv),
            "--out",
            s(&o),
        ]);
        if let Some(t) = threads {
            cmd.env("LOSSBALANCE_THREADS", t);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(std::fs::read(&o).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(rows(&dir.path().join("o0.csv")).len(), 6 * 2 * 2 * 2);
}

#[test]
fn invalid_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "regression", "200");
    let out = bin()
        .args([
            "train",
            "--algo",
            "erm",
            "--gamma",
            "0",
            "--loss",
            "mse",
            "--data",
            s(&csv),
            "--out",
            s(&dir.path().join("o.csv")),
        ])
        .env("LOSSBALANCE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("LOSSBALANCE_THREADS"));
}

#[test]
fn report_dedupes_and_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "regression", "400");
    let o = dir.path().join("o.csv");
    let out = run(&[
        "sweep",
        "--algo",
        "alg2,alg3",
        "--gammas",
        "0.05,0.1,0.2",
        "--loss",
        "mse",
        "--seeds",
        "0,1",
        "--data",
        s(&csv),
        "--out",
        s(&o),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = dir.path().join("rep");
    // the same file twice: every row is a duplicate of one already seen
    let out = run(&["report", s(&o), s(&o), "--out", s(&rep)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("dropped 24 duplicate"), "{}", stderr(&out));
    for algo in ["alg2", "alg3"] {
        let curve = std::fs::read_to_string(rep.join(format!("curve_{algo}.csv"))).unwrap();
        let lines: Vec<&str> = curve.lines().collect();
        assert_eq!(lines[0], "gamma,gap,gap_std,loss,loss_std,seeds");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.ends_with(",2")));
    }
}

#[test]
fn feature_map_round_trip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture(dir.path(), "classification", "300");
    let map = dir.path().join("m.map");
    let out = run(&[
        "init-map",
        "--units",
        "8",
        "--seed",
        "2",
        "--data",
        s(&csv),
        "--out",
        s(&map),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let o = dir.path().join("o.csv");
    let out = run(&[
        "train",
        "--algo",
        "erm",
        "--gamma",
        "0",
        "--loss",
        "bce",
        "--seeds",
        "0",
        "--feature-map",
        s(&map),
        "--data",
        s(&csv),
        "--out",
        s(&o),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(rows(&o).len(), 2);
    let out = run(&[
        "train",
        "--algo",
        "erm",
        "--gamma",
        "0",
        "--loss",
        "bce",
        "--feature-map",
        "/nonexistent.map",
        "--data",
        s(&csv),
        "--out",
        s(&o),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
