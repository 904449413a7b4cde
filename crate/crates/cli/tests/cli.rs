use std::path::Path;
use std::process::{Command, Output};

fn hobz(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hobz"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hobz")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hobz(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

const SHORT: [&str; 6] = ["--trees", "10", "--iterations", "200", "--burn-in", "100"];

fn with_short<'a>(base: &[&'a str]) -> Vec<&'a str> {
    base.iter().copied().chain(SHORT).collect()
}

#[test]
fn simulate_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "null", "--seed", "7", "--out", "a/d.csv"]);
    ok(d, &["simulate", "--preset", "null", "--seed", "7", "--out", "b/d.csv"]);
    for f in ["d.csv", "d.csv.truth.csv", "d.csv.config.json"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
    let data = read(d, "a/d.csv");
    assert!(data.starts_with("# hobz v"));
    assert!(data.lines().nth(1).unwrap().starts_with("x1,x2,x3,y,arm"));
    assert_eq!(data.lines().filter(|l| !l.starts_with('#')).count(), 201);
}

#[test]
fn simulate_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["simulate", "--list"]);
    assert!(out.lines().any(|l| l.starts_with("table-s1")));
    assert!(out.lines().any(|l| l.starts_with("grid-n500-p15")));
}

#[test]
fn fit_then_predict_on_linear_preset_tracks_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "table-s1", "--seed", "3", "--out", "train.csv"]);
    ok(d, &["simulate", "--preset", "table-s1", "--seed", "4", "--out", "test.csv"]);
    ok(
        d,
        &[
            "fit", "--data", "train.csv", "--test-data", "test.csv", "--trees", "100", "--iterations", "1500",
            "--burn-in", "500", "--out", "fit.draws",
        ],
    );
    let summary = json(d, "fit.draws.summary.json");
    assert_eq!(summary["draws"], 1000);
    assert!(summary["kappa"]["mean"].as_f64().unwrap() > 0.0);

    // Score against the generator's E[Y | x] rather than the noisy response.
    ok(
        d,
        &[
            "predict", "--draws", "fit.draws", "--out", "pred.csv", "--observed", "test.csv.truth.csv", "--response",
            "expected",
        ],
    );
    let metrics = json(d, "pred.csv.metrics.json");
    let mae = metrics["mae"].as_f64().unwrap();
    assert!(mae <= 0.12, "held-out MAE against truth {mae}");
    let pred = read(d, "pred.csv");
    let mut rows = pred.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        rows.next().unwrap(),
        "id,expected_outcome,expected_partial_outcome,interior_mean"
    );
    assert_eq!(rows.count(), 100);
}

#[test]
fn predict_writes_samples_and_pite_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "null", "--seed", "2", "--n", "80", "--out", "d.csv"]);
    for (arm, out) in [("T", "t.draws"), ("C", "c.draws")] {
        ok(
            d,
            &with_short(&[
                "fit", "--data", "d.csv", "--arm-column", "arm", "--arm", arm, "--test-data", "d.csv", "--out", out,
            ]),
        );
    }
    ok(d, &["predict", "--draws", "t.draws", "--out", "p.csv", "--samples", "s.csv"]);
    let samples = read(d, "s.csv");
    let body: Vec<&str> = samples.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "draw,id,category,value");
    assert_eq!(body.len(), 1 + 100 * 80);

    let stdout = ok(d, &["pite", "--treated", "t.draws", "--control", "c.draws", "--kind", "partial", "--out", "pite.csv"]);
    assert!(stdout.contains("ate="));
    let pite = read(d, "pite.csv");
    assert!(pite.lines().any(|l| l.starts_with('#') && l.contains("ate=")));
    let rows: Vec<&str> = pite.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "id,point,lower,upper,metric_kind");
    assert_eq!(rows.len(), 81);
    assert!(rows[1].ends_with("partial_expectation"));
    let plot = read(d, "pite.csv.plot.csv");
    let points: Vec<f64> = plot
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(points.len(), 80);
    assert!(points.windows(2).all(|w| w[0] <= w[1]), "plot data sorted by point");
}

#[test]
fn permtest_reports_p_value_and_all_permutations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--preset", "null", "--seed", "5", "--out", "d.csv"]);
    let args = ["permtest", "--data", "d.csv", "--n-perm", "50", "--trees", "5", "--iterations", "40", "--burn-in", "20", "--out", "perm.json"];
    let stdout = ok(d, &args);
    assert!(stdout.contains("p_value="));
    let v = json(d, "perm.json");
    let p = v["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(v["permuted_pite_sds"].as_array().unwrap().len(), 50);
    assert!(v["provenance"]["config_hash"].is_string());
}

#[test]
fn benchmark_table_has_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &with_short(&["benchmark", "--scenarios", "table-s1,grid-n250-p5", "--replications", "2", "--out", "b.csv"]),
    );
    let table = read(d, "b.csv");
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "model,scenario,n,p,replications,failed,mae,rmse,adj_r2");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("hobz-bart,table-s1,100,"));
    assert!(rows[2].starts_with("linear-hobz,table-s1,100,"));
    let runs = read(d, "b.csv.runs.csv");
    assert_eq!(runs.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2 * 2);
}

#[test]
fn failures_exit_with_coded_single_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [(&[&str], i32, &str); 4] = [
        (&["fit", "--out", "x"], 2, "usage"),
        (&["fit", "--data", "missing.csv", "--out", "x"], 4, "io"),
        (&["predict", "--draws", "bad.draws", "--out", "x"], 4, "format"),
        (&["permtest", "--data", "one.csv", "--out", "x"], 2, "validation"),
    ];
    std::fs::write(d.join("bad.draws"), b"not a draw file").unwrap();
    std::fs::write(d.join("one.csv"), "x1,y,arm\n0.1,0.5,T\n0.2,0.3,T\n0.3,1,T\n").unwrap();
    for (args, code, kind) in cases {
        let out = hobz(d, args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("error code={code} kind={kind}:")), "{err}");
    }
    let out = hobz(d, &["simulate", "--list"]);
    assert!(out.status.success());
}

#[test]
fn out_of_range_response_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("d.csv"), "x1,y\n0.1,0.5\n0.2,1.0000001\n").unwrap();
    let out = hobz(d, &["fit", "--data", "d.csv", "--out", "f.draws"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("row 2"), "{err}");
}
