use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hier-risk")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out-dir", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn build_costs_for_the_four_leaf_tree() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.tsv");
    fs::write(&h, "a\tp\nb\tp\nc\tq\nd\tq\np\tr\nq\tr\n").unwrap();
    assert_eq!(
        ok(&["build-costs", "--hierarchy", p(&h)]),
        "class,a,b,c,d\na,0,1,2,2\nb,1,0,2,2\nc,2,2,0,1\nd,2,2,1,0\n"
    );
    fs::write(&h, "x\tr\ny\tr\nz\tr\n").unwrap();
    assert_eq!(ok(&["build-costs", "--hierarchy", p(&h)]), "class,x,y,z\nx,0,1,1\ny,1,0,1\nz,1,1,0\n");
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("cyc.tsv");
    fs::write(&h, "a\tb\nb\tc\nc\ta\n").unwrap();
    let o = run(&["build-costs", "--hierarchy", p(&h)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle"));

    simulate(dir.path(), &["--classes", "4", "--samples", "20"]);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "#hier-risk-predictions v1\ntruth,c0,c1,c2,c3\n").unwrap();
    let pr = dir.path().join("predictions.csv");
    let o = run(&["calibrate", "--val", p(&pr), "--test", p(&empty)]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["calibrate", "--val", p(&dir.path().join("missing.csv")), "--test", p(&pr)]);
    assert_eq!(o.status.code(), Some(2));

    let hier = dir.path().join("hierarchy.tsv");
    let o = run(&["eval", "--hierarchy", p(&hier), "--predictions", p(&pr), "--k", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn argmax_truth_has_zero_top1_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "8", "--samples", "200", "--truth", "argmax"]);
    let (h, pr) = (dir.path().join("hierarchy.tsv"), dir.path().join("predictions.csv"));
    let r: serde_json::Value = serde_json::from_str(&ok(&[
        "eval", "--hierarchy", p(&h), "--predictions", p(&pr), "--basis", "likelihood", "--k", "1",
    ]))
    .unwrap();
    assert_eq!(r["top1_error"], 0.0);
    assert_eq!(r["distance_at_k"]["1"], 0.0);
    assert_eq!(r["severity_over_mistakes"], serde_json::Value::Null);
}

#[test]
fn flat_tree_reports_agree_across_bases_and_shuffles() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "6", "--samples", "300", "--tree", "flat", "--seed", "3"]);
    let (h, pr) = (dir.path().join("hierarchy.tsv"), dir.path().join("predictions.csv"));
    let eval = |basis| ok(&["eval", "--hierarchy", p(&h), "--predictions", p(&pr), "--basis", basis, "--k", "1,3,6"]);
    let crm: serde_json::Value = serde_json::from_str(&eval("crm")).unwrap();
    let like: serde_json::Value = serde_json::from_str(&eval("likelihood")).unwrap();
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("basis");
        v
    };
    assert_eq!(strip(crm), strip(like));

    let s: serde_json::Value =
        serde_json::from_str(&ok(&["shuffle-eval", "--hierarchy", p(&h), "--predictions", p(&pr), "--seed", "9"]))
            .unwrap();
    assert_eq!(s["original"], s["shuffled"]);
}

#[test]
fn fast_path_and_thread_count_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "16", "--samples", "500", "--concentration", "0.3", "--tree", "random"]);
    let (h, pr) = (dir.path().join("hierarchy.tsv"), dir.path().join("predictions.csv"));
    let base = ok(&["rerank", "--hierarchy", p(&h), "--predictions", p(&pr)]);
    assert_eq!(base, ok(&["rerank", "--hierarchy", p(&h), "--predictions", p(&pr), "--theorem1-fastpath"]));
    assert_eq!(base, ok(&["rerank", "--hierarchy", p(&h), "--predictions", p(&pr), "--threads", "1"]));
    assert_eq!(base.lines().count(), 501);

    let ev = ok(&["eval", "--hierarchy", p(&h), "--predictions", p(&pr)]);
    assert_eq!(ev, ok(&["eval", "--hierarchy", p(&h), "--predictions", p(&pr), "--threads", "3"]));
}

#[test]
fn calibrating_a_calibrated_set_leaves_temperature_near_one() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "8", "--samples", "20000", "--seed", "2"]);
    let pr = dir.path().join("predictions.csv");
    let r: serde_json::Value =
        serde_json::from_str(&ok(&["calibrate", "--val", p(&pr), "--test", p(&pr)])).unwrap();
    let t = r["temperature"].as_f64().unwrap();
    assert!((t.ln()).abs() < 0.05, "{t}");
    let (pre, post) = (r["ece_pre"].as_f64().unwrap(), r["ece_post"].as_f64().unwrap());
    assert!((pre - post).abs() < 0.01, "{pre} {post}");
}

#[test]
fn empty_simulation_is_a_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "4", "--samples", "0"]);
    let text = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    assert_eq!(text, "#hier-risk-predictions v1\ntruth,c0,c1,c2,c3\n");
}

#[test]
fn out_flag_redirects_and_leaves_stdout_empty() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--classes", "4", "--samples", "10"]);
    let out = dir.path().join("costs.csv");
    let stdout = ok(&["build-costs", "--hierarchy", p(&dir.path().join("hierarchy.tsv")), "--out", p(&out)]);
    assert!(stdout.is_empty());
    assert!(fs::read_to_string(out).unwrap().starts_with("class,c0,c1,c2,c3\n"));
}
