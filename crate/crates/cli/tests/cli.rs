use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use riesz_lab::{GroupSpec, LatticeFunction};
use serde_json::Value;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz-lab"))
        .args(args)
        .current_dir(cwd)
        .env("RIESZ_LAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_defaults_are_filled() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["constants", "--p", "2", "--out", "c"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&tmp.path().join("c"));
    assert_eq!(s["header"]["command"], "constants");
    assert_eq!(s["header"]["seed"], 0);
    assert_eq!(s["header"]["config"]["format"], "csv");
    let csv = fs::read_to_string(tmp.path().join("c/constants.csv")).unwrap();
    assert!(csv.starts_with("p,q,name,value\n2.0,,sharp_lp,1.0\n"));
}

#[test]
fn bad_exponent_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["constants", "--p", "0.5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("p:") && msg.contains("p > 1"), "{msg}");
    assert_eq!(msg.lines().count(), 1);
}

#[test]
fn flag_overrides_config_file_and_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.toml"), "p = [3.0]\nseed = 5\n").unwrap();
    let o = run(
        &[
            "constants",
            "--config",
            "run.toml",
            "--p",
            "1.5",
            "--out",
            "o",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&tmp.path().join("o"));
    assert_eq!(s["header"]["config"]["p"], serde_json::json!([1.5]));
    assert_eq!(s["header"]["seed"], 5);

    fs::write(
        tmp.path().join("run.json"),
        r#"{"p": [4.0], "format": "json"}"#,
    )
    .unwrap();
    let o = run(
        &["constants", "--config", "run.json", "--out", "j"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("j/constants.json").is_file());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "pp = [2.0]\n").unwrap();
    let o = run(&["constants", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pp"));
    fs::write(tmp.path().join("wrong.toml"), "p = \"two\"\n").unwrap();
    assert_eq!(
        run(&["constants", "--config", "wrong.toml"], tmp.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["mc", "--f", "absent.bin"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mc_rejects_non_mean_zero_input_before_simulating() {
    let tmp = tempfile::tempdir().unwrap();
    let g = GroupSpec::discrete(&[4, 4]).unwrap();
    let f = LatticeFunction::point_indicator(&g, &[0, 0]);
    let mut bytes = Vec::new();
    f.write_binary(&mut bytes).unwrap();
    fs::write(tmp.path().join("f.bin"), bytes).unwrap();
    let o = run(
        &["mc", "--f", "f.bin", "--paths", "1000000000", "--out", "m"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("f"));
    assert!(!tmp.path().join("m").exists());
}

#[test]
fn mc_with_file_input_passes_gates() {
    let tmp = tempfile::tempdir().unwrap();
    let g = GroupSpec::discrete(&[4, 3]).unwrap();
    let f = LatticeFunction::random_real(&g, 2).mean_zero_project();
    let mut bytes = Vec::new();
    f.write_binary(&mut bytes).unwrap();
    fs::write(tmp.path().join("f.bin"), bytes).unwrap();
    let o = run(
        &[
            "mc", "--f", "f.bin", "--alpha", "1,-0.5|", "--paths", "20000", "--T", "3", "--trace",
            "3", "--out", "m",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&tmp.path().join("m"));
    assert!(s["gates"]
        .as_array()
        .unwrap()
        .iter()
        .all(|g| g["passed"] == true));
    let paths = fs::read_to_string(tmp.path().join("m/paths.csv")).unwrap();
    assert!(paths
        .lines()
        .skip(1)
        .all(|l| l.starts_with('0') || l.starts_with('1') || l.starts_with('2')));
}

#[test]
fn probe_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "probe", "--mode", "lp", "--group", "6,5", "--p", "1.5,3", "--seed", "7", "--iters",
            "20", "--out", out,
        ]
    };
    assert_eq!(run(&args("a"), tmp.path()).status.code(), Some(0));
    assert_eq!(run(&args("b"), tmp.path()).status.code(), Some(0));
    let a = fs::read(tmp.path().join("a/trace.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/trace.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn probe_modes_run() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in [
        vec!["--mode", "weak"],
        vec!["--mode", "log", "--K", "1.1,5"],
        vec!["--mode", "exp"],
        vec!["--mode", "mixed", "--p", "1.5", "--q", "3"],
    ] {
        let mut args = vec!["probe", "--group", "4;8", "--alpha", "1|0.5-0.5i"];
        args.extend(mode.iter().copied());
        let o = run(&args, tmp.path());
        assert_eq!(o.status.code(), Some(0), "{mode:?}: {}", stderr(&o));
    }
    let o = run(&["probe", "--group", "4;8", "--alpha", "1,2|0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
}

#[test]
fn zigzag_search_then_certify_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "zigzag", "--search", "--p", "1.5", "--depth", "4", "--beam", "2", "--out", "z",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&tmp.path().join("z"));
    let bound = s["summary"]["best"]["bound"].as_f64().unwrap();
    assert!(bound > 0.0 && bound <= s["summary"]["best"]["ceiling"].as_f64().unwrap());
    let o = run(
        &[
            "zigzag",
            "--tree",
            "z/tree.json",
            "--p",
            "1.5",
            "--out",
            "c",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        summary(&tmp.path().join("c"))["summary"]["certificate"]["bound"].as_f64(),
        Some(bound)
    );
    // A trivial tree certifies nothing, so the gate fails.
    fs::write(tmp.path().join("t.json"), r#"{"pos":[0.0,0.0]}"#).unwrap();
    let o = run(
        &["zigzag", "--tree", "t.json", "--epsilon", "0"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("weak_type_certificate"));
    assert_eq!(run(&["zigzag"], tmp.path()).status.code(), Some(2));
}

#[test]
fn fd_studies_emit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "fd",
            "--study",
            "consistency",
            "--f",
            "cos:1,2",
            "--h",
            "0.2,0.1,0.05",
            "--box",
            "2",
            "--out",
            "c",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(
        &[
            "fd", "--study", "ratio", "--p", "2,4", "--h", "0.4,0.2", "--out", "r",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("r/ratio.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("p,h,ratio,gap,reference"));
    assert_eq!(table.lines().count(), 5);
    let o = run(
        &[
            "fd", "--study", "weaktype", "--h", "0.2", "--box", "3", "--out", "w",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        run(&["fd", "--f", "bessel:1"], tmp.path()).status.code(),
        Some(2)
    );
}

#[test]
fn report_merges_runs() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["constants", "--out", "runs/a"], tmp.path())
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(&["constants", "--p", "3", "--out", "runs/b"], tmp.path())
            .status
            .code(),
        Some(0)
    );
    let o = run(
        &["report", "--input", "runs", "--out", "merged"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("merged/report.json")).unwrap())
            .unwrap();
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["run"], "a");
    assert_eq!(
        runs[1]["record"]["header"]["config"]["p"],
        serde_json::json!([3.0])
    );
}

#[test]
fn zero_threads_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_riesz-lab"))
        .args(["constants"])
        .current_dir(tmp.path())
        .env("RIESZ_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
