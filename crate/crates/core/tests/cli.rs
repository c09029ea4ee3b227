use std::path::Path;
use std::process::{Command, Output};

use shapprop::AttributionResult;

fn shapprop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapprop"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = shapprop(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_result(path: &Path) -> AttributionResult {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapprop(dir.path(), &["attribute", "--method", "dasp"]);
    assert_eq!(out.status.code(), Some(2));
    let out = shapprop(
        dir.path(),
        &[
            "attribute",
            "--model",
            "m.json",
            "--method",
            "bogus",
            "--input-seed",
            "1",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_status_sixty_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = shapprop(
        dir.path(),
        &[
            "attribute",
            "--model",
            "absent.json",
            "--input-seed",
            "1",
            "--method",
            "occlusion",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(66));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn attribute_reads_csv_and_json_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-model",
            "--arch",
            "4-6-relu-2",
            "--seed",
            "3",
            "--out",
            "m.json",
        ],
    );
    std::fs::write(p.join("x.csv"), "value\n0.5\n-1\n2\n0.25\n").unwrap();
    std::fs::write(p.join("x.json"), "[0.5, -1, 2, 0.25]").unwrap();
    for input in ["x.csv", "x.json"] {
        let out = format!("{input}.out");
        ok(
            p,
            &[
                "attribute",
                "--model",
                "m.json",
                "--input",
                input,
                "--class",
                "1",
                "--method",
                "exact",
                "--out",
                &out,
            ],
        );
        let r = read_result(&p.join(&out));
        assert_eq!(r.class_index, 1);
        assert_eq!(r.eval_count, 16);
        assert_eq!(r.values.len(), 4);
    }
    assert_eq!(
        read_result(&p.join("x.csv.out")),
        read_result(&p.join("x.json.out"))
    );
    ok(
        p,
        &[
            "oracle", "--model", "m.json", "--input", "x.csv", "--class", "1", "--out", "o.json",
        ],
    );
    assert_eq!(
        read_result(&p.join("o.json")).values,
        read_result(&p.join("x.csv.out")).values
    );
}

#[test]
fn attribute_output_records_method_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-model",
            "--arch",
            "6-8-relu-1",
            "--seed",
            "1",
            "--out",
            "m.json",
        ],
    );
    ok(
        p,
        &[
            "attribute",
            "--model",
            "m.json",
            "--input-seed",
            "2",
            "--method",
            "dasp",
            "--K",
            "3",
            "--paper-verbatim-scaling",
            "--out",
            "d.json",
        ],
    );
    let r = read_result(&p.join("d.json"));
    assert_eq!(r.eval_count, 36);
    assert_eq!(r.params["K"], 3);
    assert_eq!(r.params["scaling"], "paper-verbatim");
    let text = std::fs::read_to_string(p.join("d.json")).unwrap();
    for key in [
        "\"method\"",
        "\"class\"",
        "\"values\"",
        "\"eval_count\"",
        "\"seed\"",
        "\"params\"",
    ] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn omitted_seed_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-model",
            "--arch",
            "5-4-relu-1",
            "--seed",
            "1",
            "--out",
            "m.json",
        ],
    );
    let out = ok(
        p,
        &[
            "attribute",
            "--model",
            "m.json",
            "--input-seed",
            "2",
            "--method",
            "sampling",
            "--permutations",
            "20",
            "--out",
            "s.json",
        ],
    );
    let stderr = String::from_utf8(out.stderr).unwrap();
    let seed: u64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed printed")
        .parse()
        .unwrap();
    let first = read_result(&p.join("s.json"));
    assert_eq!(first.seed, Some(seed));
    let seed = seed.to_string();
    ok(
        p,
        &[
            "attribute",
            "--model",
            "m.json",
            "--input-seed",
            "2",
            "--method",
            "sampling",
            "--permutations",
            "20",
            "--seed",
            &seed,
            "--out",
            "t.json",
        ],
    );
    assert_eq!(read_result(&p.join("t.json")), first);
}

#[test]
fn oracle_refuses_large_models() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "gen-model",
            "--arch",
            "26-2",
            "--seed",
            "1",
            "--out",
            "big.json",
        ],
    );
    let out = shapprop(
        p,
        &[
            "oracle",
            "--model",
            "big.json",
            "--input-seed",
            "1",
            "--out",
            "o.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("2^26"), "{stderr}");
    assert!(!p.join("o.json").exists());
}

#[test]
fn bad_model_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("m.json"),
        r#"{"input_shape": [2], "layers": [{"kind": "softmax"}]}"#,
    )
    .unwrap();
    let out = shapprop(
        p,
        &[
            "attribute",
            "--model",
            "m.json",
            "--input-seed",
            "1",
            "--method",
            "occlusion",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!p.join("r.json").exists());
}

#[test]
fn compare_writes_a_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("c.json"),
        r#"{"models": {"generate": {"arch": "6-5-relu-1", "count": 2}}, "samples": 2,
            "methods": [{"method": "occlusion"}, {"method": "dasp", "K": [1, 6]}]}"#,
    )
    .unwrap();
    ok(
        p,
        &[
            "compare", "--config", "c.json", "--seed", "9", "--out", "r.csv",
        ],
    );
    let text = std::fs::read_to_string(p.join("r.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(shapprop::harness::CSV_HEADER));
    assert_eq!(lines.count(), 2 * 2 * 3);
}

#[test]
fn moments_check_reports_each_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "moments-check",
            "--samples",
            "1000000",
            "--cases",
            "2",
            "--seed",
            "4",
        ],
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("[PASS]")).count(),
        5,
        "{stdout}"
    );
}
