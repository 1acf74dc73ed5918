use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn akcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_akcs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The single-line JSON error record on stderr.
fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    serde_json::from_str(lines[0]).expect("stderr is JSON")
}

fn manifest(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(akcs(&["--help"]).status.code(), Some(0));
    let out = akcs(&["sense", "--synthetic", "8,8,2"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["status"], "error");
    assert_eq!(rec["kind"], "usage");
    assert!(rec["message"].as_str().unwrap().contains("--scheme"), "{rec}");

    let out = akcs(&["sense", "--synthetic", "8,8", "--scheme", "kcs", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = akcs(&[
        "sense",
        "--synthetic",
        "8,8,2",
        "--scheme",
        "kcs",
        "--mn",
        "9,2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["command"], "sense");
}

#[test]
fn missing_and_malformed_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = akcs(&[
        "sense",
        "--image",
        "/definitely/missing.pgm",
        "--scheme",
        "kcs",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("missing.pgm"));

    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P5\n4 4\n65535\n").unwrap();
    let out = akcs(&["sense", "--image", s(&bad), "--scheme", "kcs", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        error_record(&out)["message"].as_str().unwrap().contains("byte 7"),
        "{:?}",
        out
    );
}

#[test]
fn identity_operator_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let sense = dir.path().join("sense");
    let out = akcs(&[
        "sense",
        "--synthetic",
        "16,16,4",
        "--scheme",
        "identity",
        "--seed",
        "2",
        "--out",
        s(&sense),
    ]);
    assert!(out.status.success(), "{out:?}");
    let recon = dir.path().join("recon.pgm");
    let out = akcs(&[
        "reconstruct",
        "--measurement",
        s(&sense.join("measurement.bin")),
        "--operator",
        s(&sense.join("operator.json")),
        "--denoiser",
        "identity",
        "--rho",
        "1",
        "--iters",
        "1",
        "--reference",
        s(&sense.join("reference.pgm")),
        "--out",
        s(&recon),
    ]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(
        std::fs::read(&recon).unwrap(),
        std::fs::read(sense.join("reference.pgm")).unwrap()
    );
    let m = manifest(&dir.path().join("recon.manifest.json"));
    assert_eq!(m["results"]["psnr_db"], "inf");
    assert_eq!(m["dims"], serde_json::json!([16, 16, 16, 16]));
}

#[test]
fn reconstruct_rejects_a_mismatched_operator() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (d, mn) in [(&a, "4,4"), (&b, "4,3")] {
        let out = akcs(&[
            "sense",
            "--synthetic",
            "8,8,2",
            "--scheme",
            "akcs",
            "--mn",
            mn,
            "--out",
            s(d),
        ]);
        assert!(out.status.success());
    }
    let out = akcs(&[
        "reconstruct",
        "--measurement",
        s(&a.join("measurement.bin")),
        "--operator",
        s(&b.join("operator.json")),
        "--out",
        s(&dir.path().join("r.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_record(&out)["message"]
        .as_str()
        .unwrap()
        .contains("shape mismatch"));
}

#[test]
fn divergence_exits_with_numeric_code_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let sense = dir.path().join("sense");
    assert!(akcs(&[
        "sense",
        "--synthetic",
        "16,16,4",
        "--scheme",
        "kcs",
        "--sr",
        "0.5",
        "--out",
        s(&sense)
    ])
    .status
    .success());
    let trace = dir.path().join("trace.csv");
    let out = akcs(&[
        "reconstruct",
        "--measurement",
        s(&sense.join("measurement.bin")),
        "--operator",
        s(&sense.join("operator.json")),
        "--rho",
        "5",
        "--iters",
        "200",
        "--trace",
        s(&trace),
        "--out",
        s(&dir.path().join("r.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["kind"], "numeric");
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("iteration,objective,data_fidelity,relative_change"));
    assert!(!dir.path().join("r.pgm").exists());
}

#[test]
fn blocks_check_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("blocks.json");
    let out = akcs(&["blocks-check", "--dims", "8,8,4,2,2", "--out", s(&out_file)]);
    assert!(out.status.success(), "{out:?}");
    let report = manifest(&out_file);
    assert_eq!(report["passed"], true);
    assert_eq!(report["dims"]["C"], 4);
    assert_eq!(report["checks"].as_array().unwrap().len(), 7);
}

#[test]
fn coherence_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("coh.csv");
    let out = akcs(&["coherence", "--grid", "4,4,8,8", "--trials", "3", "--out", s(&out_file)]);
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(&out_file).unwrap();
    assert!(csv.lines().count() > 3);
    let m = manifest(&dir.path().join("coh.manifest.json"));
    assert_eq!(m["dims"], serde_json::json!([8, 8, 4, 4]));
    assert_eq!(m["results"]["summaries"][0]["trials"], 3);
}

#[test]
fn bench_is_deterministic_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = akcs(&[
            "bench",
            "--synthetic",
            "3",
            "--size",
            "12",
            "--sparsity",
            "3",
            "--srs",
            "0.25,0.5",
            "--seeds",
            "2",
            "--iters",
            "20",
            "--out",
            s(&path),
        ]);
        assert!(out.status.success(), "{out:?}");
        outputs.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = &outputs[0];
    let rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3 * 2 * 2 * 2);
    // Paired design: KCS and AKCS rows of a cell share the operator seed.
    let seed_of = |l: &str| l.split(',').nth(9).unwrap().to_string();
    assert_eq!(seed_of(rows[0]), seed_of(rows[2]));
    assert!(csv.lines().any(|l| l.starts_with("# mean,*,0.25,akcs,6,")));
}

#[test]
fn bench_reads_a_directory_of_pgms() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    for (i, name) in ["b.pgm", "a.pgm"].iter().enumerate() {
        let pixels: Vec<u8> = (0..64).map(|v| (v * (i + 3) % 251) as u8).collect();
        let mut bytes = b"P5\n8 8\n255\n".to_vec();
        bytes.extend(pixels);
        std::fs::write(images.join(name), bytes).unwrap();
    }
    std::fs::write(images.join("notes.txt"), "ignored").unwrap();
    let path = dir.path().join("bench.csv");
    let out = akcs(&[
        "bench",
        "--images",
        s(&images),
        "--srs",
        "0.5",
        "--iters",
        "10",
        "--out",
        s(&path),
    ]);
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(&path).unwrap();
    let names: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names, ["a", "a", "b", "b"]);
}

#[test]
fn replay_reproduces_and_relocates() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.json");
    assert!(
        akcs(&["blocks-check", "--seed", "5", "--dims", "8,8,4,2,2", "--out", s(&first)])
            .status
            .success()
    );
    let second = dir.path().join("sub");
    std::fs::create_dir(&second).unwrap();
    let replayed = second.join("again.json");
    let out = akcs(&[
        "replay",
        "--manifest",
        s(&dir.path().join("first.manifest.json")),
        "--out",
        s(&replayed),
    ]);
    assert!(out.status.success(), "{out:?}");
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&replayed).unwrap());

    let bogus = dir.path().join("bogus.json");
    std::fs::write(&bogus, "{}").unwrap();
    let out = akcs(&["replay", "--manifest", s(&bogus), "--out", s(&replayed)]);
    assert_eq!(out.status.code(), Some(2));
}
