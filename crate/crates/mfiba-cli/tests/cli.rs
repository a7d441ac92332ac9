//! End-to-end tests of the `mfiba` binary: determinism, the coding chain's
//! agreement with the in-process pipeline, and the contract that errors exit
//! nonzero with a diagnostic naming the offending path.

use std::path::Path;
use std::process::{Command, Output};

fn mfiba(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfiba"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("running the mfiba binary")
}

/// Asserts success and returns stdout.
fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed with {:?}\nstderr:\n{}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

/// Asserts failure and returns stderr.
fn fails(output: &Output) -> String {
    assert!(
        !output.status.success(),
        "command unexpectedly succeeded:\n{}",
        String::from_utf8_lossy(&output.stdout)
    );
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

/// A small synthesis geometry so corpus-wide commands stay fast in tests.
const SMALL_CONFIG: &str = r#"{
  "synth": {"n": 2, "channels": 4, "height0": 16, "width0": 16, "count": 2}
}"#;

fn write_small_config(dir: &Path) {
    std::fs::write(dir.join("config.json"), SMALL_CONFIG).unwrap();
}

#[test]
fn synth_is_deterministic_and_lists_the_files_it_wrote() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    let first = ok(&mfiba(
        dir,
        &["synth", "--config", "config.json", "--out", "a"],
    ));
    let listed: Vec<&str> = first.lines().collect();
    assert_eq!(listed, vec!["a/pyr_00000.fpyr", "a/pyr_00001.fpyr"]);
    ok(&mfiba(
        dir,
        &["synth", "--config", "config.json", "--out", "b"],
    ));
    for name in ["pyr_00000.fpyr", "pyr_00001.fpyr"] {
        assert_eq!(
            read(&dir.join("a").join(name)),
            read(&dir.join("b").join(name)),
            "rerun changed the bytes of {name}"
        );
    }
}

#[test]
fn seed_flag_overrides_the_configured_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    let out = ok(&mfiba(
        dir,
        &[
            "synth",
            "--config",
            "config.json",
            "--seed",
            "7",
            "--count",
            "1",
        ],
    ));
    assert_eq!(out.lines().next(), Some("pyramids/pyr_00007.fpyr"));
}

#[test]
fn encode_and_its_sidecar_are_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    ok(&mfiba(
        dir,
        &["synth", "--config", "config.json", "--count", "1"],
    ));
    let pyramid = "pyramids/pyr_00000.fpyr";
    ok(&mfiba(
        dir,
        &["encode", pyramid, "--phi", "5", "--out", "x.fcmb"],
    ));
    ok(&mfiba(
        dir,
        &["encode", pyramid, "--phi", "5", "--out", "y.fcmb"],
    ));
    assert_eq!(read(&dir.join("x.fcmb")), read(&dir.join("y.fcmb")));
    assert_eq!(
        read(&dir.join("x.fcmb.meta.json")),
        read(&dir.join("y.fcmb.meta.json"))
    );
}

/// The file-based chain (calibrate → encode → decode → evaluate) must report
/// exactly the rate-accuracy point the in-process ladder sweep reports for
/// the same multiplier: same model file, same prediction, same coded bits.
#[test]
fn coding_chain_reproduces_the_sweeps_rate_accuracy_point() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    let cfg = &["--config", "config.json"];

    ok(&mfiba(dir, &[&["synth"], cfg as &[&str]].concat()));
    ok(&mfiba(dir, &[&["calibrate"], cfg as &[&str]].concat()));
    ok(&mfiba(
        dir,
        &[
            &[
                "evaluate",
                "--pyramid",
                "pyramids/pyr_00000.fpyr",
                "--modes",
                "mfiba",
            ],
            cfg as &[&str],
        ]
        .concat(),
    ));

    // The same multiplier, through files this time.
    ok(&mfiba(
        dir,
        &[
            &[
                "encode",
                "pyramids/pyr_00000.fpyr",
                "--lambda",
                "0.1",
                "--out",
                "p.fcmb",
            ],
            cfg as &[&str],
        ]
        .concat(),
    ));
    ok(&mfiba(
        dir,
        &[&["decode", "p.fcmb"], cfg as &[&str]].concat(),
    ));
    let pair = ok(&mfiba(
        dir,
        &[
            &[
                "evaluate",
                "--candidate",
                "p.dec.fpyr",
                "--reference",
                "pyramids/pyr_00000.fpyr",
                "--meta",
                "p.fcmb.meta.json",
            ],
            cfg as &[&str],
        ]
        .concat(),
    ));
    let mut lines = pair.lines();
    assert_eq!(lines.next(), Some("bpp,accuracy"));
    let row = lines.next().expect("pair evaluation prints one data row");
    let mut fields = row.split(',');
    let pair_bpp: f64 = fields.next().unwrap().parse().unwrap();
    let pair_accuracy: f64 = fields.next().unwrap().parse().unwrap();

    // Pull the sweep's row for the same multiplier out of runs.csv. The
    // header is part of the reporting contract, so indices are fixed.
    let runs = String::from_utf8(read(&dir.join("reports/runs.csv"))).unwrap();
    assert_eq!(
        runs.lines().next(),
        Some("run_id,mode,lambda_prime,bpp,accuracy,t_pre,t_assign,t_enc,t_dec,t_task")
    );
    let (mode_col, lambda_col, bpp_col, acc_col) = (1, 2, 3, 4);
    let sweep_row = runs
        .lines()
        .skip(1)
        .map(|line| line.split(',').collect::<Vec<_>>())
        .find(|f| f[mode_col] == "mfiba" && f[lambda_col] == "0.1")
        .expect("the sweep ran the 0.1 multiplier");
    let sweep_bpp: f64 = sweep_row[bpp_col].parse().unwrap();
    let sweep_accuracy: f64 = sweep_row[acc_col].parse().unwrap();

    assert_eq!(
        pair_bpp, sweep_bpp,
        "coded-pair rate diverged from the sweep's"
    );
    assert_eq!(
        pair_accuracy, sweep_accuracy,
        "coded-pair accuracy diverged from the sweep's"
    );
}

#[test]
fn calibrate_is_idempotent_and_embeds_the_config_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    ok(&mfiba(dir, &["synth", "--config", "config.json"]));
    ok(&mfiba(
        dir,
        &["calibrate", "--config", "config.json", "--out", "m1.json"],
    ));
    ok(&mfiba(
        dir,
        &["calibrate", "--config", "config.json", "--out", "m2.json"],
    ));
    assert_eq!(read(&dir.join("m1.json")), read(&dir.join("m2.json")));

    let model: serde_json::Value = serde_json::from_slice(&read(&dir.join("m1.json"))).unwrap();
    assert_eq!(model["config"]["synth"]["channels"], 4);
    assert!(model["alpha"].as_f64().unwrap() > 0.0);
    assert!(model["diagnostics"].is_object());
}

#[test]
fn predicted_weights_sum_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    ok(&mfiba(
        dir,
        &["synth", "--config", "config.json", "--count", "1"],
    ));
    let out = ok(&mfiba(
        dir,
        &[
            "weights",
            "pyramids/pyr_00000.fpyr",
            "--config",
            "config.json",
        ],
    ));
    let block: serde_json::Value = serde_json::from_str(&out).unwrap();
    let weights: Vec<f64> = block["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .collect();
    assert_eq!(weights.len(), 4, "n=2 plus pool gives four scales");
    let sum: f64 = weights.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12, "weights sum to {sum}");
    assert!(weights.iter().all(|&w| w >= 0.0));
    assert_eq!(block["provenance"], "predicted");
}

#[test]
fn missing_model_file_exits_nonzero_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let stderr = fails(&mfiba(
        dir,
        &[
            "allocate",
            "--lambda",
            "0.1",
            "--model",
            "nowhere/missing-model.json",
        ],
    ));
    assert!(
        stderr.contains("nowhere/missing-model.json"),
        "diagnostic does not name the path: {stderr}"
    );
}

#[test]
fn empty_corpus_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::create_dir(dir.join("nothing")).unwrap();
    let stderr = fails(&mfiba(dir, &["calibrate", "--pyramids", "nothing"]));
    assert!(
        stderr.contains("no pyramid files") && stderr.contains("nothing"),
        "unexpected diagnostic: {stderr}"
    );
}

#[test]
fn bdrate_of_identical_curves_is_exactly_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let curve = "mode,bpp,accuracy\n\
                 mfiba,1.0,0.70\n\
                 mfiba,2.0,0.80\n\
                 mfiba,4.0,0.90\n\
                 mfiba,8.0,0.95\n";
    std::fs::write(dir.join("c.csv"), curve).unwrap();
    let out = ok(&mfiba(dir, &["bdrate", "c.csv", "c.csv"]));
    assert_eq!(out.trim(), "0.000%");
}

#[test]
fn bdrate_requires_a_mode_pick_on_mixed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let curves = "mode,bpp,accuracy\n\
                  mfiba,1.0,0.70\n\
                  uniform,1.1,0.68\n";
    std::fs::write(dir.join("c.csv"), curves).unwrap();
    let stderr = fails(&mfiba(dir, &["bdrate", "c.csv", "c.csv"]));
    assert!(stderr.contains("--mode"), "unexpected diagnostic: {stderr}");
}

#[test]
fn unknown_config_fields_are_rejected_with_the_file_named() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("bad.json"), r#"{"lambda_st": [0.1]}"#).unwrap();
    let stderr = fails(&mfiba(
        dir,
        &["synth", "--config", "bad.json", "--count", "1"],
    ));
    assert!(
        stderr.contains("bad.json") && stderr.contains("lambda_st"),
        "unexpected diagnostic: {stderr}"
    );
}

#[test]
fn decoded_pyramids_land_next_to_the_stream_without_clobbering() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    ok(&mfiba(
        dir,
        &["synth", "--config", "config.json", "--count", "1"],
    ));
    ok(&mfiba(
        dir,
        &[
            "encode",
            "pyramids/pyr_00000.fpyr",
            "--phi",
            "8",
            "--out",
            "pyramids/pyr_00000.fcmb",
        ],
    ));
    let out = ok(&mfiba(dir, &["decode", "pyramids/pyr_00000.fcmb"]));
    assert_eq!(out.trim(), "pyramids/pyr_00000.dec.fpyr");
    assert!(
        dir.join("pyramids/pyr_00000.fpyr").exists(),
        "the original pyramid must survive a decode next to it"
    );
    let original = read(&dir.join("pyramids/pyr_00000.fpyr"));
    let decoded = read(&dir.join("pyramids/pyr_00000.dec.fpyr"));
    assert_ne!(original, decoded, "phi 8 coding is lossy");
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[test]
fn reports_embed_the_configuration_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_small_config(dir);
    ok(&mfiba(dir, &["synth", "--config", "config.json"]));
    ok(&mfiba(dir, &["calibrate", "--config", "config.json"]));
    ok(&mfiba(
        dir,
        &[
            "evaluate",
            "--pyramid",
            "pyramids/pyr_00000.fpyr",
            "--modes",
            "mfiba",
            "--config",
            "config.json",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&read(&dir.join("reports/report.json"))).unwrap();
    assert_eq!(report["config"]["synth"]["height0"], 16);
    // The sidecar of an encode carries the snapshot too.
    ok(&mfiba(
        dir,
        &[
            "encode",
            "pyramids/pyr_00000.fpyr",
            "--phi",
            "4",
            "--out",
            "s.fcmb",
            "--config",
            "config.json",
        ],
    ));
    let meta = read(&dir.join("s.fcmb.meta.json"));
    assert!(find_subsequence(&meta, b"\"height0\": 16").is_some());
}

#[test]
fn help_lists_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&mfiba(tmp.path(), &["--help"]));
    for name in [
        "synth",
        "calibrate",
        "weights",
        "allocate",
        "encode",
        "decode",
        "evaluate",
        "bdrate",
        "sweep",
    ] {
        assert!(out.contains(name), "--help does not mention {name}");
    }
}
