use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use a2net::{Payload, TensorFile};
use serde_json::Value;

fn a2net(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2net"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn count_resnet26_total() {
    let out = a2net(&["count", "--arch", "resnet26"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    let flops = r["outputs"]["total"]["flops"].as_u64().unwrap() as f64;
    assert!((flops / 8.3e9 - 1.0).abs() < 0.03, "{flops}");
    assert_eq!(r["outputs"]["delta"]["flops"], 0);
    assert!(r["timings_ms"]["count"].is_number());
}

#[test]
fn count_deltas_for_a2_and_nl() {
    let delta = |spec: &str| {
        let r = json(&a2net(&["count", "--arch", "resnet26", "--insert", spec]));
        r["outputs"]["delta"]["flops"].as_i64().unwrap() as f64
    };
    assert!((delta("a2@conv4x1") / 463e6 - 1.0).abs() < 0.01);
    assert!((delta("nl@conv2×1") / 40.69e9 - 1.0).abs() < 0.02);
}

#[test]
fn repeated_insert_flags_accumulate() {
    let r = json(&a2net(&[
        "count",
        "--arch",
        "resnet26",
        "--insert",
        "a2@conv3x2",
        "--insert",
        "a2@conv4x2",
    ]));
    let d = r["outputs"]["delta"]["flops"].as_i64().unwrap() as f64;
    assert!((d / 1.85e9 - 1.0).abs() < 0.02, "{d}");
    assert_eq!(
        r["outputs"]["insertions"],
        serde_json::json!(["a2@conv3x2", "a2@conv4x2"])
    );
}

#[test]
fn count_csv_and_table_formats() {
    let out = a2net(&["count", "--arch", "resnet29", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("stage,layer,output,params,flops,peak_intermediate_bytes")
    );
    assert!(text.lines().any(|l| l.starts_with("total,,,")));
    assert!(text.lines().all(|l| l.split(',').count() == 6));

    let out = a2net(&[
        "count",
        "--arch",
        "resnet26",
        "--format",
        "table",
        "--insert",
        "a2@conv4x1",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("conv4.a2_block2"), "{text}");
    assert!(text.contains("+462422016"));
}

#[test]
fn convention_can_be_inline_or_file() {
    let inline = json(&a2net(&[
        "count",
        "--arch",
        "resnet26",
        "--convention",
        r#"{"include_bn": false, "include_bias": false}"#,
    ]));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("conv.json");
    std::fs::write(&file, r#"{"include_bn": false, "include_bias": false}"#).unwrap();
    let from_file = json(&a2net(&[
        "count",
        "--arch",
        "resnet26",
        "--convention",
        path(&file),
    ]));
    assert_eq!(inline["outputs"]["total"], from_file["outputs"]["total"]);
    let with_bn = json(&a2net(&["count", "--arch", "resnet26"]));
    assert!(
        inline["outputs"]["total"]["params"].as_u64()
            < with_bn["outputs"]["total"]["params"].as_u64()
    );
    assert_eq!(
        inline["outputs"]["total"]["flops"],
        with_bn["outputs"]["total"]["flops"]
    );
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["count", "--arch", "vgg16"][..],
        &["count", "--arch", "resnet26", "--insert", "a2conv4"],
        &["count", "--arch", "resnet26", "--insert", "a2@conv9x1"],
        &["count", "--arch", "resnet26", "--insert", "a2@conv4x3"],
        &[
            "count",
            "--arch",
            "resnet26",
            "--convention",
            "{\"bogus\": 1}",
        ],
        &["equiv", "--shape", "4,4"],
        &["gradcheck", "--target", "everything"],
        &["frobnicate"],
    ] {
        let out = a2net(args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn arch_descriptor_feeds_back_into_count() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("net.json");
    let out = a2net(&[
        "arch",
        "--arch",
        "resnet26",
        "--insert",
        "a2@conv4x1",
        "--out",
        path(&file),
    ]);
    assert_eq!(code(&out), 0);
    let from_file = json(&a2net(&["count", "--arch", path(&file)]));
    let inserted = json(&a2net(&[
        "count",
        "--arch",
        "resnet26",
        "--insert",
        "a2@conv4x1",
    ]));
    assert_eq!(from_file["outputs"]["total"], inserted["outputs"]["total"]);
}

#[test]
fn equiv_examples() {
    let out = a2net(&[
        "equiv",
        "--c",
        "16",
        "--shape",
        "4,4,4",
        "--m",
        "4",
        "--n",
        "4",
        "--precision",
        "double",
    ]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert!(r["outputs"]["max_abs_divergence"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["pass"], true);

    let r = json(&a2net(&["equiv", "--m", "1", "--n", "1"]));
    assert!(r["outputs"]["max_abs_divergence"].as_f64().unwrap() < 1e-14);

    let out = a2net(&["equiv", "--precision", "single"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["outputs"]["tolerance"], 1e-4);

    let out = a2net(&["equiv", "--tolerance", "1e-20", "--seed", "5"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn gradcheck_targets_pass_and_emit_jsonl() {
    for target in ["primitives", "block", "tiny-net"] {
        let out = a2net(&[
            "gradcheck",
            "--target",
            target,
            "--seed",
            "0",
            "--trials",
            "2",
        ]);
        assert_eq!(code(&out), 0, "{target}");
        let text = String::from_utf8(out.stdout).unwrap();
        let lines: Vec<Value> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let (summary, reports) = lines.split_last().unwrap();
        assert_eq!(summary["command"], "gradcheck");
        assert_eq!(
            summary["outputs"]["checks"].as_u64().unwrap() as usize,
            reports.len()
        );
        assert!(reports
            .iter()
            .all(|r| r["pass"] == true && r["op"].is_string()));
        assert!(reports.iter().any(|r| r["seed"] == 1));
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_a2net"))
            .args([
                "gradcheck",
                "--target",
                "primitives",
                "--trials",
                "4",
                "--no-timings",
            ])
            .env("A2NET_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn bench_reports_model_prediction() {
    let start = Instant::now();
    let out = a2net(&[
        "bench", "--c", "512", "--shape", "8,14,14", "--m", "128", "--n", "128", "--repeat", "1",
        "--warmup", "0",
    ]);
    assert!(
        start.elapsed() < Duration::from_secs(10),
        "{:?}",
        start.elapsed()
    );
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["outputs"]["model"]["predicted_cheaper"], "left");
    assert_eq!(
        r["outputs"]["measured_orders"],
        serde_json::json!(["left", "right"])
    );
    assert!(r["timings_ms"]["left.median"].is_number());
    let left = r["outputs"]["model"]["left"]["flops"].as_u64().unwrap();
    let right = r["outputs"]["model"]["right"]["flops"].as_u64().unwrap();
    assert!(left < right);

    let r = json(&a2net(&[
        "bench", "--c", "8", "--shape", "1,1,3", "--m", "4", "--n", "4", "--orders", "right",
    ]));
    assert_eq!(r["outputs"]["model"]["predicted_cheaper"], "right");
    assert_eq!(
        r["outputs"]["measured_orders"],
        serde_json::json!(["right"])
    );
}

#[test]
fn forward_with_zero_output_map_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params");
    assert_eq!(
        code(&a2net(&["init", "--c", "16", "--out", path(&params)])),
        0
    );
    let y = dir.path().join("y.a2tn");
    let out = a2net(&[
        "forward",
        "--params",
        path(&params),
        "--input",
        "random:3",
        "--shape",
        "2,3,4",
        "--out",
        path(&y),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = TensorFile::read(&y).unwrap();
    assert_eq!(first.dims, vec![16, 2, 3, 4]);
    assert!(matches!(first.payload, Payload::Single(_)));

    // The output is itself a valid input, and W_out = 0 leaves it untouched.
    let z = dir.path().join("z.a2tn");
    let out = a2net(&[
        "forward",
        "--params",
        path(&params),
        "--input",
        path(&y),
        "--order",
        "right",
        "--out",
        path(&z),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&z).unwrap(), std::fs::read(&y).unwrap());
    assert_eq!(json(&out)["outputs"]["order_resolved"], "right");
}

#[test]
fn forward_auto_resolves_left_at_conv4_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p");
    assert_eq!(
        code(&a2net(&[
            "init",
            "--c",
            "512",
            "--dense",
            "--out",
            path(&params)
        ])),
        0
    );
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(params.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["m"], 128);
    assert_eq!(manifest["biases"], true);
    let out = a2net(&[
        "forward",
        "--params",
        path(&params.join("manifest.json")),
        "--input",
        "random:1",
        "--shape",
        "8,14,14",
        "--out",
        path(&dir.path().join("o.a2tn")),
    ]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["outputs"]["order_requested"], "auto");
    assert_eq!(r["outputs"]["order_resolved"], "left");
}

#[test]
fn forward_in_double_precision() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p");
    a2net(&[
        "init",
        "--c",
        "8",
        "--m",
        "2",
        "--n",
        "3",
        "--dense",
        "--precision",
        "double",
        "--out",
        path(&params),
    ]);
    let out_path = dir.path().join("o.a2tn");
    let out = a2net(&[
        "forward",
        "--params",
        path(&params),
        "--input",
        "random:2",
        "--shape",
        "1,2,2",
        "--precision",
        "double",
        "--out",
        path(&out_path),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        json(&out)["outputs"]["macs"],
        (8 * 2 + 2 * 8 * 3 + 8 * 2) * 4 + 2 * 2 * 3 * 4
    );
    assert!(matches!(
        TensorFile::read(&out_path).unwrap().payload,
        Payload::Double(_)
    ));
}

#[test]
fn forward_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p");
    a2net(&["init", "--c", "8", "--out", path(&params)]);
    let o = dir.path().join("o.a2tn");
    let no_shape = a2net(&[
        "forward",
        "--params",
        path(&params),
        "--input",
        "random:1",
        "--out",
        path(&o),
    ]);
    assert_eq!(code(&no_shape), 2);
    let wrong_c = dir.path().join("x.a2tn");
    TensorFile::new(vec![4, 1, 1, 2], Payload::Single(vec![0.0; 8]))
        .unwrap()
        .write(&wrong_c)
        .unwrap();
    let out = a2net(&[
        "forward",
        "--params",
        path(&params),
        "--input",
        path(&wrong_c),
        "--out",
        path(&o),
    ]);
    assert_eq!(code(&out), 2);
    let missing = a2net(&[
        "forward",
        "--params",
        path(&dir.path().join("nope")),
        "--input",
        "random:1",
        "--shape",
        "1,1,1",
        "--out",
        path(&o),
    ]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn init_rejects_indivisible_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let out = a2net(&["init", "--c", "10", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
}
