mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::read_tree;

fn uqfair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqfair")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn generate_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, r, r2) = (tmp.path().join("d"), tmp.path().join("r"), tmp.path().join("r2"));
    ok(&uqfair(&["gen-synth", "--task", "classification", "--m", "80", "--l", "20", "--classes", "4", "--seed", "7", "--out", s(&d)]));
    assert!(d.join("manifest.json").is_file());
    let before = read_tree(&d);
    let manifest = d.join("manifest.json");
    ok(&uqfair(&["evaluate", "--manifest", s(&manifest), "--tau-step", "1", "--out", s(&r)]));
    assert_eq!(read_tree(&d), before, "evaluate touched its inputs");
    assert!(r.join("curves.csv").is_file());
    assert!(r.join("summary.json").is_file());
    let svgs = std::fs::read_dir(&r).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    // accuracy, balanced accuracy, macro AUC and four class accuracies
    assert_eq!(svgs, 7);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["thresholds"], 101);

    ok(&uqfair(&["evaluate", "--manifest", s(&manifest), "--tau-step", "1", "--out", s(&r2), "--threads", "3"]));
    assert_eq!(read_tree(&r), read_tree(&r2));
}

#[test]
fn train_and_predict_sixty_samples_per_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, m, p) = (tmp.path().join("d"), tmp.path().join("m"), tmp.path().join("p"));
    ok(&uqfair(&["gen-synth", "--task", "classification", "--m", "80", "--l", "20", "--classes", "4", "--seed", "7", "--out", s(&d)]));
    ok(&uqfair(&["train-toy", "--strategy", "groupdro", "--manifest", s(&d.join("manifest.json")), "--seed", "1", "--out", s(&m)]));
    ok(&uqfair(&["predict-toy", "--models", s(&m), "--out", s(&p)]));
    let tensors: Vec<_> = read_tree(&p).into_iter().filter(|(n, _)| n.ends_with(".uqt")).collect();
    assert_eq!(tensors.len(), 100);
    for (_, bytes) in &tensors {
        let t = uqfair::tensor::Tensor::decode(bytes).unwrap();
        assert_eq!(t.dims(), &[60, 4]);
    }
    let r = tmp.path().join("r");
    ok(&uqfair(&["evaluate", "--manifest", s(&p.join("manifest.json")), "--out", s(&r)]));
    assert!(r.join("curves.csv").is_file());
}

#[test]
fn every_task_and_measure_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str], &[&str])] = &[
        ("segmentation", &["--m", "3", "--l", "2", "--dims", "8,8,8", "--samples", "6"], &["entropy", "sample-var"]),
        ("segmentation", &["--m", "3", "--l", "2", "--dims", "8,8,8", "--samples", "6", "--precomputed"], &["entropy"]),
        ("regression", &["--m", "30", "--l", "10"], &["total-var"]),
        ("regression", &["--m", "30", "--l", "10", "--samples", "5", "--precomputed"], &["total-var"]),
        ("classification", &["--m", "30", "--l", "10"], &["entropy", "sample-var"]),
    ];
    for (k, (task, extra, measures)) in cases.iter().enumerate() {
        let d = tmp.path().join(format!("d{k}"));
        let mut args = vec!["gen-synth", "--task", task, "--seed", "3", "--out", s(&d)];
        args.extend_from_slice(extra);
        ok(&uqfair(&args));
        for measure in *measures {
            for norm in ["bound", "minmax"] {
                if *measure != "entropy" && norm == "bound" {
                    continue;
                }
                let r = tmp.path().join(format!("r{k}-{measure}-{norm}"));
                let manifest = d.join("manifest.json");
                ok(&uqfair(&["evaluate", "--manifest", s(&manifest), "--tau-step", "5", "--measure", measure, "--normalization", norm, "--out", s(&r)]));
                assert!(r.join("summary.json").is_file(), "{task} {measure} {norm}");
            }
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = tmp.path().join("r");

    let io = uqfair(&["evaluate", "--manifest", s(&missing), "--out", s(&out)]);
    assert_eq!(io.status.code(), Some(2));
    assert!(!io.stderr.is_empty() && io.stdout.is_empty());

    assert_eq!(uqfair(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(uqfair(&["gen-synth", "--task", "classification"]).status.code(), Some(1));
    assert_eq!(uqfair(&["gen-synth", "--task", "classification", "--m", "0", "--out", s(&out)]).status.code(), Some(1));

    let d = tmp.path().join("d");
    ok(&uqfair(&["gen-synth", "--task", "classification", "--m", "10", "--l", "5", "--out", s(&d)]));
    let manifest = d.join("manifest.json");
    assert_eq!(uqfair(&["evaluate", "--manifest", s(&manifest), "--tau-step", "7", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(uqfair(&["evaluate", "--manifest", s(&manifest), "--measure", "total-var", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(uqfair(&["train-toy", "--strategy", "fancy", "--manifest", s(&manifest), "--out", s(&out)]).status.code(), Some(1));
}

#[test]
fn generation_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = tmp.path().join(name);
        ok(&uqfair(&["gen-synth", "--task", "segmentation", "--m", "2", "--l", "2", "--dims", "8,8,8", "--samples", "4", "--seed", "11", "--out", s(&d)]));
        read_tree(&d)
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
}
