//! The full command-line pipeline driven in-process: generate a dataset,
//! train a GroupDRO ensemble, predict, evaluate, and list the outputs.

use std::path::Path;

fn uqfair(args: &[&str]) {
    let argv = std::iter::once("uqfair").chain(args.iter().copied());
    let code = uqfair::cli::run(argv);
    assert_eq!(code, 0, "uqfair {}", args.join(" "));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn run_example() {
    let root = std::env::temp_dir().join(format!("uqfair-pipeline-{}", std::process::id()));
    let (d, m, pr, r) = (root.join("d"), root.join("m"), root.join("p"), root.join("r"));
    uqfair(&["gen-synth", "--task", "classification", "--m", "80", "--l", "20", "--classes", "4", "--seed", "7", "--out", p(&d)]);
    uqfair(&["train-toy", "--strategy", "groupdro", "--manifest", p(&d.join("manifest.json")), "--seed", "1", "--epochs", "20", "--out", p(&m)]);
    uqfair(&["predict-toy", "--models", p(&m), "--out", p(&pr)]);
    uqfair(&["evaluate", "--manifest", p(&pr.join("manifest.json")), "--tau-step", "1", "--out", p(&r)]);

    let mut files: Vec<_> = std::fs::read_dir(&r).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    for f in files {
        println!("{}", f.to_string_lossy());
    }
    let summary = std::fs::read_to_string(r.join("summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    for c in v["curves"].as_array().unwrap().iter().take(3) {
        println!("{} {}: unfiltered gap {}", c["metric"], c["scope"], c["unfiltered"]["fg"]);
    }
    std::fs::remove_dir_all(&root).unwrap();
}

#[allow(dead_code)]
fn main() {
    run_example();
}
