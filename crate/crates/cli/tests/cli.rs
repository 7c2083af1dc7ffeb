use std::path::Path;
use std::process::{Command, Output};

use posetrain::features::relational_feature;
use posetrain::io::{read_records, read_svm};
use posetrain::pipeline::{pose_feature, PipelineConfig};
use posetrain::svm::select_index;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posetrain"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// A small corpus: 2 actions of 10 poses and 6 backgrounds.
fn small_corpus(dir: &Path) {
    std::fs::write(
        dir.join("small.cfg"),
        "# tiny corpus\nsynth.n_actions = 2\nsynth.poses_per_action = 10\nsynth.n_backgrounds = 6\n",
    )
    .unwrap();
    let o = run(dir, &["--config", "small.cfg", "--seed", "3", "synth", "--out", "corpus"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("Usage"));
}

#[test]
fn help_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    for sub in ["synth", "features", "train-svm", "candidates", "select", "cluster", "outliers", "pipeline", "eval"] {
        assert!(text(&o).contains(sub), "help lists {sub}");
    }
}

#[test]
fn unknown_config_key_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.cfg"), "svm.reg = 1\nsvm.nonsense = 2\n").unwrap();
    let o = run(d.path(), &["--config", "bad.cfg", "synth", "--out", "x"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("line 2"));
}

#[test]
fn eval_identical_files_gives_full_pck() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let o = run(d.path(), &["eval", "--gt", "corpus/ground_truth.jsonl", "--est", "corpus/ground_truth.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Head", "Shoulder", "Elbow", "Wrist", "Hip", "Knee", "Ankle", "Mean"]);
    let all: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(all[0], "all");
    assert!(all[1..].iter().all(|v| *v == "100.0"));
}

#[test]
fn cluster_rejects_too_few_features() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let o = run(d.path(), &["features", "--poses", "corpus/annotations.jsonl", "--out", "f.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let three: String = std::fs::read_to_string(d.path().join("f.jsonl")).unwrap().lines().take(3).map(|l| format!("{l}\n")).collect();
    std::fs::write(d.path().join("f3.jsonl"), three).unwrap();
    let o = run(d.path(), &["cluster", "--features", "f3.jsonl", "--out", "p.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("too few features"));
}

#[test]
fn missing_input_is_data_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["features", "--poses", "nope.jsonl", "--out", "f.jsonl"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_record_names_its_line() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let good = std::fs::read_to_string(d.path().join("corpus/annotations.jsonl")).unwrap();
    let mut lines: Vec<&str> = good.lines().collect();
    lines[1] = "{\"image_id\": \"x\"";
    std::fs::write(d.path().join("broken.jsonl"), lines.join("\n")).unwrap();
    let o = run(d.path(), &["features", "--poses", "broken.jsonl", "--out", "f.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("line 2"), "{}", text(&o));
}

#[test]
fn features_match_library() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let o = run(d.path(), &["features", "--poses", "corpus/annotations.jsonl", "--out", "f.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let recs = read_records(&d.path().join("corpus/annotations.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = std::fs::read_to_string(d.path().join("f.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), recs.len());
    for (r, row) in recs.iter().zip(&rows) {
        let expected = relational_feature(&r.skeleton().unwrap(), true);
        let got: Vec<f64> = serde_json::from_value(row["feature"].clone()).unwrap();
        assert_eq!(got, expected);
    }
}

#[test]
fn select_matches_library() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let o = run(d.path(), &["candidates", "--heatmaps", "corpus/heatmaps", "--out", "c.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let cands = read_records(&d.path().join("c.jsonl")).unwrap();
    let neg: Vec<_> = cands.iter().filter(|r| r.image_id.starts_with("bg_")).cloned().collect();
    posetrain::io::write_records(&d.path().join("neg.jsonl"), &neg).unwrap();
    let o = run(
        d.path(),
        &["--seed", "3", "train-svm", "--positives", "corpus/annotations.jsonl", "--negatives", "neg.jsonl", "--out", "m.svm"],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = run(d.path(), &["select", "--model", "m.svm", "--candidates", "c.jsonl", "--out", "s.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));

    let model = read_svm::<f64>(&d.path().join("m.svm")).unwrap();
    let cfg = PipelineConfig::default();
    let selected = read_records(&d.path().join("s.jsonl")).unwrap();
    let mut ids: Vec<&str> = cands.iter().map(|r| r.image_id.as_str()).collect();
    ids.dedup();
    let mut expected = Vec::new();
    for id in ids {
        let list: Vec<_> = cands
            .iter()
            .filter(|r| r.image_id == id)
            .map(|r| {
                let c = r.to_candidate().unwrap();
                let f = pose_feature(&c.skeleton, &cfg);
                (c, f)
            })
            .collect();
        if let Some(i) = select_index(&model, &list, 0.0).unwrap() {
            expected.push(list[i].0.skeleton.clone());
        }
    }
    let got: Vec<_> = selected.iter().map(|r| r.skeleton().unwrap()).collect();
    assert_eq!(got, expected);
}

#[test]
fn pipeline_writes_one_report_per_iteration() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let o = run(
        d.path(),
        &["--config", "small.cfg", "pipeline", "--data", "corpus", "--out", "run", "--scheme", "weakC", "--iterations", "2"],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    for t in 1..=2 {
        let report = std::fs::read_to_string(d.path().join(format!("run/report_iter{t}.txt"))).unwrap();
        assert!(report.contains("scheme\tweakC"));
        assert!(report.contains(&format!("iteration\t{t}")));
        assert!(d.path().join(format!("run/annotations_iter{t}.jsonl")).is_file());
    }
    assert!(!d.path().join("run/report_iter3.txt").exists());
}

#[test]
fn synth_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path());
    let first = std::fs::read(d.path().join("corpus/ground_truth.jsonl")).unwrap();
    let hm = std::fs::read(d.path().join("corpus/heatmaps/bg_000.hm")).unwrap();
    std::fs::remove_dir_all(d.path().join("corpus")).unwrap();
    small_corpus(d.path());
    assert_eq!(std::fs::read(d.path().join("corpus/ground_truth.jsonl")).unwrap(), first);
    assert_eq!(std::fs::read(d.path().join("corpus/heatmaps/bg_000.hm")).unwrap(), hm);
}
