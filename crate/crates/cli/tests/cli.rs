use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy").join(name)
}

fn seqtag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqtag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(dir: &Path, extra: &[&str]) -> PathBuf {
    let model = dir.join("m.sqtg");
    let train = toy("train.conll");
    let dev = toy("dev.conll");
    let mut args = vec![
        "--quiet",
        "train",
        "--train",
        s(&train),
        "--dev",
        s(&dev),
        "--hidden",
        "8",
        "--max-epochs",
        "2",
        "--embedding-dim",
        "16",
        "--out",
        s(&model),
    ];
    args.extend_from_slice(extra);
    let o = seqtag(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

#[test]
fn train_writes_model_log_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path(), &[]);
    assert!(model.exists());
    let log = std::fs::read_to_string(dir.path().join("m.sqtg.log")).unwrap();
    assert!(log.starts_with("epoch\tloss\tdev_f1\tseconds"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.sqtg.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "seqtag");
    assert_eq!(manifest["config"]["hidden"], 8);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn manifest_replays_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path(), &[]);
    let manifest = dir.path().join("m.sqtg.manifest.json");
    let again = dir.path().join("again.sqtg");
    let o = seqtag(&["--quiet", "--config", s(&manifest), "train", "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn missing_embeddings_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let train = toy("train.conll");
    let out = dir.path().join("x.sqtg");
    let o = seqtag(&[
        "--quiet",
        "train",
        "--train",
        s(&train),
        "--embeddings",
        "/no/such/vectors.vec",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/vectors.vec"));
    assert!(!out.exists());
}

#[test]
fn missing_train_flag_is_usage_error() {
    let o = seqtag(&["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--train"));
}

#[test]
fn unknown_flag_exits_one() {
    let o = seqtag(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tagging_empty_input_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path(), &[]);
    let empty = dir.path().join("empty.conll");
    std::fs::write(&empty, "").unwrap();
    let o = seqtag(&["--quiet", "tag", "--model", s(&model), "--input", s(&empty)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn tagging_handles_unseen_words_and_pos() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path(), &[]);
    let input = dir.path().join("new.conll");
    std::fs::write(&input, "Zyxw ZZ B-NP\nqqq XX I-NP\n\n").unwrap();
    let o = seqtag(&["--quiet", "tag", "--model", s(&model), "--input", s(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("Zyxw ZZ B-NP "));
}

#[test]
fn tag_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small(dir.path(), &[]);
    let tagged = dir.path().join("tagged.conll");
    let dev = toy("dev.conll");
    let o = seqtag(&["--quiet", "tag", "--model", s(&model), "--input", s(&dev), "--output", s(&tagged)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("tagged.conll.manifest.json").exists());
    let o = seqtag(&["eval", "--input", s(&tagged)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ALL"));
}

fn perfect_file(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(toy("dev.conll")).unwrap();
    let doubled: String = text
        .lines()
        .map(|l| match l.split_whitespace().last() {
            Some(label) => format!("{} {}\n", l, label),
            None => "\n".to_string(),
        })
        .collect();
    let p = dir.join("perfect.conll");
    std::fs::write(&p, doubled).unwrap();
    p
}

#[test]
fn eval_of_perfect_predictions_is_100() {
    let dir = tempfile::tempdir().unwrap();
    let p = perfect_file(dir.path());
    let o = seqtag(&["eval", "--input", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let all = stdout(&o).lines().find(|l| l.starts_with("ALL")).unwrap().to_string();
    assert!(all.trim_end().ends_with("100.00"), "{}", all);
}

#[test]
fn eval_type_filter_drops_other_types() {
    let dir = tempfile::tempdir().unwrap();
    let p = perfect_file(dir.path());
    let o = seqtag(&["eval", "--input", s(&p), "--types", "PER,LOC"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("PER"));
    assert!(!out.contains("ORG"));
    assert!(!out.contains("MISC"));
}

#[test]
fn eval_rejects_rows_without_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.conll");
    std::fs::write(&p, "Hà N B-NP B-LOC B-LOC\nNội N I-NP I-LOC\n\n").unwrap();
    let o = seqtag(&["eval", "--input", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stats_counts_toy_corpus() {
    let train = toy("train.conll");
    let o = seqtag(&["stats", "--kv", s(&train)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("sentences=50"), "{}", out);
    assert!(out.contains("tokens=405"), "{}", out);
}

#[test]
fn selfcheck_passes_and_corruption_fails() {
    let o = seqtag(&["--quiet", "selfcheck", "--seeds", "2", "--cases", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = seqtag(&["--quiet", "selfcheck", "--seeds", "1", "--cases", "10", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ablate_presets_have_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let train = toy("train.conll");
    let dev = toy("dev.conll");
    for (preset, rows) in [("table4", 2), ("table7", 7)] {
        let out_dir = dir.path().join(preset);
        let o = seqtag(&[
            "--quiet",
            "ablate",
            "--train",
            s(&train),
            "--dev",
            s(&dev),
            "--preset",
            preset,
            "--hidden",
            "4",
            "--embedding-dim",
            "8",
            "--max-epochs",
            "1",
            "--out-dir",
            s(&out_dir),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let tsv = std::fs::read_to_string(out_dir.join(format!("{}.tsv", preset))).unwrap();
        let names: std::collections::BTreeSet<&str> =
            tsv.lines().skip(1).filter_map(|l| l.split('\t').next()).collect();
        assert_eq!(names.len(), rows, "{}", tsv);
        assert!(out_dir.join("manifest.json").exists());
    }
}

#[test]
fn ablate_unknown_preset_is_rejected() {
    let train = toy("train.conll");
    let o = seqtag(&["--quiet", "ablate", "--train", s(&train), "--preset", "table9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("table9"));
}
