use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bpslda::model::{load_model, TopicColumns};
use tempfile::TempDir;

fn bpslda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpslda")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small generated regression corpus plus a model trained on it.
struct Fixture {
    dir: TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

fn fixture(task: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let model = dir.path().join("model.txt");
    let out = bpslda(&[
        "gen", "--task", task, "--num-docs", "120", "--vocab-size", "15", "--num-topics", "3",
        "--words-per-doc", "25", "--seed", "3", "--output", s(&corpus), "--truth", s(&dir.path().join("truth.txt")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bpslda(&[
        "train", "--corpus", s(&corpus), "--model", s(&model), "--task", task, "--num-topics", "3", "--epochs", "2",
        "--minibatch-size", "20", "--deterministic", "--threads", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Fixture { dir, corpus, model }
}

#[test]
fn train_writes_loadable_model_and_epoch_losses() {
    let f = fixture("regression");
    let model = load_model(&f.model).unwrap();
    assert_eq!(model.phi.num_topics(), 3);
    assert_eq!(model.vocab_size(), 15);
    let again = bpslda(&["train", "--corpus", s(&f.corpus), "--model", s(&f.dir.path().join("m2")), "--num-topics", "3", "--epochs", "4"]);
    let lines: Vec<String> = stdout(&again).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let (epoch, loss) = line.split_once('\t').unwrap();
        assert_eq!(epoch, (i + 1).to_string());
        assert!(loss.parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn unsupervised_and_classification_train() {
    for task in ["unsup", "classification"] {
        let f = fixture(task);
        let model = load_model(&f.model).unwrap();
        assert_eq!(model.u.is_some(), task == "classification");
    }
}

#[test]
fn missing_corpus_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bpslda(&["train", "--corpus", s(&dir.path().join("absent.txt")), "--model", s(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
    assert_eq!(bpslda(&["train"]).status.code(), Some(2));
}

#[test]
fn diverging_run_reports_minibatch() {
    let f = fixture("regression");
    let out = bpslda(&["train", "--corpus", s(&f.corpus), "--model", s(&f.dir.path().join("m")), "--num-topics", "3", "--mu0", "1e6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mini-batch"));
}

#[test]
fn infer_prints_one_line_per_document() {
    let f = fixture("regression");
    let three = f.dir.path().join("three.txt");
    let text = fs::read_to_string(&f.corpus).unwrap();
    fs::write(&three, text.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let out = bpslda(&["infer", "--model", s(&f.model), "--corpus", s(&three)]);
    assert!(out.status.success());
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], i.to_string());
        assert_eq!(fields.len(), 1 + 1 + 3);
        let sum: f64 = fields[2..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn infer_rejects_out_of_vocabulary_ids() {
    let f = fixture("regression");
    let bad = f.dir.path().join("bad.txt");
    fs::write(&bad, "0.5 1:2 15:1\n").unwrap();
    assert_eq!(bpslda(&["infer", "--model", s(&f.model), "--corpus", s(&bad)]).status.code(), Some(2));
}

#[test]
fn eval_perfect_predictions_and_guards() {
    let f = fixture("regression");
    // Relabel every document with the model's own prediction.
    let out = bpslda(&["infer", "--model", s(&f.model), "--corpus", s(&f.corpus)]);
    let predictions: Vec<String> = stdout(&out).lines().map(|l| l.split('\t').nth(1).unwrap().to_owned()).collect();
    let relabeled: Vec<String> = fs::read_to_string(&f.corpus)
        .unwrap()
        .lines()
        .zip(&predictions)
        .map(|(line, y)| format!("{y} {}", line.split_once(' ').unwrap().1))
        .collect();
    let perfect = f.dir.path().join("perfect.txt");
    fs::write(&perfect, relabeled.join("\n")).unwrap();
    let out = bpslda(&["eval", "--model", s(&f.model), "--corpus", s(&perfect), "--metric", "pr2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "pr2\t1.0\t120\n");

    let auc = bpslda(&["eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--metric", "auc"]);
    assert_eq!(auc.status.code(), Some(2));
    let sparsity = bpslda(&["eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--metric", "sparsity"]);
    assert!(stdout(&sparsity).starts_with("sparsity\t"));
}

#[test]
fn eval_cross_validation_rows() {
    let f = fixture("regression");
    let out = bpslda(&[
        "eval", "--corpus", s(&f.corpus), "--metric", "pr2", "--folds", "5", "--num-topics", "3", "--epochs", "1",
        "--deterministic", "--threads", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[..5].iter().enumerate().all(|(i, l)| l.starts_with(&format!("pr2_fold{i}\t"))));
    assert!(lines[5].starts_with("pr2\t"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture("regression");
    let cfg = f.dir.path().join("run.conf");
    fs::write(&cfg, "num_topics = 4\nepochs = 3\nmu0 = 0.02\n").unwrap();
    let model = f.dir.path().join("m");
    let out = bpslda(&["train", "--corpus", s(&f.corpus), "--model", s(&model), "--config", s(&cfg), "--epochs", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);
    assert_eq!(load_model(&model).unwrap().phi.num_topics(), 4);

    fs::write(&cfg, "topics = 4\n").unwrap();
    let out = bpslda(&["train", "--corpus", s(&f.corpus), "--model", s(&model), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deterministic_training_is_bit_identical() {
    let f = fixture("classification");
    let a = f.dir.path().join("a");
    let b = f.dir.path().join("b");
    for m in [&a, &b] {
        let out = bpslda(&[
            "train", "--corpus", s(&f.corpus), "--model", s(m), "--task", "classification", "--num-topics", "3", "--epochs", "2",
            "--seed", "5", "--deterministic", "--threads", "1",
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gradcheck_passes_and_catches_sign_flip() {
    let first = bpslda(&["gradcheck", "--seed", "4"]);
    assert_eq!(first.status.code(), Some(0), "{}", stdout(&first));
    assert!(stdout(&first).contains("worst\t"));
    assert_eq!(bpslda(&["gradcheck", "--seed", "4"]).stdout, first.stdout);
    assert_eq!(bpslda(&["gradcheck", "--inject-sign-flip"]).status.code(), Some(1));
}
