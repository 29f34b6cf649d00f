use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use sgbseg::model::Model;
use sgbseg::slm::{Dims, ModelOptions, ModelParams};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sgbseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgbseg")).args(args).output().unwrap()
}

fn train_toy(out: &Path, extra: &[&str]) -> Output {
    let corpus = fixture("toy.txt");
    let mut args = vec![
        "train",
        corpus.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--embed-dim",
        "16",
        "--hidden-dim",
        "16",
        "--t-max",
        "3",
    ];
    args.extend_from_slice(extra);
    sgbseg(&args)
}

fn segment(model: &Path, decoder: &str) -> String {
    let input = fixture("toy.txt");
    let out = sgbseg(&[
        "segment",
        "-m",
        model.to_str().unwrap(),
        input.to_str().unwrap(),
        "--decoder",
        decoder,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn boundaries(line: &str) -> Vec<usize> {
    let mut pos = 0;
    let mut out = Vec::new();
    for w in line.split(' ') {
        pos += w.chars().count();
        out.push(pos);
    }
    out
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let out = train_toy(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(t0.elapsed().as_secs() < 60);
    for f in ["model.sgb", "vocab.txt", "report.csv", "manifest.json", "config.txt"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 11);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["embed_dim"], "16");
    assert_eq!(manifest["command"][1], "train");
}

#[test]
fn missing_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sgbseg(&["train", "/no/such/corpus.txt", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = sgbseg(&["segment", "-m", "/no/such/model.sgb", fixture("toy.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = sgbseg(&["eval", "/no/gold.txt", "/no/pred.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sgbseg(&["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--epochs", "1"]).status.success());
    fs::write(dir.path().join("model.sgb"), b"XXXXjunk").unwrap();
    let out = sgbseg(&["segment", "-m", dir.path().to_str().unwrap(), fixture("toy.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format"));
}

#[test]
fn decoders_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(train_toy(a.path(), &[]).status.success());
    assert!(train_toy(b.path(), &[]).status.success());
    assert_eq!(
        fs::read(a.path().join("model.sgb")).unwrap(),
        fs::read(b.path().join("model.sgb")).unwrap()
    );

    let sgb_c = segment(a.path(), "sgb-c");
    assert_eq!(sgb_c, segment(b.path(), "sgb-c"));
    let fwd = segment(a.path(), "fwd");
    let source = fs::read_to_string(fixture("toy.txt")).unwrap();
    for ((c, f), raw) in sgb_c.lines().zip(fwd.lines()).zip(source.lines()) {
        assert_eq!(c.replace(' ', ""), raw);
        let cb = boundaries(c);
        assert!(boundaries(f).iter().all(|x| cb.contains(x)), "{c} vs {f}");
    }
    for d in ["sgb-a", "bwd"] {
        assert_eq!(segment(a.path(), d).lines().count(), source.lines().count());
    }
}

#[test]
fn zero_learning_rate_keeps_init() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--lr", "0", "--epochs", "2", "--seed", "9"]).status.success());
    let model = Model::load_dir(dir.path()).unwrap();
    let dims = Dims { vocab: model.vocab.len(), embed: 16, hidden: 16 };
    let init = ModelParams::init(dims, ModelOptions::default(), 9, sgbseg::slm::INIT_RANGE);
    assert_eq!(model.params, init);
}

#[test]
fn segment_to_file_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--epochs", "1"]).status.success());
    let target = dir.path().join("seg.txt");
    let out = sgbseg(&[
        "segment",
        "-m",
        dir.path().join("model.sgb").to_str().unwrap(),
        fixture("toy.txt").to_str().unwrap(),
        "-o",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&target).unwrap().lines().count(), 20);
    assert!(dir.path().join("seg.txt.manifest.json").is_file());
}

#[test]
fn eval_and_analyze_reports() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixture("gold.txt");
    let pred = fixture("pred.txt");
    let out = sgbseg(&["eval", gold.to_str().unwrap(), pred.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("F1 = 0.5000"));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0.500000,0.500000,0.500000,8,8,4"));

    let out = sgbseg(&["analyze", gold.to_str().unwrap(), pred.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let jsonl = fs::read_to_string(dir.path().join("ambiguity.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2);
    assert!(jsonl.contains("\"overlap\""));
    assert!(dir.path().join("manifest.json").is_file());

    let out = sgbseg(&["stats", gold.to_str().unwrap(), "--csv"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "word_types,word_tokens,char_types,char_tokens\n7,8,8,12\n");
}

#[test]
fn mismatched_text_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("other.txt");
    fs::write(&other, "你 好\n我 们\n").unwrap();
    let out = sgbseg(&["eval", fixture("gold.txt").to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn punctuation_setting_keeps_delimiters() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_toy(dir.path(), &["--epochs", "1", "--setting", "3"]).status.success());
    let input = dir.path().join("in.txt");
    fs::write(&input, "我从小学唱歌，他在学校。\n\n学\n").unwrap();
    let out = sgbseg(&["segment", "-m", dir.path().to_str().unwrap(), input.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains(" ， ") && lines[0].ends_with(" 。"));
    assert_eq!(lines[1], "");
    assert_eq!(lines[2], "学");
}
