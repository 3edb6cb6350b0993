use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dqg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let first = stderr.lines().next().expect("stderr has an error line");
    serde_json::from_str(first).expect("error line is JSON")
}

fn summary(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    let echo: Value = serde_json::from_str(lines[0]).unwrap();
    assert!(echo.get("config").is_some());
    serde_json::from_str(lines.last().unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.jsonl", "b.jsonl"] {
        summary(&dqg(&["synth", "--n", "30", "--seed", "9", "--output", name], dir.path()));
    }
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 30);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "# synthetic run\nn = 12\nseed = 3\noutput = c.jsonl\n").unwrap();
    let s = summary(&dqg(&["--config", "run.conf", "synth", "--n", "7"], dir.path()));
    assert_eq!(s["examples"], 7);

    std::fs::write(dir.path().join("bad.conf"), "colour = red\n").unwrap();
    let out = dqg(&["--config", "bad.conf", "synth"], dir.path());
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "config");
}

#[test]
fn usage_and_io_errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dqg(&["synth", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = dqg(&["synth", "--n", "5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out)["message"].as_str().unwrap().contains("--output"));

    let out = dqg(&["stats", "--input", "missing.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "io");

    std::fs::write(dir.path().join("broken.jsonl"), "{\"id\": 1}\n").unwrap();
    let out = dqg(&["stats", "--input", "broken.jsonl"], dir.path());
    assert_eq!(error_line(&out)["error"], "schema");
}

#[test]
fn reversed_generation_needs_labels() {
    let dir = tempfile::tempdir().unwrap();
    let line = r#"{"id":"u1","sentence":"The river flows north .","answer_start":16,"answer_text":"north","question":"Where does the river flow?","difficulty":null}"#;
    std::fs::write(dir.path().join("u.jsonl"), format!("{line}\n")).unwrap();
    summary(&dqg(&["synth", "--n", "40", "--seed", "2", "--output", "c.jsonl"], dir.path()));
    summary(&dqg(
        &[
            "train", "--train", "c.jsonl", "--dev", "c.jsonl", "--checkpoint", "m.ckpt", "--word-dim", "4",
            "--hidden", "4", "--position-dim", "2", "--difficulty-dim", "2", "--max-epochs", "1",
        ],
        dir.path(),
    ));
    let out = dqg(
        &["generate", "--checkpoint", "m.ckpt", "--input", "u.jsonl", "--output", "g.jsonl", "--difficulty", "reversed"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "contract");
    let ok = summary(&dqg(
        &["generate", "--checkpoint", "m.ckpt", "--input", "u.jsonl", "--output", "g.jsonl", "--difficulty", "hard"],
        dir.path(),
    ));
    assert_eq!(ok["generations"], 1);
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    summary(&dqg(&["synth", "--n", "120", "--seed", "5", "--output", "all.jsonl"], d));
    let labeled = summary(&dqg(
        &["label", "--input", "all.jsonl", "--output", "labeled.jsonl", "--report", "report.json", "--k", "3"],
        d,
    ));
    let counts = &labeled["counts"];
    let total: u64 = ["easy", "hard", "dropped"].iter().map(|k| counts[k].as_u64().unwrap()).sum();
    assert_eq!(total, 120);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 3);

    let stats = summary(&dqg(&["stats", "--input", "all.jsonl"], d));
    assert!(stats["avg_qword_dist_easy"].as_f64().unwrap() < stats["avg_qword_dist_hard"].as_f64().unwrap());

    // Split the gold-labeled corpus by line: 80 train, 10 dev, 30 test.
    let text = std::fs::read_to_string(d.join("all.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let write = |name: &str, part: &[&str]| std::fs::write(d.join(name), part.join("\n") + "\n").unwrap();
    write("train.jsonl", &lines[..80]);
    write("dev.jsonl", &lines[80..90]);
    write("test.jsonl", &lines[90..]);

    let trained = summary(&dqg(
        &[
            "train", "--train", "train.jsonl", "--dev", "dev.jsonl", "--checkpoint", "m.ckpt", "--log", "log.jsonl",
            "--word-dim", "8", "--hidden", "8", "--position-dim", "4", "--difficulty-dim", "2",
            "--max-decode-len", "6", "--max-epochs", "3", "--learning-rate", "0.01", "--batch-size", "4",
        ],
        d,
    ));
    assert!(trained["dev_perplexity"].as_f64().unwrap().is_finite());
    let log = std::fs::read_to_string(d.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), trained["epochs_run"].as_u64().unwrap() as usize);

    for (mode, file) in [("gold", "g.jsonl"), ("reversed", "r.jsonl")] {
        let g = summary(&dqg(
            &["generate", "--checkpoint", "m.ckpt", "--input", "test.jsonl", "--output", file, "--difficulty", mode],
            d,
        ));
        assert_eq!(g["generations"], 30);
    }
    let eval = summary(&dqg(
        &[
            "eval", "--dataset", "test.jsonl", "--generations", "g.jsonl", "--reversed", "r.jsonl", "--train",
            "train.jsonl", "--output", "eval.json",
        ],
        d,
    ));
    assert_eq!(eval["bleu"].as_array().unwrap().len(), 4);
    for v in eval["bleu"].as_array().unwrap() {
        assert!((0.0..=100.0).contains(&v.as_f64().unwrap()));
    }
    assert_eq!(eval["difficulty"].as_array().unwrap().len(), 2);
    assert_eq!(eval["gap"]["readers"].as_array().unwrap().len(), 2);
    assert!(d.join("eval.json").exists());

    // Readers fit on the test set itself are refused.
    let out = dqg(
        &["eval", "--dataset", "test.jsonl", "--generations", "g.jsonl", "--train", "test.jsonl"],
        d,
    );
    assert!(!out.status.success());
    assert_eq!(error_line(&out)["error"], "labeling");
}

#[test]
fn gradcheck_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let s = summary(&dqg(&["gradcheck", "--seed", "3"], dir.path()));
    assert_eq!(s["pass"], true);
    let out = dqg(&["gradcheck", "--seed", "3", "--tolerance", "1e-30"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "gradcheck");
}
